use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::hash3;
use super::render::{render_sequence, SyntheticGroundTruth};
use super::{SceneSpec, VehicleSpec, MIN_DEPTH_M};
use crate::dataset::{save_pgm, vehicle_id, write_json, DatasetIndex, SequenceManifest};
use crate::error::{Error, Result};
use crate::geometry::{RangeClass, VehicleAnnotation, VideoSequence};

pub const INDEX_FILE: &str = "dataset.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
const AXES: &str = "x=lateral,y=longitudinal";
/// Consecutive sequences sharing one drive (and background).
const SEQUENCES_PER_DRIVE: usize = 4;

/// Target share of Near / Medium / Far vehicles by last-frame distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub near: f64,
    pub medium: f64,
    pub far: f64,
}

impl Default for DistanceProfile {
    fn default() -> Self {
        DistanceProfile {
            near: 0.12,
            medium: 0.65,
            far: 0.23,
        }
    }
}

impl DistanceProfile {
    pub fn uniform() -> Self {
        DistanceProfile {
            near: 1.0,
            medium: 1.0,
            far: 1.0,
        }
    }

    /// `default`, `uniform`, or three comma-separated weights.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::default()),
            "uniform" => Ok(Self::uniform()),
            other => {
                let parts: Vec<f64> = other
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::invalid(format!("cannot parse distance profile {other:?}")))?;
                let [near, medium, far] = parts[..] else {
                    return Err(Error::invalid("a distance profile needs three weights"));
                };
                let p = DistanceProfile { near, medium, far };
                p.validate()?;
                Ok(p)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.near, self.medium, self.far];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("distance profile weights must be non-negative with a positive sum"));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` sequences.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let w = [self.near, self.medium, self.far];
        let total: f64 = w.iter().sum();
        let exact: Vec<f64> = w.iter().map(|v| v / total * n as f64).collect();
        let mut counts = [0usize; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// A scene definition with its dataset identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub sequence_id: String,
    pub drive_id: String,
    pub spec: SceneSpec,
}

/// A rendered scene.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub manifest: SequenceManifest,
    pub sequence: VideoSequence,
    pub truth: SyntheticGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruthFile {
    pub vehicle_id: String,
    pub boxes: Vec<[f64; 4]>,
    pub velocity: [f64; 2],
    pub position: [f64; 2],
    pub distance: f64,
}

/// Ground-truth sidecar with full per-frame tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub sequence_id: String,
    pub axes: String,
    pub vehicles: Vec<VehicleTruthFile>,
}

fn distance_range(class: RangeClass) -> (f64, f64) {
    match class {
        RangeClass::Near => (6.0, 20.0),
        RangeClass::Medium => (20.0, 45.0),
        RangeClass::Far => (45.0, 80.0),
    }
}

/// Draws one single-vehicle scene whose last-frame distance falls in `class`.
fn sample_scene<R: Rng>(rng: &mut R, class: RangeClass, width: usize, height: usize, background_seed: u64) -> SceneSpec {
    let mut spec = SceneSpec::new(width, height, background_seed, Vec::new());
    let span = (spec.frames - 1) as f64 / spec.fps;
    let (lo, hi) = distance_range(class);
    let d = rng.gen_range(lo..hi);
    let x_last = rng.gen_range(-0.15..0.15) * d;
    let z_last = (d * d - x_last * x_last).sqrt();
    let width_m = rng.gen_range(1.6..2.0);
    let height_m = rng.gen_range(1.4..1.7);
    let texture_seed = rng.gen();
    let (vx, vz) = loop {
        let vx: f64 = rng.gen_range(-1.0..1.0);
        let vz: f64 = rng.gen_range(-5.0..5.0);
        let z0 = z_last - vz * span;
        let x0 = x_last - vx * span;
        if z0 >= MIN_DEPTH_M.max(5.0) && x0.abs() <= 0.3 * z0 {
            break (vx, vz);
        }
    };
    spec.vehicles.push(VehicleSpec {
        x: x_last - vx * span,
        z: z_last - vz * span,
        vx,
        vz,
        width_m,
        height_m,
        texture_seed,
    });
    spec
}

/// Scene definitions for `n` sequences. Range classes follow `profile` in a
/// seeded shuffled order; each sequence draws from its own stream of `seed`.
pub fn generate_scenes(
    n: usize,
    profile: &DistanceProfile,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<Vec<GeneratedScene>> {
    if n == 0 {
        return Err(Error::invalid("at least one sequence is required"));
    }
    profile.validate()?;
    let counts = profile.counts(n);
    let mut classes: Vec<RangeClass> = RangeClass::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&c, k)| std::iter::repeat(c).take(k))
        .collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(classes
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let drive = i / SEQUENCES_PER_DRIVE;
            let background_seed = hash3(seed, drive as i64, 0x6b67);
            GeneratedScene {
                sequence_id: format!("seq_{i:04}"),
                drive_id: format!("drive_{drive:04}"),
                spec: sample_scene(&mut rng, class, width, height, background_seed),
            }
        })
        .collect())
}

fn frame_file(t: usize) -> String {
    format!("frame_{t:03}.pgm")
}

impl GeneratedScene {
    pub fn render(&self) -> Result<GeneratedSequence> {
        let (mut sequence, truth) = render_sequence(&self.spec)?;
        sequence.sequence_id = self.sequence_id.clone();
        sequence.drive_id = self.drive_id.clone();
        let annotations = truth
            .vehicles
            .iter()
            .map(|v| VehicleAnnotation {
                last_frame_box: *v.boxes.last().expect("at least two frames"),
                velocity: Some(v.velocity),
                position: Some(v.position),
            })
            .collect();
        let manifest = SequenceManifest {
            sequence_id: self.sequence_id.clone(),
            drive_id: self.drive_id.clone(),
            fps: self.spec.fps,
            frame_files: (0..self.spec.frames).map(frame_file).collect(),
            annotations,
        };
        Ok(GeneratedSequence {
            manifest,
            sequence,
            truth,
        })
    }
}

impl GeneratedSequence {
    pub fn ground_truth_file(&self) -> GroundTruthFile {
        GroundTruthFile {
            sequence_id: self.manifest.sequence_id.clone(),
            axes: AXES.to_string(),
            vehicles: self
                .truth
                .vehicles
                .iter()
                .enumerate()
                .map(|(i, v)| VehicleTruthFile {
                    vehicle_id: vehicle_id(&self.manifest.sequence_id, i),
                    boxes: v.boxes.iter().map(|b| [b.x, b.y, b.w, b.h]).collect(),
                    velocity: v.velocity,
                    position: v.position,
                    distance: v.distance,
                })
                .collect(),
        }
    }

    /// Writes frames, manifest and ground truth under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for (name, frame) in self.manifest.frame_files.iter().zip(&self.sequence.frames) {
            save_pgm(&dir.join(name), frame)?;
        }
        write_json(&dir.join(GROUND_TRUTH_FILE), &self.ground_truth_file())?;
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, &self.manifest)?;
        Ok(path)
    }
}

/// Renders `n` sequences into `out_dir/<sequence_id>/` and writes the
/// dataset index; returns the index path.
pub fn generate_dataset(
    out_dir: &Path,
    n: usize,
    profile: &DistanceProfile,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<PathBuf> {
    let scenes = generate_scenes(n, profile, seed, width, height)?;
    let manifests = scenes
        .par_iter()
        .map(|scene| {
            let rendered = scene.render()?;
            rendered.write(&out_dir.join(&scene.sequence_id))?;
            Ok(format!("{}/{MANIFEST_FILE}", scene.sequence_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let index = DatasetIndex {
        manifests,
        axes: Some(AXES.to_string()),
    };
    let path = out_dir.join(INDEX_FILE);
    write_json(&path, &index)?;
    Ok(path)
}
