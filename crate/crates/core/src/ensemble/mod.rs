//! Distance-bucketed training and prediction: vehicles are routed to a range
//! by last-frame box area, each range holds one network per validation fold,
//! and predictions average the fold networks.

mod folds;
mod split;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cues::FeatureVector;
use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};
use crate::geometry::RangeClass;
use crate::regressor::{train, MlpTopology, RegressorModel, Sample, TrainConfig, OUTPUT_DIM};

pub use folds::partition_folds;
pub use split::{
    calibrate_area_thresholds, classify_range_by_area, routing_disagreement, AreaSplitConfig,
    MIN_CALIBRATION_PER_CLASS,
};

pub const MANIFEST_FILE: &str = "ensemble.json";

/// Topology set: 3×40 / 4×60 / 4×70 per range, or 3×40 everywhere with
/// several seeds per fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Ablation,
}

/// Whether a range model trains on its own bucket or on every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteTrain {
    Bucketed,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub profile: Profile,
    pub route_train: RouteTrain,
    pub folds: usize,
    /// Seeds tried per fold under the ablation profile; the best validation
    /// error is kept.
    pub ablation_seeds: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            profile: Profile::Full,
            route_train: RouteTrain::Bucketed,
            folds: 5,
            ablation_seeds: 10,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("at least two folds are needed"));
        }
        if self.ablation_seeds == 0 {
            return Err(Error::invalid("ablation_seeds must be positive"));
        }
        Ok(())
    }

    pub fn topology(&self, range: RangeClass, input_dim: usize) -> Result<MlpTopology> {
        match self.profile {
            Profile::Full => MlpTopology::for_range(range, input_dim),
            Profile::Ablation => MlpTopology::new(input_dim, 3, 40),
        }
    }
}

/// A labelled vehicle ready for ensemble training.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    pub vehicle_id: String,
    pub drive_id: String,
    /// Last-frame box area in pixels².
    pub last_frame_area: f64,
    pub sample: Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeEnsemble {
    split: AreaSplitConfig,
    profile: Profile,
    models: [Vec<RegressorModel>; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangePrediction {
    pub range: RangeClass,
    /// `(vx, vy, px, py)`.
    pub output: [f64; OUTPUT_DIM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub split: AreaSplitConfig,
    pub ranges: RangePaths,
    pub profile: Profile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangePaths {
    pub near: Vec<String>,
    pub medium: Vec<String>,
    pub far: Vec<String>,
}

impl RangePaths {
    fn get_mut(&mut self, r: RangeClass) -> &mut Vec<String> {
        match r {
            RangeClass::Near => &mut self.near,
            RangeClass::Medium => &mut self.medium,
            RangeClass::Far => &mut self.far,
        }
    }

    fn get(&self, r: RangeClass) -> &[String] {
        match r {
            RangeClass::Near => &self.near,
            RangeClass::Medium => &self.medium,
            RangeClass::Far => &self.far,
        }
    }
}

impl RangeEnsemble {
    pub fn new(split: AreaSplitConfig, profile: Profile, models: [Vec<RegressorModel>; 3]) -> Result<Self> {
        split.validate()?;
        let layouts: Vec<&str> = models.iter().flatten().map(|m| m.layout_version()).collect();
        if layouts.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::invalid("ensemble models disagree on the feature layout"));
        }
        Ok(RangeEnsemble { split, profile, models })
    }

    pub fn split(&self) -> &AreaSplitConfig {
        &self.split
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn models(&self, range: RangeClass) -> &[RegressorModel] {
        &self.models[range as usize]
    }

    pub fn model_count(&self) -> usize {
        self.models.iter().map(Vec::len).sum()
    }

    /// Routes by area and averages the range's fold models component-wise.
    pub fn predict(&self, features: &FeatureVector, last_frame_area: f64) -> Result<RangePrediction> {
        let range = classify_range_by_area(last_frame_area, &self.split)?;
        let models = self.models(range);
        if models.is_empty() {
            return Err(Error::MissingModel(range));
        }
        let outputs = models
            .iter()
            .map(|m| m.predict(features))
            .collect::<Result<Vec<_>>>()?;
        let mut output = [0.0; OUTPUT_DIM];
        let mut column = Vec::with_capacity(outputs.len());
        for (c, o) in output.iter_mut().enumerate() {
            column.clear();
            column.extend(outputs.iter().map(|p| p[c]));
            // summing in sorted order makes the mean independent of model order
            column.sort_by(f64::total_cmp);
            *o = column.iter().sum::<f64>() / column.len() as f64;
        }
        Ok(RangePrediction { range, output })
    }

    /// Writes one JSON file per model and the manifest into `dir`; returns
    /// the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let mut ranges = RangePaths::default();
        for r in RangeClass::ALL {
            for (i, m) in self.models(r).iter().enumerate() {
                let name = format!("{}_{i}.json", r.name());
                m.save(&dir.join(&name))?;
                ranges.get_mut(r).push(name);
            }
        }
        let manifest = EnsembleManifest {
            split: self.split,
            ranges,
            profile: self.profile,
        };
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a manifest; model paths are relative to its directory.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: EnsembleManifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut models: [Vec<RegressorModel>; 3] = Default::default();
        for r in RangeClass::ALL {
            for p in manifest.ranges.get(r) {
                models[r as usize].push(RegressorModel::load(&base.join(p))?);
            }
        }
        Self::new(manifest.split, manifest.profile, models)
    }
}

fn model_seed(base: u64, range: RangeClass, fold: usize, rep: usize) -> u64 {
    let tag = (range as u64 + 1) << 32 | (fold as u64) << 16 | rep as u64;
    base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Sample indices used by one fold model.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub range: RangeClass,
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn complement(folds: &[Vec<usize>], skip: usize) -> Vec<usize> {
    let mut v: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != skip)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect();
    v.sort_unstable();
    v
}

/// Fold assignment of every model [`train_ensemble`] trains. Each fold
/// model validates on one drive-disjoint fold and trains on the rest; empty
/// buckets get no folds.
pub fn training_plan(
    samples: &[EnsembleSample],
    split: &AreaSplitConfig,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<FoldPlan>> {
    cfg.validate()?;
    split.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let routed = samples
        .iter()
        .map(|s| classify_range_by_area(s.last_frame_area, split))
        .collect::<Result<Vec<_>>>()?;
    let drives = |idx: &[usize]| idx.iter().map(|&i| samples[i].drive_id.as_str()).collect::<Vec<_>>();

    let mut jobs = Vec::new();
    let global_folds = match cfg.route_train {
        RouteTrain::All => Some(partition_folds(
            &drives(&(0..samples.len()).collect::<Vec<_>>()),
            cfg.folds,
            seed,
        )?),
        RouteTrain::Bucketed => None,
    };
    for range in RangeClass::ALL {
        let bucket: Vec<usize> = (0..samples.len()).filter(|&i| routed[i] == range).collect();
        if bucket.is_empty() {
            continue;
        }
        match &global_folds {
            None => {
                let local = partition_folds(&drives(&bucket), cfg.folds, seed ^ range as u64)
                    .map_err(|e| Error::invalid(format!("{range} bucket: {e}")))?;
                let folds: Vec<Vec<usize>> =
                    local.iter().map(|f| f.iter().map(|&i| bucket[i]).collect()).collect();
                for fold in 0..cfg.folds {
                    jobs.push(FoldPlan {
                        range,
                        fold,
                        train: complement(&folds, fold),
                        val: folds[fold].clone(),
                    });
                }
            }
            Some(folds) => {
                for fold in 0..cfg.folds {
                    let in_bucket: Vec<usize> =
                        folds[fold].iter().copied().filter(|&i| routed[i] == range).collect();
                    let val = if in_bucket.is_empty() { folds[fold].clone() } else { in_bucket };
                    jobs.push(FoldPlan {
                        range,
                        fold,
                        train: complement(folds, fold),
                        val,
                    });
                }
            }
        }
    }

    Ok(jobs)
}

/// Trains `cfg.folds` networks for every populated range bucket, following
/// [`training_plan`]. Models train in parallel on the current rayon pool.
pub fn train_ensemble(
    samples: &[EnsembleSample],
    split: &AreaSplitConfig,
    cfg: &EnsembleConfig,
    train_cfg: &TrainConfig,
) -> Result<RangeEnsemble> {
    train_cfg.validate()?;
    let jobs = training_plan(samples, split, cfg, train_cfg.seed)?;
    let input_dim = samples[0].sample.features.len();
    let reps = match cfg.profile {
        Profile::Full => 1,
        Profile::Ablation => cfg.ablation_seeds,
    };
    let trained = jobs
        .par_iter()
        .map(|job| {
            let topology = cfg.topology(job.range, input_dim)?;
            let tr: Vec<Sample> = job.train.iter().map(|&i| samples[i].sample.clone()).collect();
            let va: Vec<Sample> = job.val.iter().map(|&i| samples[i].sample.clone()).collect();
            let mut best: Option<RegressorModel> = None;
            for rep in 0..reps {
                let c = TrainConfig {
                    seed: model_seed(train_cfg.seed, job.range, job.fold, rep),
                    ..train_cfg.clone()
                };
                let m = train(&tr, &va, topology, &c)?.model;
                if best.as_ref().map_or(true, |b| m.train_meta().val_mse < b.train_meta().val_mse) {
                    best = Some(m);
                }
            }
            Ok((job.range, best.expect("at least one repetition")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models: [Vec<RegressorModel>; 3] = Default::default();
    for (range, m) in trained {
        models[range as usize].push(m);
    }
    RangeEnsemble::new(*split, cfg.profile, models)
}
