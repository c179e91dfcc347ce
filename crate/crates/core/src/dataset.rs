//! Sequence manifests, frame files and small I/O helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, VehicleAnnotation, VideoSequence};

/// One JSON document per sequence. Frame paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub drive_id: String,
    pub fps: f64,
    pub frame_files: Vec<String>,
    pub annotations: Vec<VehicleAnnotation>,
}

impl SequenceManifest {
    pub fn vehicle_id(&self, index: usize) -> String {
        vehicle_id(&self.sequence_id, index)
    }
}

pub fn vehicle_id(sequence_id: &str, index: usize) -> String {
    format!("{sequence_id}_v{index}")
}

/// Index over several manifests, written by the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub manifests: Vec<String>,
    /// Axis convention of velocity/position pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<String>,
}

/// A manifest together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: SequenceManifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn frame_paths(&self) -> Vec<PathBuf> {
        self.manifest
            .frame_files
            .iter()
            .map(|f| self.base_dir.join(f))
            .collect()
    }

    pub fn load_sequence(&self) -> Result<VideoSequence> {
        let frames = self
            .frame_paths()
            .iter()
            .map(|p| load_frame(p))
            .collect::<Result<Vec<_>>>()?;
        VideoSequence::new(
            frames,
            self.manifest.fps,
            self.manifest.sequence_id.clone(),
            self.manifest.drive_id.clone(),
        )
    }

    /// Dimensions of the first frame without decoding the rest.
    pub fn frame_dims(&self) -> Result<(usize, usize)> {
        let first = self
            .frame_paths()
            .into_iter()
            .next()
            .ok_or_else(|| Error::invalid(format!("{} lists no frames", self.manifest.sequence_id)))?;
        let (w, h) = image::image_dimensions(&first).map_err(|source| Error::Image {
            path: first.clone(),
            source,
        })?;
        Ok((w as usize, h as usize))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes through a sibling temporary file followed by a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let manifest: SequenceManifest = read_json(path)?;
    validate_manifest(&manifest).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedManifest { manifest, base_dir })
}

fn validate_manifest(m: &SequenceManifest) -> Result<()> {
    if !(m.fps > 0.0) {
        return Err(Error::invalid("fps must be positive"));
    }
    if m.frame_files.is_empty() {
        return Err(Error::invalid("frame_files is empty"));
    }
    for a in &m.annotations {
        a.last_frame_box.validate()?;
    }
    Ok(())
}

/// Loads either a single sequence manifest or a dataset index of manifests.
pub fn load_dataset(path: &Path) -> Result<Vec<LoadedManifest>> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("manifests").is_some() {
        let index: DatasetIndex = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        index
            .manifests
            .iter()
            .map(|m| load_manifest(&base.join(m)))
            .collect()
    } else {
        Ok(vec![load_manifest(path)?])
    }
}

/// Reads an 8-bit PNG or PGM frame; color images are converted to luma.
pub fn load_frame(path: &Path) -> Result<ImageFrame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(g) => ImageFrame::from_gray8(w, h, g.as_raw()),
        other => ImageFrame::from_rgb8(w, h, other.to_rgb8().as_raw()),
    }
}

/// Writes a binary PGM (P5).
pub fn save_pgm(path: &Path, frame: &ImageFrame) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend_from_slice(&frame.to_gray8());
    write_atomic(path, &bytes)
}
