use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use velocam::cues::{assemble_features, load_disparity_map, load_flow_field, FeatureConfig, FeatureRecord};
use velocam::dataset::{read_json, write_json, LoadedManifest};
use velocam::tracker::TrackFile;

use super::track::track_path;
use super::{dataset, invalid};
use crate::config::PipelineConfig;

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Dataset index or single sequence manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of track files written by `track`.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Features JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Flow maps at `<dir>/<sequence_id>/flow_NNN.flo`, field NNN mapping frame NNN to NNN+1.
    /// Enables the flow channel.
    #[arg(long)]
    pub flow_dir: Option<PathBuf>,
    /// Disparity maps at `<dir>/<sequence_id>/disp_NNN.pfm`, one per frame.
    /// Enables the depth channel.
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
}

pub fn flow_path(dir: &Path, sequence_id: &str, t: usize) -> PathBuf {
    dir.join(sequence_id).join(format!("flow_{t:03}.flo"))
}

pub fn depth_path(dir: &Path, sequence_id: &str, t: usize) -> PathBuf {
    dir.join(sequence_id).join(format!("disp_{t:03}.pfm"))
}

pub fn run(args: &ExtractArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut fcfg = cfg.features.clone();
    fcfg.include_flow |= args.flow_dir.is_some();
    fcfg.include_depth |= args.depth_dir.is_some();
    if fcfg.include_flow && args.flow_dir.is_none() {
        return Err(invalid("features.include_flow is set but no --flow-dir was given"));
    }
    if fcfg.include_depth && args.depth_dir.is_none() {
        return Err(invalid("features.include_depth is set but no --depth-dir was given"));
    }
    let manifests = dataset(&args.dataset)?;
    let per_sequence = manifests
        .par_iter()
        .map(|lm| sequence_features(lm, args, &fcfg))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<FeatureRecord> = per_sequence.into_iter().flatten().collect();
    write_json(&args.out, &records)?;
    eprintln!("wrote {} feature vectors to {}", records.len(), args.out.display());
    Ok(())
}

fn sequence_features(lm: &LoadedManifest, args: &ExtractArgs, fcfg: &FeatureConfig) -> Result<Vec<FeatureRecord>> {
    let m = &lm.manifest;
    if m.annotations.is_empty() {
        return Ok(Vec::new());
    }
    let (w, h) = lm.frame_dims()?;
    if (w as f64, h as f64) != (fcfg.image_width, fcfg.image_height) {
        return Err(invalid(format!(
            "{} has {w}x{h} frames but features.image_width/height are {}x{}",
            m.sequence_id, fcfg.image_width, fcfg.image_height
        )));
    }
    let n = m.frame_files.len();
    let flow = match &args.flow_dir {
        Some(dir) => Some(
            (0..n.saturating_sub(1))
                .map(|t| load_flow_field(&flow_path(dir, &m.sequence_id, t)))
                .collect::<velocam::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let depth = match &args.depth_dir {
        Some(dir) => Some(
            (0..n)
                .map(|t| load_disparity_map(&depth_path(dir, &m.sequence_id, t)))
                .collect::<velocam::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    (0..m.annotations.len())
        .map(|i| {
            let id = m.vehicle_id(i);
            let file: TrackFile = read_json(&track_path(&args.tracks, &id))?;
            if file.sequence_id != m.sequence_id {
                return Err(invalid(format!("track for {id} belongs to sequence {}", file.sequence_id)));
            }
            let track = file.to_track()?;
            if track.len() != n {
                return Err(invalid(format!("track for {id} has {} boxes for {n} frames", track.len())));
            }
            let fv = assemble_features(&track, flow.as_deref(), depth.as_deref(), fcfg)
                .with_context(|| format!("features for {id}"))?;
            Ok(FeatureRecord::new(id, fv))
        })
        .collect()
}
