use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use velocam::cues::FeatureRecord;
use velocam::dataset::{read_json, write_json, LoadedManifest};
use velocam::ensemble::{
    calibrate_area_thresholds, routing_disagreement, train_ensemble, AreaSplitConfig, EnsembleSample, Profile,
    RangeEnsemble, RouteTrain, MANIFEST_FILE,
};
use velocam::evaluation::Prediction;
use velocam::regressor::Sample;
use velocam::RangeClass;

use super::{dataset, invalid};
use crate::config::{PipelineConfig, SplitSetting};

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Labelled dataset index or manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Area split JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Full,
    Ablation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RouteArg {
    Bucketed,
    All,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled dataset index or manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Features JSON from `extract-features`.
    #[arg(long)]
    pub features: PathBuf,
    /// Receives the fold models and `ensemble.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Area split JSON; overrides the config `split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Shorthand for `--profile ablation`.
    #[arg(long, conflicts_with = "profile")]
    pub ablation: bool,
    #[arg(long, value_enum)]
    pub route_train: Option<RouteArg>,
    /// Overrides train.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// `ensemble.json` written by `train`, or its directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset index or manifest with last-frame boxes.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Predictions JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn calibration_pairs(manifests: &[LoadedManifest]) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for lm in manifests {
        for (i, a) in lm.manifest.annotations.iter().enumerate() {
            let d = a
                .distance()
                .ok_or_else(|| invalid(format!("{} has no ground-truth position", lm.manifest.vehicle_id(i))))?;
            pairs.push((a.last_frame_box.area(), d));
        }
    }
    Ok(pairs)
}

fn fit_split(manifests: &[LoadedManifest]) -> Result<AreaSplitConfig> {
    let pairs = calibration_pairs(manifests)?;
    let split = calibrate_area_thresholds(&pairs)?;
    let wrong = routing_disagreement(&pairs, &split)?;
    eprintln!(
        "area split near >= {:.1} px², far <= {:.1} px²; {wrong} of {} vehicles routed outside their range",
        split.near_area,
        split.far_area,
        pairs.len()
    );
    Ok(split)
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let split = fit_split(&dataset(&args.dataset)?)?;
    write_json(&args.out, &split)?;
    Ok(())
}

fn load_features(path: &Path) -> Result<HashMap<String, FeatureRecord>> {
    let records: Vec<FeatureRecord> = read_json(path)?;
    let mut map = HashMap::with_capacity(records.len());
    for r in records {
        let id = r.vehicle_id.clone();
        if map.insert(id.clone(), r).is_some() {
            return Err(invalid(format!("{} lists {id} twice", path.display())));
        }
    }
    Ok(map)
}

pub fn train(args: &TrainArgs, mut cfg: PipelineConfig) -> Result<()> {
    if args.ablation {
        cfg.profile = Profile::Ablation;
    }
    if let Some(p) = args.profile {
        cfg.profile = match p {
            ProfileArg::Full => Profile::Full,
            ProfileArg::Ablation => Profile::Ablation,
        };
    }
    if let Some(r) = args.route_train {
        cfg.route_train = match r {
            RouteArg::Bucketed => RouteTrain::Bucketed,
            RouteArg::All => RouteTrain::All,
        };
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;

    let manifests = dataset(&args.dataset)?;
    let features = load_features(&args.features)?;
    let mut samples = Vec::new();
    for lm in &manifests {
        let m = &lm.manifest;
        for (i, a) in m.annotations.iter().enumerate() {
            let id = m.vehicle_id(i);
            let (Some(v), Some(p)) = (a.velocity, a.position) else {
                return Err(invalid(format!("{id} lacks ground-truth velocity or position")));
            };
            let record = features
                .get(&id)
                .ok_or_else(|| invalid(format!("no features for {id} in {}", args.features.display())))?;
            samples.push(EnsembleSample {
                vehicle_id: id,
                drive_id: m.drive_id.clone(),
                last_frame_area: a.last_frame_box.area(),
                sample: Sample {
                    features: record.features(),
                    targets: [v[0], v[1], p[0], p[1]],
                },
            });
        }
    }

    let split = match (&args.split, &cfg.split) {
        (Some(path), _) => read_json::<AreaSplitConfig>(path)?,
        (None, SplitSetting::Fixed(s)) => *s,
        (None, SplitSetting::Calibrate(_)) => fit_split(&manifests)?,
    };
    split.validate()?;
    let ensemble = train_ensemble(&samples, &split, &cfg.ensemble(), &cfg.train)?;
    let manifest = ensemble.save(&args.out_dir)?;
    let counts: Vec<String> = RangeClass::ALL
        .iter()
        .map(|&r| format!("{r} {}", ensemble.models(r).len()))
        .collect();
    eprintln!(
        "trained {} models on {} vehicles ({}); wrote {}",
        ensemble.model_count(),
        samples.len(),
        counts.join(", "),
        manifest.display()
    );
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model_path = if args.model.is_dir() {
        args.model.join(MANIFEST_FILE)
    } else {
        args.model.clone()
    };
    let ensemble = RangeEnsemble::load(&model_path)?;
    let manifests = dataset(&args.dataset)?;
    let features = load_features(&args.features)?;
    let mut predictions = Vec::new();
    for lm in &manifests {
        let m = &lm.manifest;
        for (i, a) in m.annotations.iter().enumerate() {
            let id = m.vehicle_id(i);
            let record = features
                .get(&id)
                .ok_or_else(|| invalid(format!("no features for {id} in {}", args.features.display())))?;
            let out = ensemble.predict(&record.features(), a.last_frame_box.area())?.output;
            predictions.push(Prediction {
                vehicle_id: id,
                velocity: [out[0], out[1]],
                position: [out[2], out[3]],
            });
        }
    }
    write_json(&args.out, &predictions)?;
    eprintln!("wrote {} predictions to {}", predictions.len(), args.out.display());
    Ok(())
}
