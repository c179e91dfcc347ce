use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use velocam::cues::FeatureConfig;
use velocam::dataset::read_json;
use velocam::ensemble::{AreaSplitConfig, EnsembleConfig, Profile, RouteTrain};
use velocam::regressor::TrainConfig;
use velocam::tracker::TrackerConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibrate {
    Calibrate,
}

/// Fixed area thresholds, or `"calibrate"` to fit them on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSetting {
    Calibrate(Calibrate),
    Fixed(AreaSplitConfig),
}

impl Default for SplitSetting {
    fn default() -> Self {
        SplitSetting::Calibrate(Calibrate::Calibrate)
    }
}

/// Every tunable of the pipeline in one document. Command-line flags take
/// precedence over values read from the file, which take precedence over
/// built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub tracker: TrackerConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub split: SplitSetting,
    pub profile: Profile,
    pub route_train: RouteTrain,
    pub folds: usize,
    pub ablation_seeds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        PipelineConfig {
            version: CONFIG_VERSION,
            tracker: TrackerConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            split: SplitSetting::default(),
            profile: e.profile,
            route_train: e.route_train,
            folds: e.folds,
            ablation_seeds: e.ablation_seeds,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => read_json(p).with_context(|| format!("reading config {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(velocam::Error::InvalidArgument(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.tracker.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        self.ensemble().validate()?;
        if let SplitSetting::Fixed(s) = &self.split {
            s.validate()?;
        }
        Ok(())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            profile: self.profile,
            route_train: self.route_train,
            folds: self.folds,
            ablation_seeds: self.ablation_seeds,
        }
    }
}
