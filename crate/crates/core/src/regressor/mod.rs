//! CReLU multilayer perceptron regressing `(vx, vy, px, py)` from feature
//! vectors, trained with ADAM, weight decay, dropout and early stopping on
//! the velocity outputs.

mod adam;
mod gradcheck;
mod mlp;
mod train;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::cues::FeatureVector;
use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use gradcheck::{check_gradients, check_random_topologies, gradient_check};
pub use mlp::{crelu, dropout_masks, loss, Layer, Mlp, MlpTopology, Scalar, OUTPUT_DIM};
pub use train::{train, EpochStats, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Train against per-target standardized outputs; the scaling is folded
    /// back into the output layer of the saved model.
    pub standardize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
            dropout_rate: 0.2,
            epochs: 2000,
            batch_size: 50,
            early_stop_patience: 500,
            seed: 0,
            standardize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("ADAM betas must lie in [0,1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0,1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("early_stop_patience must be at least 1"));
        }
        Ok(())
    }
}

/// One training example; targets are `(vx, vy, px, py)` in m/s and m.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub targets: [f64; OUTPUT_DIM],
}

/// Per-feature affine normalization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
        }
    }

    /// Column statistics of `rows`; constant columns get unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.collect();
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; dim];
        for r in &rows {
            for (m, v) in means.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in stds.iter_mut().zip(r.iter()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardization { means, stds }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.means.len() != dim || self.stds.len() != dim {
            return Err(Error::invalid("standardization does not match the input dimension"));
        }
        if self.means.iter().any(|m| !m.is_finite()) || self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("standardization must be finite with positive scales"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub seed: u64,
    pub best_epoch: usize,
    /// Validation velocity MSE at `best_epoch`.
    pub val_mse: f64,
}

/// A trained network together with its input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct RegressorModel {
    layout_version: String,
    standardization: Standardization,
    net: Mlp<f64>,
    train_meta: TrainMeta,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layout_version: String,
    topology: MlpTopology,
    feature_standardization: Standardization,
    layers: Vec<LayerFile>,
    train_meta: TrainMeta,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<RegressorModel> for ModelFile {
    fn from(m: RegressorModel) -> Self {
        ModelFile {
            layout_version: m.layout_version,
            topology: *m.net.topology(),
            feature_standardization: m.standardization,
            layers: m
                .net
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            train_meta: m.train_meta,
        }
    }
}

impl TryFrom<ModelFile> for RegressorModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        f.topology.validate()?;
        let dims = f.topology.layer_dims();
        if dims.len() != f.layers.len() {
            return Err(Error::invalid("model file layer count does not match its topology"));
        }
        let layers = dims
            .iter()
            .zip(f.layers)
            .map(|(&(i, o), l)| {
                let weights = Array2::from_shape_vec((o, i), l.weights)
                    .map_err(|_| Error::invalid("model file weight matrix has the wrong size"))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Mlp::from_layers(f.topology, layers)?;
        RegressorModel::new(f.layout_version, f.feature_standardization, net, f.train_meta)
    }
}

impl RegressorModel {
    pub fn new(
        layout_version: String,
        standardization: Standardization,
        net: Mlp<f64>,
        train_meta: TrainMeta,
    ) -> Result<Self> {
        standardization.validate(net.topology().input_dim)?;
        Ok(RegressorModel {
            layout_version,
            standardization,
            net,
            train_meta,
        })
    }

    pub fn layout_version(&self) -> &str {
        &self.layout_version
    }

    pub fn topology(&self) -> &MlpTopology {
        self.net.topology()
    }

    pub fn net(&self) -> &Mlp<f64> {
        &self.net
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    /// Inference-mode prediction `(vx, vy, px, py)`.
    pub fn predict(&self, features: &FeatureVector) -> Result<[f64; OUTPUT_DIM]> {
        if features.layout_version != self.layout_version {
            return Err(Error::invalid(format!(
                "feature layout {:?} does not match model layout {:?}",
                features.layout_version, self.layout_version
            )));
        }
        self.predict_values(&features.values)
    }

    pub fn predict_values(&self, x: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
        if x.len() != self.net.topology().input_dim {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.net.topology().input_dim,
                x.len()
            )));
        }
        self.net.forward_one(&self.standardization.apply(x))
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_contract() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero_patience = TrainConfig {
            early_stop_patience: 0,
            ..Default::default()
        };
        assert!(zero_patience.validate().is_err());
        let bad: std::result::Result<TrainConfig, _> = serde_json::from_str(r#"{"lr": 0.1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn standardization_fit() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardization::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.stds, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 6.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn model_json_round_trip() {
        let topo = MlpTopology::new(6, 2, 5).unwrap();
        let net = Mlp::<f64>::glorot(topo, &mut ChaCha8Rng::seed_from_u64(9));
        let std = Standardization {
            means: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            stds: vec![1.0, 2.0, 0.3, 1.0 / 3.0, 7.0, 1e-3],
        };
        let meta = TrainMeta {
            seed: 9,
            best_epoch: 17,
            val_mse: 0.1 + 0.2,
        };
        let m = RegressorModel::new("v1/test".into(), std, net, meta).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: RegressorModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let x = [0.3, -1.0, 2.5, 0.0, 1e-4, 3.0];
        assert_eq!(back.predict_values(&x).unwrap(), m.predict_values(&x).unwrap());
    }

    #[test]
    fn model_file_shape_checked() {
        let topo = MlpTopology::new(2, 1, 2).unwrap();
        let m = RegressorModel::new(
            "v".into(),
            Standardization::identity(2),
            Mlp::zeros(topo),
            TrainMeta {
                seed: 0,
                best_epoch: 0,
                val_mse: 0.0,
            },
        )
        .unwrap();
        let mut v = serde_json::to_value(&m).unwrap();
        v["layers"][0]["weights"] = serde_json::json!([1.0]);
        assert!(serde_json::from_value::<RegressorModel>(v).is_err());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let topo = MlpTopology::new(2, 1, 2).unwrap();
        let m = RegressorModel::new(
            "a".into(),
            Standardization::identity(2),
            Mlp::zeros(topo),
            TrainMeta {
                seed: 0,
                best_epoch: 0,
                val_mse: 0.0,
            },
        )
        .unwrap();
        let fv = FeatureVector {
            layout_version: "b".into(),
            values: vec![0.0, 0.0],
        };
        assert!(m.predict(&fv).is_err());
    }
}
