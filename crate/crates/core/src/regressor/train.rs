use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::mlp::{dropout_masks, Mlp, MlpTopology, OUTPUT_DIM};
use super::{RegressorModel, Sample, Standardization, TrainConfig, TrainMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean minibatch objective (standardized units when targets are standardized).
    pub train_loss: f64,
    /// Mean squared velocity error `‖v - v̂‖²` on the validation set, m²/s².
    pub val_velocity_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    pub history: Vec<EpochStats>,
}

fn design_matrix(samples: &[Sample], s: &Standardization) -> Array2<f64> {
    let dim = s.means.len();
    let mut x = Array2::zeros((samples.len(), dim));
    for (mut row, sample) in x.axis_iter_mut(Axis(0)).zip(samples) {
        row.assign(&ndarray::Array1::from(s.apply(&sample.features.values)));
    }
    x
}

/// Trains one network with minibatch ADAM, keeping the parameters of the
/// epoch with the lowest validation velocity MSE.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    topology: MlpTopology,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    topology.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let layout = &train_set[0].features.layout_version;
    for s in train_set.iter().chain(val_set) {
        if &s.features.layout_version != layout {
            return Err(Error::invalid("samples do not share one feature layout"));
        }
        if s.features.len() != topology.input_dim {
            return Err(Error::invalid(format!(
                "sample has {} features, topology expects {}",
                s.features.len(),
                topology.input_dim
            )));
        }
        if s.features.values.iter().chain(&s.targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature or target"));
        }
    }

    let x_std = Standardization::fit(
        train_set.iter().map(|s| s.features.values.as_slice()),
        topology.input_dim,
    );
    let y_std = if cfg.standardize_targets {
        Standardization::fit(train_set.iter().map(|s| s.targets.as_slice()), OUTPUT_DIM)
    } else {
        Standardization::identity(OUTPUT_DIM)
    };
    let x_train = design_matrix(train_set, &x_std);
    let mut y_train = Array2::zeros((train_set.len(), OUTPUT_DIM));
    for (mut row, s) in y_train.axis_iter_mut(Axis(0)).zip(train_set) {
        row.assign(&ndarray::Array1::from(y_std.apply(&s.targets)));
    }
    let x_val = design_matrix(val_set, &x_std);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::<f64>::glorot(topology, &mut rng);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.clone());

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), chunk);
            let yb = y_train.select(Axis(0), chunk);
            let masks = (cfg.dropout_rate > 0.0)
                .then(|| dropout_masks(&topology, chunk.len(), cfg.dropout_rate, &mut rng));
            let (obj, grads) = net.gradient(xb.view(), yb.view(), masks.as_deref(), cfg.weight_decay)?;
            adam_step(&mut net, &grads, &mut adam, cfg);
            loss_sum += obj;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        if !train_loss.is_finite() {
            return Err(Error::invalid(format!("training diverged at epoch {epoch}")));
        }

        let pred = net.forward(x_val.view(), None)?;
        let val = pred
            .axis_iter(Axis(0))
            .zip(val_set)
            .map(|(p, s)| {
                let vx = p[0] * y_std.stds[0] + y_std.means[0];
                let vy = p[1] * y_std.stds[1] + y_std.means[1];
                (vx - s.targets[0]).powi(2) + (vy - s.targets[1]).powi(2)
            })
            .sum::<f64>()
            / val_set.len() as f64;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_velocity_mse: val,
        });
        if val < best.0 {
            best = (val, epoch, net.clone());
        } else if epoch - best.1 >= cfg.early_stop_patience {
            break;
        }
    }

    let (val_mse, best_epoch, mut net) = best;
    if best_epoch == 0 {
        return Err(Error::invalid("validation error never became finite"));
    }
    // fold the target scaling into the linear output layer
    let out = net.layers_mut().last_mut().expect("output layer");
    for (r, (mut row, b)) in out.weights.axis_iter_mut(Axis(0)).zip(out.bias.iter_mut()).enumerate() {
        row.mapv_inplace(|w| w * y_std.stds[r]);
        *b = *b * y_std.stds[r] + y_std.means[r];
    }
    let model = RegressorModel::new(
        layout.clone(),
        x_std,
        net,
        TrainMeta {
            seed: cfg.seed,
            best_epoch,
            val_mse,
        },
    )?;
    Ok(TrainOutcome { model, history })
}
