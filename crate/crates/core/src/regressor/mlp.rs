use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RangeClass;

/// Number of regression outputs: `vx, vy, px, py`.
pub const OUTPUT_DIM: usize = 4;

/// Floating point type the network can run in.
pub trait Scalar:
    Float + FromPrimitive + LinalgScalar + ScalarOperand + AddAssign + MulAssign + Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + LinalgScalar + ScalarOperand + AddAssign + MulAssign + Debug + Send + Sync + 'static
{
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpTopology {
    pub input_dim: usize,
    pub hidden_layers: usize,
    /// Pre-activation units per hidden layer; CReLU doubles the layer output.
    pub hidden_units: usize,
    pub output_dim: usize,
}

impl MlpTopology {
    pub fn new(input_dim: usize, hidden_layers: usize, hidden_units: usize) -> Result<Self> {
        let t = MlpTopology {
            input_dim,
            hidden_layers,
            hidden_units,
            output_dim: OUTPUT_DIM,
        };
        t.validate()?;
        Ok(t)
    }

    /// 3×40 near, 4×60 medium, 4×70 far.
    pub fn for_range(range: RangeClass, input_dim: usize) -> Result<Self> {
        match range {
            RangeClass::Near => Self::new(input_dim, 3, 40),
            RangeClass::Medium => Self::new(input_dim, 4, 60),
            RangeClass::Far => Self::new(input_dim, 4, 70),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_layers == 0 || self.hidden_units == 0 {
            return Err(Error::invalid(format!("degenerate topology {self:?}")));
        }
        if self.output_dim != OUTPUT_DIM {
            return Err(Error::invalid(format!("output_dim must be {OUTPUT_DIM}")));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_dim, self.hidden_units)];
        for _ in 1..self.hidden_layers {
            dims.push((2 * self.hidden_units, self.hidden_units));
        }
        dims.push((2 * self.hidden_units, self.output_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `outputs × inputs`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Fully connected CReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    topology: MlpTopology,
    layers: Vec<Layer<T>>,
}

/// Activations retained for backpropagation.
pub(crate) struct ForwardCache<T> {
    /// Input of each affine layer.
    inputs: Vec<Array2<T>>,
    /// Masked pre-activations of each hidden layer.
    pre: Vec<Array2<T>>,
    pub output: Array2<T>,
}

impl<T> ForwardCache<T> {
    pub fn pre_activations(&self) -> &[Array2<T>] {
        &self.pre
    }
}

pub fn crelu<T: Float>(x: &[T]) -> Vec<T> {
    let zero = T::zero();
    x.iter()
        .map(|&v| v.max(zero))
        .chain(x.iter().map(|&v| (-v).max(zero)))
        .collect()
}

fn crelu_rows<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    let zero = T::zero();
    let pos = z.mapv(|v| v.max(zero));
    let neg = z.mapv(|v| (-v).max(zero));
    concatenate(Axis(1), &[pos.view(), neg.view()]).expect("matching row counts")
}

/// Mean squared error over all components.
pub fn loss<T: Float>(outputs: &[T], targets: &[T]) -> T {
    assert_eq!(outputs.len(), targets.len());
    let sum = outputs
        .iter()
        .zip(targets)
        .fold(T::zero(), |acc, (&o, &t)| acc + (o - t) * (o - t));
    sum / T::from(outputs.len()).unwrap()
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(topology: MlpTopology) -> Self {
        let layers = topology
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Layer {
                weights: Array2::zeros((o, i)),
                bias: Array1::zeros(o),
            })
            .collect();
        Mlp { topology, layers }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng>(topology: MlpTopology, rng: &mut R) -> Self {
        let mut net = Self::zeros(topology);
        for layer in &mut net.layers {
            let (o, i) = layer.weights.dim();
            let limit = (6.0 / (i + o) as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| T::from_f64(rng.gen_range(-limit..limit)).unwrap());
        }
        net
    }

    pub fn from_layers(topology: MlpTopology, layers: Vec<Layer<T>>) -> Result<Self> {
        topology.validate()?;
        let dims = topology.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::invalid(format!(
                "topology needs {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (k, ((i, o), l)) in dims.iter().zip(&layers).enumerate() {
            if l.weights.dim() != (*o, *i) || l.bias.len() != *o {
                return Err(Error::invalid(format!("layer {k} has the wrong shape")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(Mlp { topology, layers })
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Forward pass over a batch (rows are samples). `masks` holds one
    /// `batch × hidden_units` multiplier matrix per hidden layer, applied to
    /// the pre-activations; `None` is inference mode.
    pub fn forward(&self, x: ArrayView2<T>, masks: Option<&[Array2<T>]>) -> Result<Array2<T>> {
        Ok(self.forward_cached(x, masks)?.output)
    }

    pub fn forward_one(&self, x: &[T]) -> Result<[T; OUTPUT_DIM]> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
        let out = self.forward(view, None)?;
        Ok([out[[0, 0]], out[[0, 1]], out[[0, 2]], out[[0, 3]]])
    }

    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<T>,
        masks: Option<&[Array2<T>]>,
    ) -> Result<ForwardCache<T>> {
        let t = &self.topology;
        if x.ncols() != t.input_dim {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                t.input_dim
            )));
        }
        if let Some(m) = masks {
            let shape_ok = m.len() == t.hidden_layers
                && m.iter().all(|m| m.dim() == (x.nrows(), t.hidden_units));
            if !shape_ok {
                return Err(Error::invalid("dropout masks do not match the batch and topology"));
            }
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            inputs.push(a);
            if k == last {
                return Ok(ForwardCache { inputs, pre, output: z });
            }
            if let Some(m) = masks {
                z *= &m[k];
            }
            a = crelu_rows(&z);
            pre.push(z);
        }
        unreachable!("network has an output layer")
    }

    /// Batch-mean loss plus `weight_decay · ½‖W‖²` and its exact gradient.
    /// Biases are not decayed.
    pub fn gradient(
        &self,
        x: ArrayView2<T>,
        targets: ArrayView2<T>,
        masks: Option<&[Array2<T>]>,
        weight_decay: T,
    ) -> Result<(T, Mlp<T>)> {
        if x.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if targets.dim() != (x.nrows(), OUTPUT_DIM) {
            return Err(Error::invalid("targets must be batch × 4"));
        }
        let cache = self.forward_cached(x, masks)?;
        let scale = T::from_usize(OUTPUT_DIM * x.nrows()).unwrap();
        let diff = &cache.output - &targets;
        let data_loss = diff.iter().fold(T::zero(), |acc, &d| acc + d * d) / scale;

        let two = T::one() + T::one();
        let mut delta = diff.mapv(|d| two * d / scale);
        let mut grads = Mlp::zeros(self.topology);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            g.weights = delta.t().dot(&cache.inputs[k]);
            g.weights.scaled_add(weight_decay, &layer.weights);
            g.bias = delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let da = delta.dot(&layer.weights);
            let z = &cache.pre[k - 1];
            let n = z.ncols();
            let mut dz = Array2::zeros(z.raw_dim());
            Zip::from(&mut dz)
                .and(z)
                .and(da.slice(s![.., ..n]))
                .and(da.slice(s![.., n..]))
                .for_each(|d, &z, &p, &q| {
                    *d = if z > T::zero() {
                        p
                    } else if z < T::zero() {
                        -q
                    } else {
                        T::zero()
                    }
                });
            if let Some(m) = masks {
                dz *= &m[k - 1];
            }
            delta = dz;
        }

        let half = T::from_f64(0.5).unwrap();
        let decay = self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(T::zero(), |acc, &w| acc + w * w);
        Ok((data_loss + half * weight_decay * decay, grads))
    }
}

/// Inverted dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_masks<T: Scalar, R: Rng>(
    topology: &MlpTopology,
    batch: usize,
    rate: f64,
    rng: &mut R,
) -> Vec<Array2<T>> {
    let keep = T::from_f64(1.0 / (1.0 - rate)).unwrap();
    (0..topology.hidden_layers)
        .map(|_| {
            Array2::from_shape_fn((batch, topology.hidden_units), |_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
        })
        .collect()
}
