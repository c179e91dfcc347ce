use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{dropout_masks, Mlp, MlpTopology, Scalar, OUTPUT_DIM};
use crate::error::{Error, Result};

const MAX_PARAMETERS: usize = 10_000;
const BATCH: usize = 3;
const DROPOUT_RATE: f64 = 0.2;
const WEIGHT_DECAY: f64 = 1e-3;
/// Step halvings tried when a perturbation flips a CReLU unit.
const MAX_HALVINGS: usize = 12;

/// Random network, batch and dropout masks drawn from `seed`; returns the
/// largest `|analytic - numeric| / max(1, |numeric|)` over all parameters.
pub fn check_gradients<T: Scalar>(topology: &MlpTopology, seed: u64, eps: f64) -> Result<f64> {
    topology.validate()?;
    if topology.parameter_count() > MAX_PARAMETERS {
        return Err(Error::invalid(format!(
            "gradient check limited to {MAX_PARAMETERS} parameters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::<T>::glorot(*topology, &mut rng);
    for layer in net.layers_mut() {
        layer
            .bias
            .mapv_inplace(|_| T::from_f64(rng.gen_range(-0.5..0.5)).unwrap());
    }
    let x = Array2::from_shape_fn((BATCH, topology.input_dim), |_| {
        T::from_f64(rng.gen_range(-1.0..1.0)).unwrap()
    });
    let y = Array2::from_shape_fn((BATCH, OUTPUT_DIM), |_| {
        T::from_f64(rng.gen_range(-1.0..1.0)).unwrap()
    });
    let masks = dropout_masks::<T, _>(topology, BATCH, DROPOUT_RATE, &mut rng);
    gradient_check(&net, x.view(), y.view(), Some(&masks), T::from_f64(WEIGHT_DECAY).unwrap(), eps)
}

/// Worst [`check_gradients`] deviation over `trials` random small
/// topologies (1–8 inputs, 1–3 hidden layers of 1–8 units), all drawn from
/// `seed`.
pub fn check_random_topologies<T: Scalar>(trials: usize, seed: u64, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let topology = MlpTopology::new(rng.gen_range(1..=8), rng.gen_range(1..=3), rng.gen_range(1..=8))?;
        worst = worst.max(check_gradients::<T>(&topology, rng.gen(), eps)?);
    }
    Ok(worst)
}

/// Compares [`Mlp::gradient`] against central differences of the objective,
/// parameter by parameter, under fixed dropout masks.
///
/// The objective is piecewise quadratic in each single parameter, so the
/// central difference is exact up to rounding unless the perturbation moves
/// a pre-activation across zero; in that case the step is halved until the
/// activation pattern is preserved on both sides.
pub fn gradient_check<T: Scalar>(
    net: &Mlp<T>,
    x: ArrayView2<T>,
    targets: ArrayView2<T>,
    masks: Option<&[Array2<T>]>,
    weight_decay: T,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let (_, analytic) = net.gradient(x, targets, masks, weight_decay)?;
    let analytic: Vec<T> = analytic.values().copied().collect();
    let base_pattern = pattern(net, x, masks)?;

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.values().nth(i).expect("index in range");
        let mut h = eps;
        let mut numeric = None;
        for _ in 0..=MAX_HALVINGS {
            let step = T::from_f64(h).unwrap();
            let (plus, p_plus) = evaluate(&mut probe, i, original + step, x, targets, masks, weight_decay)?;
            let (minus, p_minus) = evaluate(&mut probe, i, original - step, x, targets, masks, weight_decay)?;
            // the perturbed value actually representable in T
            let span = (original + step) - (original - step);
            numeric = Some((plus - minus) / span);
            if p_plus == base_pattern && p_minus == base_pattern {
                break;
            }
            h *= 0.5;
        }
        set(&mut probe, i, original);
        let n = numeric.expect("at least one evaluation").to_f64().unwrap();
        let a = a.to_f64().unwrap();
        worst = worst.max((a - n).abs() / n.abs().max(1.0));
    }
    Ok(worst)
}

fn set<T: Scalar>(net: &mut Mlp<T>, i: usize, v: T) {
    *net.values_mut().nth(i).expect("index in range") = v;
}

fn pattern<T: Scalar>(net: &Mlp<T>, x: ArrayView2<T>, masks: Option<&[Array2<T>]>) -> Result<Vec<i8>> {
    let cache = net.forward_cached(x, masks)?;
    Ok(cache
        .pre_activations()
        .iter()
        .flat_map(|z| z.iter().map(|v| if *v > T::zero() { 1 } else if *v < T::zero() { -1 } else { 0 }))
        .collect())
}

fn evaluate<T: Scalar>(
    net: &mut Mlp<T>,
    i: usize,
    value: T,
    x: ArrayView2<T>,
    targets: ArrayView2<T>,
    masks: Option<&[Array2<T>]>,
    weight_decay: T,
) -> Result<(T, Vec<i8>)> {
    set(net, i, value);
    let (obj, _) = net.gradient(x, targets, masks, weight_decay)?;
    Ok((obj, pattern(net, x, masks)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_nets_agree_in_f64() {
        for seed in 0..10 {
            let t = MlpTopology::new(3 + seed as usize % 4, 1 + seed as usize % 3, 2 + seed as usize % 5).unwrap();
            let err = check_gradients::<f64>(&t, seed, 1e-5).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn small_nets_agree_in_f32() {
        for seed in 0..10 {
            let t = MlpTopology::new(4, 2, 5).unwrap();
            let err = check_gradients::<f32>(&t, seed, 1e-3).unwrap();
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_network_is_exact() {
        let t = MlpTopology::new(3, 2, 4).unwrap();
        let net = Mlp::<f64>::zeros(t);
        let x = Array2::from_shape_fn((2, 3), |(i, j)| i as f64 - j as f64);
        let y = Array2::zeros((2, 4));
        assert_eq!(gradient_check(&net, x.view(), y.view(), None, 0.0, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn oversized_topology_rejected() {
        let t = MlpTopology::new(100, 4, 70).unwrap();
        assert!(check_gradients::<f64>(&t, 0, 1e-5).is_err());
    }
}
