use super::mlp::{Mlp, Scalar};
use super::TrainConfig;

/// First and second moment estimates, shaped like the network.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Mlp<T>,
    v: Mlp<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Mlp<T>) -> Self {
        AdamState {
            m: Mlp::zeros(*params.topology()),
            v: Mlp::zeros(*params.topology()),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected ADAM update of `params` in place.
pub fn adam_step<T: Scalar>(params: &mut Mlp<T>, grads: &Mlp<T>, state: &mut AdamState<T>, cfg: &TrainConfig) {
    assert_eq!(params.topology(), state.m.topology());
    state.step += 1;
    let cast = |v: f64| T::from_f64(v).unwrap();
    let (b1, b2) = (cast(cfg.beta1), cast(cfg.beta2));
    let (lr, eps) = (cast(cfg.learning_rate), cast(cfg.epsilon));
    let one = T::one();
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    for (((p, &g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::MlpTopology;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Mlp<f64> {
        Mlp::glorot(MlpTopology::new(2, 1, 2).unwrap(), &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = tiny();
        let before = p.clone();
        let g = Mlp::zeros(*p.topology());
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &TrainConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn unit_gradient_first_step() {
        let mut p = Mlp::<f64>::zeros(MlpTopology::new(2, 1, 2).unwrap());
        let mut g = p.clone();
        g.values_mut().for_each(|v| *v = 1.0);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &cfg);
        let expected = -0.1 / (1.0 + 1e-8);
        assert!(p.values().all(|&v| (v - expected).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn first_step_opposes_gradient(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = tiny();
            let before = p.clone();
            let mut g = p.clone();
            g.values_mut().for_each(|v| *v = rand::Rng::gen_range(&mut rng, -2.0..2.0));
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &g, &mut s, &TrainConfig::default());
            for ((a, b), d) in p.values().zip(before.values()).zip(g.values()) {
                prop_assert!((a - b) * d < 0.0);
            }
        }

        /// Each bias-corrected update has `|m̂|/sqrt(v̂) <= sqrt(Σ a_i² / b_i)`
        /// (Cauchy-Schwarz), with `a_i`, `b_i` the normalized moment weights
        /// of the gradient history.
        #[test]
        fn step_size_bounded(seed in 0u64..200, steps in 1usize..40) {
            let cfg = TrainConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = tiny();
            let mut s = AdamState::new(&p);
            for t in 1..=steps {
                let mut g = p.clone();
                g.values_mut().for_each(|v| *v = rand::Rng::gen_range(&mut rng, -3.0..3.0));
                let before = p.clone();
                adam_step(&mut p, &g, &mut s, &cfg);
                let (b1, b2) = (cfg.beta1, cfg.beta2);
                let c1 = 1.0 - b1.powi(t as i32);
                let c2 = 1.0 - b2.powi(t as i32);
                let ratio: f64 = (1..=t)
                    .map(|i| {
                        let a = (1.0 - b1) * b1.powi((t - i) as i32) / c1;
                        let b = (1.0 - b2) * b2.powi((t - i) as i32) / c2;
                        a * a / b
                    })
                    .sum();
                let bound = cfg.learning_rate * ratio.sqrt() * (1.0 + 1e-9);
                let max_step = p.values().zip(before.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                prop_assert!(max_step <= bound, "step {t}: {max_step} > {bound}");
            }
        }
    }
}
