//! AdaGrad with momentum.

use ndarray::{Array1, Array2, ArrayViewMut, Dimension, Zip};

use super::{Gradients, Mlp, Real};

pub const ADAGRAD_EPS: f64 = 1e-8;

/// Momentum for a 1-based epoch: 0.5 for the first five, 0.9 after.
pub fn momentum_for_epoch(epoch: usize) -> f64 {
    if epoch <= 5 {
        0.5
    } else {
        0.9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// Running sums of squared gradients, per layer `(weights, bias)`.
    pub accum: Vec<(Array2<T>, Array1<T>)>,
    pub velocity: Vec<(Array2<T>, Array1<T>)>,
    pub learning_rate: f64,
    pub eps: f64,
}

fn step<T: Real, D: Dimension>(
    w: ArrayViewMut<T, D>,
    g: &ndarray::Array<T, D>,
    acc: &mut ndarray::Array<T, D>,
    vel: &mut ndarray::Array<T, D>,
    lr: T,
    mu: T,
    eps: T,
) {
    Zip::from(w).and(g).and(acc).and(vel).for_each(|w, &g, a, v| {
        *a += g * g;
        let delta = -(lr * g) / (a.sqrt() + eps);
        *v = mu * *v + delta;
        *w += *v;
    });
}

impl<T: Real> OptimizerState<T> {
    pub fn new(model: &Mlp<T>, learning_rate: f64) -> Self {
        let zeros: Vec<_> =
            model.layers.iter().map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len()))).collect();
        Self { accum: zeros.clone(), velocity: zeros, learning_rate, eps: ADAGRAD_EPS }
    }

    /// `G += g²; Δ = -η g / (√G + ε); v = μ v + Δ; w += v`.
    pub fn update(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>, epoch: usize) {
        let lr = T::from_f64(self.learning_rate);
        let mu = T::from_f64(momentum_for_epoch(epoch));
        let eps = T::from_f64(self.eps);
        for (((layer, (gw, gb)), (aw, ab)), (vw, vb)) in
            model.layers.iter_mut().zip(&grads.layers).zip(&mut self.accum).zip(&mut self.velocity)
        {
            step(layer.weights.view_mut(), gw, aw, vw, lr, mu, eps);
            step(layer.bias.view_mut(), gb, ab, vb, lr, mu, eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> Mlp<f64> {
        let cfg = ModelConfig { layer_dims: vec![4, 5, 2], output_activation: Activation::Linear, dropout_rate: 0.0, seed: 1, target: None };
        Mlp::init(cfg).unwrap()
    }

    fn random_grads(m: &Mlp<f64>, rng: &mut ChaCha8Rng) -> Gradients<f64> {
        Gradients {
            layers: m
                .layers
                .iter()
                .map(|l| {
                    (l.weights.map(|_| rng.random_range(-2.0..2.0)), l.bias.map(|_| rng.random_range(-2.0..2.0)))
                })
                .collect(),
        }
    }

    #[test]
    fn schedule_switches_after_epoch_five() {
        assert_eq!(momentum_for_epoch(1), 0.5);
        assert_eq!(momentum_for_epoch(5), 0.5);
        assert_eq!(momentum_for_epoch(6), 0.9);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_the_gradient() {
        let mut m = model();
        let before = m.clone();
        let mut st = OptimizerState::new(&m, 0.01);
        let g = random_grads(&m, &mut ChaCha8Rng::seed_from_u64(2));
        st.update(&mut m, &g, 1);
        for ((a, b), (gw, _)) in m.layers.iter().zip(&before.layers).zip(&g.layers) {
            for ((w1, w0), g) in a.weights.iter().zip(&b.weights).zip(gw) {
                assert!((w1 - w0 + 0.01 * g.signum()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_gradient_without_velocity_is_a_no_op() {
        let mut m = model();
        let before = m.clone();
        let mut st = OptimizerState::new(&m, 0.01);
        let zero = Gradients { layers: st.accum.clone() };
        st.update(&mut m, &zero, 3);
        assert_eq!(m, before);
    }

    #[test]
    fn accumulators_never_decrease() {
        let mut m = model();
        let mut st = OptimizerState::new(&m, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for epoch in 1..=10 {
            let prev = st.accum.clone();
            let g = random_grads(&m, &mut rng);
            st.update(&mut m, &g, epoch);
            for ((a, b), (pa, pb)) in st.accum.iter().zip(&prev) {
                assert!(a.iter().zip(pa).chain(b.iter().zip(pb)).all(|(x, y)| x >= y && *x >= 0.0));
            }
        }
    }
}
