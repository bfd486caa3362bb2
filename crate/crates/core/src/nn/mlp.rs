//! Network parameters, forward pass and backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, ModelConfig, NnError, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `fan_in × fan_out`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainingMeta {
    pub epochs_seen: u32,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
    pub config: ModelConfig,
    pub meta: TrainingMeta,
}

/// Everything backprop needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Hidden activations after ReLU and dropout, one per hidden layer.
    pub hidden: Vec<Array2<T>>,
    pub output: Array2<T>,
    /// Scale of surviving units (1 in eval mode, 1/keep in train mode).
    keep_scale: T,
}

/// Per-layer `(dW, db)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights from the config seed, zero biases.
    pub fn init(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_dims
            .windows(2)
            .map(|d| {
                let limit = (6.0 / (d[0] + d[1]) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((d[0], d[1]), || T::from_f64(rng.random_range(-limit..limit)));
                Layer { weights, bias: Array1::zeros(d[1]) }
            })
            .collect();
        Ok(Self { layers, config, meta: TrainingMeta::default() })
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let conv = |v: &T| U::from_f64(v.to_f64());
        Mlp {
            layers: self.layers.iter().map(|l| Layer { weights: l.weights.map(conv), bias: l.bias.map(conv) }).collect(),
            config: self.config.clone(),
            meta: self.meta,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), NnError> {
        let expected = self.config.input_dim();
        if x.ncols() != expected {
            return Err(NnError::InputDim { expected, got: x.ncols() });
        }
        Ok(())
    }

    fn affine(layer: &Layer<T>, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        z
    }

    fn finish_output(&self, mut z: Array2<T>) -> Array2<T> {
        if self.config.output_activation == Activation::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
        z
    }

    /// Forward pass. With `dropout` set, hidden units are dropped with the
    /// configured rate and survivors scaled by `1/keep`; without it no
    /// dropout or scaling is applied.
    pub fn forward(&self, x: ArrayView2<T>, dropout: Option<&mut ChaCha8Rng>) -> Result<ForwardPass<T>, NnError> {
        self.check_input(&x)?;
        let keep = 1.0 - self.config.dropout_rate;
        let mut rng = dropout.filter(|_| self.config.dropout_rate > 0.0);
        let keep_scale = if rng.is_some() { T::from_f64(1.0 / keep) } else { T::one() };
        let (last, hidden_layers) = self.layers.split_last().expect("validated: at least one layer");
        let mut hidden: Vec<Array2<T>> = Vec::with_capacity(hidden_layers.len());
        for layer in hidden_layers {
            let input = hidden.last().map_or(x.view(), |h| h.view());
            let mut h = Self::affine(layer, &input);
            match rng.as_deref_mut() {
                Some(rng) => h.mapv_inplace(|v| if v > T::zero() && rng.random_bool(keep) { v * keep_scale } else { T::zero() }),
                None => h.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() }),
            }
            hidden.push(h);
        }
        let input = hidden.last().map_or(x.view(), |h| h.view());
        let output = self.finish_output(Self::affine(last, &input));
        Ok(ForwardPass { hidden, output, keep_scale })
    }

    /// Eval-mode output without keeping intermediate activations.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check_input(&x)?;
        let (last, hidden_layers) = self.layers.split_last().expect("validated: at least one layer");
        let mut h: Option<Array2<T>> = None;
        for layer in hidden_layers {
            let input = h.as_ref().map_or(x.view(), |h| h.view());
            let mut z = Self::affine(layer, &input);
            z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
            h = Some(z);
        }
        let input = h.as_ref().map_or(x.view(), |h| h.view());
        Ok(self.finish_output(Self::affine(last, &input)))
    }

    /// Mean squared error over batch and output dimensions.
    pub fn loss(output: &Array2<T>, targets: &ArrayView2<T>) -> f64 {
        let sum: f64 = Zip::from(output).and(targets).fold(0.0, |acc, &o, &t| {
            let d = (o - t).to_f64();
            acc + d * d
        });
        sum / output.len().max(1) as f64
    }

    /// Exact gradients of the MSE loss for the realised forward pass.
    /// Returns the loss and per-layer gradients.
    pub fn backward(&self, x: ArrayView2<T>, pass: &ForwardPass<T>, targets: ArrayView2<T>) -> Result<(f64, Gradients<T>), NnError> {
        self.check_input(&x)?;
        if targets.dim() != pass.output.dim() {
            if targets.nrows() != pass.output.nrows() {
                return Err(NnError::RowMismatch { inputs: pass.output.nrows(), targets: targets.nrows() });
            }
            return Err(NnError::TargetDim { expected: pass.output.ncols(), got: targets.ncols() });
        }
        let loss = Self::loss(&pass.output, &targets);
        let scale = T::from_f64(2.0 / pass.output.len() as f64);
        let mut delta = Zip::from(&pass.output).and(&targets).map_collect(|&o, &t| (o - t) * scale);
        if self.config.output_activation == Activation::Sigmoid {
            Zip::from(&mut delta).and(&pass.output).for_each(|d, &o| *d = *d * o * (T::one() - o));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.view() } else { pass.hidden[l - 1].view() };
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                Zip::from(&mut back)
                    .and(&pass.hidden[l - 1])
                    .for_each(|d, &h| *d = if h > T::zero() { *d * pass.keep_scale } else { T::zero() });
                delta = back;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::TargetKind;
    use ndarray::Array;

    fn toy(activation: Activation, dropout: f64, seed: u64) -> ModelConfig {
        ModelConfig { layer_dims: vec![7, 11, 11, 11, 3], output_activation: activation, dropout_rate: dropout, seed, target: None }
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = Mlp::<f32>::init(toy(Activation::Linear, 0.2, 1)).unwrap();
        assert_eq!(a, Mlp::<f32>::init(toy(Activation::Linear, 0.2, 1)).unwrap());
        assert_ne!(a, Mlp::<f32>::init(toy(Activation::Linear, 0.2, 2)).unwrap());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        let limit = (6.0f32 / 18.0).sqrt();
        assert!(a.layers[1].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn large_layer_weight_mean_is_near_zero() {
        let cfg = ModelConfig { layer_dims: vec![1024, 1024], output_activation: Activation::Linear, dropout_rate: 0.0, seed: 9, target: None };
        let m = Mlp::<f64>::init(cfg).unwrap();
        let w = &m.layers[0].weights;
        let limit = (6.0 / 2048.0f64).sqrt();
        // Uniform(-a, a) has standard deviation a/√3.
        let se = limit / 3f64.sqrt() / (w.len() as f64).sqrt();
        assert!(w.mean().unwrap().abs() < 3.0 * se);
    }

    #[test]
    fn zero_network_outputs() {
        for (act, expected) in [(Activation::Linear, 0.0), (Activation::Sigmoid, 0.5)] {
            let mut m = Mlp::<f64>::init(toy(act, 0.2, 3)).unwrap();
            m.layers.iter_mut().for_each(|l| l.weights.fill(0.0));
            let out = m.predict(batch(5, 7, 1).view()).unwrap();
            assert!(out.iter().all(|v| *v == expected));
        }
    }

    #[test]
    fn eval_output_is_repeatable_and_matches_forward() {
        let m = Mlp::<f32>::init(toy(Activation::Sigmoid, 0.2, 4)).unwrap();
        let x = batch(9, 7, 2).mapv(|v| v as f32);
        let a = m.predict(x.view()).unwrap();
        assert_eq!(a, m.predict(x.view()).unwrap());
        assert_eq!(a, m.forward(x.view(), None).unwrap().output);
    }

    #[test]
    fn input_and_target_shapes_are_checked() {
        let m = Mlp::<f64>::init(toy(Activation::Linear, 0.0, 5)).unwrap();
        assert!(matches!(m.predict(batch(2, 6, 0).view()), Err(NnError::InputDim { expected: 7, got: 6 })));
        let x = batch(4, 7, 0);
        let pass = m.forward(x.view(), None).unwrap();
        assert!(matches!(m.backward(x.view(), &pass, batch(4, 2, 0).view()), Err(NnError::TargetDim { .. })));
        assert!(matches!(m.backward(x.view(), &pass, batch(3, 3, 0).view()), Err(NnError::RowMismatch { .. })));
    }

    #[test]
    fn zero_error_gives_zero_gradients() {
        let m = Mlp::<f64>::init(toy(Activation::Sigmoid, 0.2, 6)).unwrap();
        let x = batch(8, 7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = m.forward(x.view(), Some(&mut rng)).unwrap();
        let (loss, g) = m.backward(x.view(), &pass, pass.output.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.layers.iter().all(|(w, b)| w.iter().chain(b).all(|v| *v == 0.0)));
    }

    #[test]
    fn duplicated_batch_has_the_same_gradient() {
        let m = Mlp::<f64>::init(toy(Activation::Linear, 0.0, 7)).unwrap();
        let x = batch(5, 7, 4);
        let t = batch(5, 3, 5);
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let t2 = ndarray::concatenate![Axis(0), t, t];
        let (l1, g1) = m.backward(x.view(), &m.forward(x.view(), None).unwrap(), t.view()).unwrap();
        let (l2, g2) = m.backward(x2.view(), &m.forward(x2.view(), None).unwrap(), t2.view()).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for ((w1, b1), (w2, b2)) in g1.layers.iter().zip(&g2.layers) {
            assert!(w1.iter().zip(w2).chain(b1.iter().zip(b2)).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    fn param_mut(m: &mut Mlp<f64>, l: usize, idx: usize) -> &mut f64 {
        let layer = &mut m.layers[l];
        let nw = layer.weights.len();
        if idx < nw {
            &mut layer.weights.as_slice_mut().unwrap()[idx]
        } else {
            &mut layer.bias[idx - nw]
        }
    }

    /// Central differences through fixed dropout masks (same seed each pass).
    fn max_relative_gradient_error(activation: Activation, dropout: f64) -> f64 {
        let mut m = Mlp::<f64>::init(toy(activation, dropout, 8)).unwrap();
        for l in &mut m.layers {
            l.bias.mapv_inplace(|_| 0.1);
        }
        let x = batch(6, 7, 6);
        let t = batch(6, 3, 7).mapv(|v| if activation == Activation::Sigmoid { 0.5 + 0.4 * v } else { v });
        let run = |m: &Mlp<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let pass = m.forward(x.view(), Some(&mut rng)).unwrap();
            m.backward(x.view(), &pass, t.view()).unwrap()
        };
        let (_, grads) = run(&m);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..m.layers.len() {
            for idx in 0..m.layers[l].weights.len() + m.layers[l].bias.len() {
                let mut plus = m.clone();
                *param_mut(&mut plus, l, idx) += h;
                let mut minus = m.clone();
                *param_mut(&mut minus, l, idx) -= h;
                let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * h);
                let (gw, gb) = &grads.layers[l];
                let analytic = if idx < gw.len() { gw.as_slice().unwrap()[idx] } else { gb[idx - gw.len()] };
                let scale = analytic.abs().max(numeric.abs());
                if scale > 0.0 {
                    worst = worst.max((analytic - numeric).abs() / scale);
                }
            }
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        for act in [Activation::Linear, Activation::Sigmoid] {
            for dropout in [0.0, 0.2] {
                let err = max_relative_gradient_error(act, dropout);
                assert!(err < 1e-6, "{act:?} dropout {dropout}: {err:e}");
            }
        }
    }

    #[test]
    fn dropout_is_unbiased_on_the_first_hidden_layer() {
        let cfg = ModelConfig { layer_dims: vec![7, 32, 3], output_activation: Activation::Linear, dropout_rate: 0.2, seed: 10, target: None };
        let m = Mlp::<f64>::init(cfg).unwrap();
        let x = batch(4, 7, 8);
        let eval = m.forward(x.view(), None).unwrap().hidden.remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut acc = Array::zeros(eval.dim());
        for _ in 0..draws {
            acc += &m.forward(x.view(), Some(&mut rng)).unwrap().hidden[0];
        }
        acc /= draws as f64;
        let err = (&acc - &eval).mapv(f64::abs).sum() / eval.mapv(f64::abs).sum();
        assert!(err < 0.02, "relative deviation {err}");
    }

    #[test]
    fn output_rule_matches_target_range() {
        for kind in TargetKind::ALL {
            let cfg = ModelConfig::for_target(kind, 295, 161, &[16], 0.2, 0);
            let expected = if matches!(kind, TargetKind::Ibm | TargetKind::Irm) { Activation::Sigmoid } else { Activation::Linear };
            assert_eq!(cfg.output_activation, expected);
            assert_eq!(cfg.output_dim(), if kind == TargetKind::Cirm { 322 } else { 161 });
        }
    }
}
