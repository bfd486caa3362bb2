//! Minibatch training loop with a held-out validation split and best-epoch
//! selection.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{momentum_for_epoch, Mlp, NnError, OptimizerState, Real};

/// Rows evaluated per chunk when scoring the validation split.
const EVAL_CHUNK: usize = 4096;
const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 256, epochs: 30, learning_rate: 0.01, validation_fraction: 0.1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::InvalidConfig("batch_size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NnError::InvalidConfig("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Frame-aligned network inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub momentum: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,momentum,lr\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:e},{:e},{},{}", r.epoch, r.train_mse, r.val_mse, r.momentum, r.learning_rate);
        }
        out
    }
}

fn mean_loss<T: Real>(model: &Mlp<T>, x: &Array2<T>, t: &Array2<T>, rows: &[usize]) -> Result<f64, NnError> {
    let mut sum = 0.0;
    for chunk in rows.chunks(EVAL_CHUNK) {
        let out = model.predict(x.select(Axis(0), chunk).view())?;
        sum += Mlp::loss(&out, &t.select(Axis(0), chunk).view()) * out.len() as f64;
    }
    Ok(sum / (rows.len() * t.ncols()) as f64)
}

/// Train `model` on `data`. Returns the parameters of the epoch with the
/// lowest validation MSE (training MSE when there is no validation split)
/// together with the per-epoch history. `progress` is called after every
/// epoch.
pub fn train<T: Real>(
    mut model: Mlp<T>,
    data: &TrainingSet<T>,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Mlp<T>, History), NnError> {
    cfg.validate()?;
    let (x, t) = (&data.inputs, &data.targets);
    if x.nrows() != t.nrows() {
        return Err(NnError::RowMismatch { inputs: x.nrows(), targets: t.nrows() });
    }
    if x.ncols() != model.config.input_dim() {
        return Err(NnError::InputDim { expected: model.config.input_dim(), got: x.ncols() });
    }
    if t.ncols() != model.config.output_dim() {
        return Err(NnError::TargetDim { expected: model.config.output_dim(), got: t.ncols() });
    }
    for (name, m) in [("input", x), ("target", t)] {
        if let Some(((r, c), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(NnError::InvalidData(format!("non-finite {name} at row {r}, column {c}")));
        }
    }
    let seeded = |stream| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        rng
    };
    let mut rows: Vec<usize> = (0..x.nrows()).collect();
    rows.shuffle(&mut seeded(SPLIT_STREAM));
    let n_val = ((rows.len() as f64 * cfg.validation_fraction).round() as usize).min(rows.len().saturating_sub(1));
    let (val_rows, train_rows) = rows.split_at(n_val);
    let mut train_rows = train_rows.to_vec();
    if train_rows.is_empty() {
        return Err(NnError::EmptyDataset);
    }

    let mut shuffle_rng = seeded(SHUFFLE_STREAM);
    let mut dropout_rng = seeded(DROPOUT_STREAM);
    let mut opt = OptimizerState::new(&model, cfg.learning_rate);
    let mut history = History::default();
    let mut best: Option<(f64, Mlp<T>)> = None;
    for epoch in 1..=cfg.epochs {
        train_rows.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut last = f64::NAN;
        for (b, batch) in train_rows.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), batch);
            let tb = t.select(Axis(0), batch);
            let pass = model.forward(xb.view(), Some(&mut dropout_rng))?;
            let (loss, grads) = model.backward(xb.view(), &pass, tb.view())?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, batch: b, last });
            }
            last = loss;
            sum += loss * batch.len() as f64;
            opt.update(&mut model, &grads, epoch);
        }
        let train_mse = sum / train_rows.len() as f64;
        let val_mse = if val_rows.is_empty() { train_mse } else { mean_loss(&model, x, t, val_rows)? };
        if !val_mse.is_finite() {
            return Err(NnError::Diverged { epoch, batch: train_rows.len().div_ceil(cfg.batch_size), last });
        }
        let record = EpochRecord { epoch, train_mse, val_mse, momentum: momentum_for_epoch(epoch), learning_rate: cfg.learning_rate };
        progress(&record);
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(v, _)| val_mse < *v) {
            history.best_epoch = epoch;
            let mut snapshot = model.clone();
            snapshot.meta.train_loss = train_mse;
            snapshot.meta.val_loss = val_mse;
            best = Some((val_mse, snapshot));
        }
    }
    let (_, mut best) = best.expect("at least one epoch ran");
    best.meta.epochs_seen = cfg.epochs as u32;
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ModelConfig};
    use rand::Rng;

    fn data(rows: usize, seed: u64) -> TrainingSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = Array2::from_shape_simple_fn((rows, 6), || rng.random_range(-1.0f32..1.0));
        // A smooth function of the inputs, in (0, 1).
        let targets = Array2::from_shape_fn((rows, 2), |(i, j)| {
            let s: f32 = inputs.row(i).iter().enumerate().map(|(k, v)| v * ((k + j) as f32 * 0.7).cos()).sum();
            1.0 / (1.0 + (-s).exp())
        });
        TrainingSet { inputs, targets }
    }

    fn model(hidden: usize, seed: u64) -> Mlp<f32> {
        let cfg = ModelConfig {
            layer_dims: vec![6, hidden, hidden, hidden, 2],
            output_activation: Activation::Sigmoid,
            dropout_rate: 0.2,
            seed,
            target: None,
        };
        Mlp::init(cfg).unwrap()
    }

    #[test]
    fn identical_seeds_reproduce_history_and_parameters() {
        let d = data(600, 1);
        let cfg = TrainConfig { batch_size: 32, epochs: 4, seed: 5, ..Default::default() };
        let (a, ha) = train(model(32, 2), &d, &cfg, &mut |_| {}).unwrap();
        let (b, hb) = train(model(32, 2), &d, &cfg, &mut |_| {}).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert_eq!(ha.to_csv().lines().count(), 5);
    }

    #[test]
    fn returned_model_is_the_best_validation_epoch() {
        let d = data(800, 3);
        let cfg = TrainConfig { batch_size: 16, epochs: 8, learning_rate: 0.02, seed: 1, ..Default::default() };
        let mut seen = 0;
        let (m, h) = train(model(32, 4), &d, &cfg, &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 8);
        let best = h.epochs.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(h.epochs[h.best_epoch - 1].val_mse, best);
        assert!(best <= h.epochs[0].val_mse);
        assert_eq!(m.meta.val_loss, best);
        assert_eq!(m.meta.epochs_seen, 8);
        assert_eq!(h.epochs[4].momentum, 0.5);
        assert_eq!(h.epochs[5].momentum, 0.9);
    }

    #[test]
    fn small_set_can_be_memorised() {
        let d = data(32, 6);
        let cfg = TrainConfig { batch_size: 32, epochs: 500, learning_rate: 0.05, validation_fraction: 0.0, seed: 2 };
        // Dropout is a regulariser working against memorisation; its noise
        // alone keeps the training loss near 4e-3 here.
        let mut net = model(64, 7);
        net.config.dropout_rate = 0.0;
        let (m, h) = train(net, &d, &cfg, &mut |_| {}).unwrap();
        let last = h.epochs.last().unwrap().train_mse;
        assert!(last < 1e-3, "final training MSE {last}");
        let out = m.predict(d.inputs.view()).unwrap();
        assert!(Mlp::loss(&out, &d.targets.view()) < 1e-3);
    }

    #[test]
    fn divergence_and_bad_inputs_are_reported() {
        let mut d = data(64, 8);
        let cfg = TrainConfig { batch_size: 16, epochs: 2, ..Default::default() };
        let huge = TrainConfig { learning_rate: 1e30, ..cfg };
        assert!(matches!(train(model(8, 1), &d, &huge, &mut |_| {}), Err(NnError::Diverged { .. })));
        d.inputs[[3, 2]] = f32::NAN;
        assert!(matches!(train(model(8, 1), &d, &cfg, &mut |_| {}), Err(NnError::InvalidData(_))));
        let empty = TrainingSet { inputs: Array2::zeros((0, 6)), targets: Array2::zeros((0, 2)) };
        assert!(matches!(train(model(8, 1), &empty, &cfg, &mut |_| {}), Err(NnError::EmptyDataset)));
        let wrong = TrainingSet { inputs: Array2::zeros((4, 5)), targets: Array2::zeros((4, 2)) };
        assert!(matches!(train(model(8, 1), &wrong, &cfg, &mut |_| {}), Err(NnError::InputDim { .. })));
    }
}
