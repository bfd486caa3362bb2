//! Feedforward mask estimator: ReLU MLP with inverted dropout, MSE loss and
//! AdaGrad with a momentum schedule.

mod checkpoint;
mod infer;
mod mlp;
mod optim;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, Neg, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masks::{MaskError, TargetKind};

pub use checkpoint::{decode_model, encode_model, load_model, save_model, MAGIC, VERSION};
pub use infer::{infer_mask, predict, separate, ModelSeparation};
pub use mlp::{ForwardPass, Gradients, Layer, Mlp, TrainingMeta};
pub use optim::{momentum_for_epoch, OptimizerState};
pub use train::{train, EpochRecord, History, TrainConfig, TrainingSet};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("expected {expected} input columns, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("expected {expected} target columns, got {got}")]
    TargetDim { expected: usize, got: usize },
    #[error("batch has {inputs} input rows but {targets} target rows")]
    RowMismatch { inputs: usize, targets: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (last finite loss {last:.6e}); try a lower learning rate")]
    Diverged { epoch: usize, batch: usize, last: f64 },
    #[error("model was trained for {model}, asked for {requested}")]
    KindMismatch { model: String, requested: TargetKind },
    #[error("{path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

/// Scalar type the network can run in (f32 for training, f64 for checks).
pub trait Real:
    LinalgScalar
    + ScalarOperand
    + PartialOrd
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}
impl_real!(f32);
impl_real!(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    /// Sigmoid for targets bounded to [0, 1], linear otherwise.
    pub fn for_target(kind: TargetKind) -> Self {
        if kind.bounded_unit_interval() {
            Activation::Sigmoid
        } else {
            Activation::Linear
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// `[D_in, hidden.., D_out]`.
    pub layer_dims: Vec<usize>,
    pub output_activation: Activation,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Target the model estimates, if any.
    pub target: Option<TargetKind>,
}

pub const DEFAULT_HIDDEN: [usize; 3] = [1024, 1024, 1024];
pub const DEFAULT_DROPOUT: f64 = 0.2;

impl ModelConfig {
    /// Estimator for `kind` on `bins` frequency bins.
    pub fn for_target(kind: TargetKind, input_dim: usize, bins: usize, hidden: &[usize], dropout_rate: f64, seed: u64) -> Self {
        let mut layer_dims = vec![input_dim];
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(kind.output_dim(bins));
        Self { layer_dims, output_activation: Activation::for_target(kind), dropout_rate, seed, target: Some(kind) }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(NnError::InvalidConfig(format!("layer dims {:?} need at least two nonzero entries", self.layer_dims)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidConfig(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if let Some(kind) = self.target {
            if Activation::for_target(kind) != self.output_activation {
                return Err(NnError::InvalidConfig(format!("{kind} requires {:?} output", Activation::for_target(kind))));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}
