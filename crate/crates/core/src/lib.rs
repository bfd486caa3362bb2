//! Mask-based monaural speech separation toolkit.
//!
//! The crate is organised around the processing chain of a supervised
//! separation system:
//!
//! * [`signal`]: waveforms, STFT analysis/synthesis, resampling and WAV I/O.
//! * [`masks`]: the five time-frequency training targets (IBM, IRM, cIRM,
//!   PSM, ORM), target compression and mask application.
//! * [`features`]: AMS, RASTA-PLP and MFCC extraction, context splicing and
//!   normalisation.
//! * [`dataset`]: manifest construction, SNR-controlled mixing and rendering
//!   of training pairs.
//! * [`nn`]: the feedforward mask estimator and its training loop.
//! * [`metrics`]: STOI, SNR/SI-SDR and system-level evaluation.

pub mod dataset;
pub mod features;
pub mod masks;
pub mod metrics;
pub mod nn;
pub mod signal;

/// Sample rate used throughout the separation pipeline.
pub const PIPELINE_RATE: u32 = 16_000;
