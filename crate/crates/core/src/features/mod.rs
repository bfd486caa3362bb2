//! Acoustic features computed from the noisy mixture: amplitude modulation
//! spectrogram (AMS), RASTA-PLP cepstra and MFCC, each emitting one row per
//! frame of the shared STFT grid, then spliced over a symmetric context
//! window and normalised.

mod ams;
pub mod cache;
mod mfcc;
mod plp;
mod splice;

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{StftConfig, Waveform};
use crate::PIPELINE_RATE;

pub use ams::{ams_filter_centers, extract_ams};
pub use mfcc::{extract_mfcc, mel_energies, mel_filterbank};
pub use plp::{bark_band_powers, extract_rasta_plp, rasta_filter, rasta_plp_from_band_powers};
pub use splice::{append_deltas, assemble_feature_vector, normalize_features, splice, NormStats};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("expected {expected} Hz input, got {got} Hz")]
    WrongRate { expected: u32, got: u32 },
    #[error("feature blocks disagree on frame count: {0:?}")]
    FrameMismatch(Vec<usize>),
    #[error("expected {expected} feature dimensions, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub mfcc_dims: usize,
    pub ams_dims: usize,
    pub plp_order: usize,
    /// Frames spliced on each side of the centre frame.
    pub context: usize,
    pub include_deltas: bool,
    /// Frame grid; must match the grid of the mask targets.
    pub grid: StftConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { mfcc_dims: 31, ams_dims: 15, plp_order: 12, context: 2, include_deltas: false, grid: StftConfig::default() }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.mfcc_dims == 0 || self.mfcc_dims > mfcc::MEL_BANDS {
            return Err(FeatureError::InvalidConfig(format!("mfcc_dims must be in 1..={}", mfcc::MEL_BANDS)));
        }
        if self.ams_dims == 0 || self.plp_order == 0 {
            return Err(FeatureError::InvalidConfig("ams_dims and plp_order must be at least 1".into()));
        }
        self.grid.validate()?;
        Ok(())
    }

    /// Per-frame dimensionality before splicing.
    pub fn base_dims(&self) -> usize {
        let d = self.ams_dims + self.plp_order + 1 + self.mfcc_dims;
        if self.include_deltas {
            2 * d
        } else {
            d
        }
    }

    /// Dimensionality of the spliced network input.
    pub fn spliced_dims(&self) -> usize {
        self.base_dims() * (2 * self.context + 1)
    }
}

/// T×D feature rows aligned with the STFT frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }
}

/// Full feature pipeline: AMS, RASTA-PLP and MFCC blocks (optionally with
/// deltas), concatenated and spliced over the context window. Not
/// normalised.
pub fn extract_features(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    cfg.validate()?;
    let mut parts = vec![extract_ams(w, cfg)?, extract_rasta_plp(w, cfg)?, extract_mfcc(w, cfg)?];
    if cfg.include_deltas {
        parts = parts.iter().map(append_deltas).collect();
    }
    assemble_feature_vector(&parts, cfg)
}

fn check_input(w: &Waveform, cfg: &FeatureConfig) -> Result<usize, FeatureError> {
    if w.sample_rate() != PIPELINE_RATE {
        return Err(FeatureError::WrongRate { expected: PIPELINE_RATE, got: w.sample_rate() });
    }
    if w.len() < cfg.grid.frame_len {
        return Err(FeatureError::TooShort { len: w.len(), needed: cfg.grid.frame_len });
    }
    Ok(cfg.grid.num_frames(w.len()))
}

/// Per-frame power spectra on the shared grid: Hann-windowed frames
/// zero-padded to `fft_size`.
pub(crate) fn power_frames(x: &[f64], grid: &StftConfig, fft_size: usize) -> Array2<f64> {
    let frames = grid.num_frames(x.len());
    let window = grid.window_coefficients();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(fft_size);
    let nbins = fft_size / 2 + 1;
    let mut buf = vec![Complex64::default(); fft_size];
    let mut out = Array2::zeros((frames, nbins));
    for t in 0..frames {
        buf.fill(Complex64::default());
        let start = t * grid.hop;
        for n in 0..grid.frame_len {
            buf[n].re = x[start + n] * window[n];
        }
        fft.process(&mut buf);
        for (k, v) in out.row_mut(t).iter_mut().enumerate() {
            *v = buf[k].norm_sqr();
        }
    }
    out
}
