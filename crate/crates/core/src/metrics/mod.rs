//! Objective evaluation: STOI, SNR and SI-SDR (quality proxies), spectral
//! MSE, and per-condition aggregation.

mod eval;
mod stoi;

use thiserror::Error;

use crate::signal::{SignalError, Spectrogram, Waveform};

pub use eval::{
    aggregate, evaluate_system, report_csv, results_jsonl, score, AggregateRow, EvalOutcome, EvalResult, Processed,
    MIXTURE_LABEL,
};
pub use stoi::stoi;

/// Reported dB values are clamped to ±this (identical signals would
/// otherwise give +∞).
pub const DB_CAP: f64 = 100.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no speech-active frames")]
    NoSpeech,
    #[error("too short for STOI: {frames} frames after silence removal, need {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("clean reference is silent")]
    SilentReference,
    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("spectrogram shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

fn to_db(ratio: f64) -> f64 {
    if ratio.is_nan() {
        return -DB_CAP;
    }
    (10.0 * ratio.log10()).clamp(-DB_CAP, DB_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrMetrics {
    pub snr_out: f64,
    pub si_sdr: f64,
}

/// Output SNR and scale-invariant SDR of `processed` against `clean`,
/// both capped to ±[`DB_CAP`].
pub fn snr_metrics(clean: &Waveform, processed: &Waveform) -> Result<SnrMetrics, MetricsError> {
    if clean.len() != processed.len() {
        return Err(MetricsError::LengthMismatch(clean.len(), processed.len()));
    }
    let c = clean.samples();
    let p = processed.samples();
    let cc: f64 = c.iter().map(|v| v * v).sum();
    if cc == 0.0 {
        return Err(MetricsError::SilentReference);
    }
    let err: f64 = c.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let alpha = c.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / cc;
    let target = alpha * alpha * cc;
    let resid: f64 = c.iter().zip(p).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    Ok(SnrMetrics { snr_out: to_db(cc / err), si_sdr: to_db(target / resid) })
}

/// Mean over T-F units of `|S - Ŝ|²`.
pub fn spectral_mse(s: &Spectrogram, est: &Spectrogram) -> Result<f64, MetricsError> {
    if s.shape() != est.shape() {
        return Err(MetricsError::ShapeMismatch(s.shape(), est.shape()));
    }
    let sum: f64 = s.bins().iter().zip(est.bins()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(sum / s.bins().len().max(1) as f64)
}
