//! Waveforms and time-frequency analysis.

mod resample;
mod stft;
pub mod wav;
mod window;

use thiserror::Error;

pub use resample::resample;
pub use stft::{cola_deviation, istft, pad_for_analysis, stft, Spectrogram, StftConfig, WindowKind};
pub use window::{hann_periodic, hann_symmetric};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("STFT configuration is not COLA-compliant (deviation {deviation:.3e})")]
    NotCola { deviation: f64 },
    #[error("spectrogram has {got} bins, configuration implies {expected}")]
    BinMismatch { got: usize, expected: usize },
    #[error("wav: {0}")]
    Wav(#[from] wav::WavError),
}

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0);
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.energy() / self.samples.len() as f64).sqrt()
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy of `len` samples starting at `offset`; missing samples read as zero.
    pub fn slice(&self, offset: usize, len: usize) -> Self {
        let mut out = vec![0.0; len];
        if offset < self.samples.len() {
            let end = (offset + len).min(self.samples.len());
            out[..end - offset].copy_from_slice(&self.samples[offset..end]);
        }
        Self { samples: out, sample_rate: self.sample_rate }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        self.slice(0, len)
    }
}
