//! Mixture corpus construction: a seeded manifest of (utterance, noise
//! slice, SNR) triples, exact SNR mixing, and rendering of training pairs
//! into an on-disk store.

mod manifest;
mod mixing;
mod render;
pub mod synth;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::features::FeatureError;
use crate::masks::MaskError;
use crate::signal::{resample, wav, SignalError, Waveform};
use crate::PIPELINE_RATE;

pub use manifest::{build_manifest, list_wavs, Manifest, ManifestConfig, ManifestMeta, MixtureSpec, Split};
pub use mixing::{mix_at_snr, realize, snr_db, Realized};
pub use render::{
    read_spec_matrix, render_dataset, render_features, spec_dir, target_file, RenderConfig, RenderSummary, FEATURES_FILE,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no .wav files in {0}")]
    NoFiles(String),
    #[error("noise {noise} has {noise_len} samples but utterance {speech} needs at least {needed} (twice its length)")]
    NoiseTooShort { noise: String, speech: String, noise_len: usize, needed: usize },
    #[error("{0} is silent")]
    Silent(String),
    #[error("length mismatch: speech has {speech} samples, noise {noise}")]
    LengthMismatch { speech: usize, noise: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("invalid dataset configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Audio { path: String, source: SignalError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Manifest { path: String, line: usize, reason: String },
    #[error("spec {id}: {reason}")]
    Spec { id: String, reason: String },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// Read a WAV file and bring it to the pipeline rate.
pub fn load_audio(path: &Path) -> Result<Waveform, DatasetError> {
    let audio_err = |source| DatasetError::Audio { path: path.display().to_string(), source };
    let w = wav::read(path).map_err(|e| audio_err(e.into()))?;
    if w.sample_rate() == PIPELINE_RATE {
        Ok(w)
    } else {
        resample(&w, PIPELINE_RATE).map_err(audio_err)
    }
}

/// Memoising loader shared by manifest construction and rendering.
#[derive(Debug, Default)]
pub struct AudioCache {
    loaded: Mutex<HashMap<PathBuf, Arc<Waveform>>>,
}

impl AudioCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &Path) -> Result<Arc<Waveform>, DatasetError> {
        if let Some(w) = self.loaded.lock().unwrap().get(path) {
            return Ok(Arc::clone(w));
        }
        // Loaded outside the lock; concurrent first loads of one file are
        // harmless (identical results).
        let w = Arc::new(load_audio(path)?);
        self.loaded.lock().unwrap().insert(path.to_path_buf(), Arc::clone(&w));
        Ok(w)
    }
}
