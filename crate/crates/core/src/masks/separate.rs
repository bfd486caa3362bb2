//! Mask-based separation of waveforms. Signals are zero-padded before
//! analysis so every real sample lies where the synthesis windows fully
//! overlap; the padding is trimmed after resynthesis.

use crate::signal::{istft, pad_for_analysis, stft, Spectrogram, StftConfig, Waveform};

use super::{oracle_mask, MaskError, MaskParams, TargetKind};

/// Spectrogram of a padded signal plus what is needed to undo the padding.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spec: Spectrogram,
    pub lead: usize,
    pub len: usize,
}

pub fn analyse(w: &Waveform, cfg: &StftConfig) -> Result<Analysis, MaskError> {
    let (padded, lead) = pad_for_analysis(w, cfg);
    Ok(Analysis { spec: stft(&padded, cfg)?, lead, len: w.len() })
}

/// Inverse of [`analyse`] for a (possibly modified) spectrogram on the
/// same grid.
pub fn resynthesize(est: &Spectrogram, lead: usize, len: usize) -> Result<Waveform, MaskError> {
    Ok(istft(est)?.slice(lead, len))
}

/// Output of a separation: the waveform and the estimated clean
/// spectrogram on the padded analysis grid.
#[derive(Debug, Clone)]
pub struct Separation {
    pub waveform: Waveform,
    pub estimate: Spectrogram,
}

/// Separate with the ideal mask of `kind` computed from the true sources.
pub fn oracle_separation(
    speech: &Waveform,
    noise: &Waveform,
    mixture: &Waveform,
    kind: TargetKind,
    cfg: &StftConfig,
    p: &MaskParams,
) -> Result<Separation, MaskError> {
    if speech.len() != mixture.len() || noise.len() != mixture.len() {
        return Err(MaskError::SignalMismatch(format!(
            "speech {}, noise {}, mixture {} samples",
            speech.len(),
            noise.len(),
            mixture.len()
        )));
    }
    let s = analyse(speech, cfg)?;
    let n = analyse(noise, cfg)?;
    let y = analyse(mixture, cfg)?;
    let estimate = oracle_mask(kind, &s.spec, &n.spec, &y.spec, p)?.apply(&y.spec)?;
    Ok(Separation { waveform: resynthesize(&estimate, y.lead, y.len)?, estimate })
}
