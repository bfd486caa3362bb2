//! Mask estimation from (normalised) feature rows.

use ndarray::{s, Array2, Axis};

use super::{Mlp, NnError};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix, NormStats};
use crate::masks::{mask_from_output, resynthesize, AppliedMask, MaskParams, TargetKind};
use crate::signal::{pad_for_analysis, stft, Spectrogram, Waveform};

const CHUNK: usize = 2048;

/// Eval-mode network outputs for every feature row.
pub fn predict(model: &Mlp<f32>, features: &FeatureMatrix) -> Result<Array2<f64>, NnError> {
    let x = &features.values;
    let mut out = Array2::zeros((x.nrows(), model.config.output_dim()));
    for start in (0..x.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(x.nrows());
        let batch = x.slice(s![start..end, ..]).mapv(|v| v as f32);
        let y = model.predict(batch.view())?;
        out.slice_mut(s![start..end, ..]).assign(&y.mapv(f64::from));
    }
    debug_assert_eq!(out.len_of(Axis(0)), x.nrows());
    Ok(out)
}

/// Estimate an applicable mask of `kind`: one row per feature frame,
/// compressed targets expanded, IBM thresholded at 0.5 unless `soft_ibm`.
pub fn infer_mask(
    model: &Mlp<f32>,
    features: &FeatureMatrix,
    kind: TargetKind,
    params: &MaskParams,
    soft_ibm: bool,
) -> Result<AppliedMask, NnError> {
    if model.config.target != Some(kind) {
        let model_kind = model.config.target.map_or("no target".to_string(), |k| k.to_string());
        return Err(NnError::KindMismatch { model: model_kind, requested: kind });
    }
    infer_from_output(model, kind, &predict(model, features)?, params, soft_ibm)
}

/// Result of separating one mixture with a trained model.
#[derive(Debug, Clone)]
pub struct ModelSeparation {
    pub waveform: Waveform,
    /// Masked mixture spectrogram on the padded analysis grid.
    pub estimate: Spectrogram,
    /// Raw network outputs, one row per frame.
    pub output: Array2<f64>,
}

/// Features of the padded mixture → normalisation → network → mask →
/// masked mixture spectrogram → waveform.
pub fn separate(
    model: &Mlp<f32>,
    norm: &NormStats,
    features: &FeatureConfig,
    mixture: &Waveform,
    kind: TargetKind,
    params: &MaskParams,
    soft_ibm: bool,
) -> Result<ModelSeparation, NnError> {
    let (padded, lead) = pad_for_analysis(mixture, &features.grid);
    let y = stft(&padded, &features.grid).map_err(crate::masks::MaskError::from)?;
    let x = norm.apply(&extract_features(&padded, features)?)?;
    let output = predict(model, &x)?;
    let estimate = infer_from_output(model, kind, &output, params, soft_ibm)?.apply(&y)?;
    let waveform = resynthesize(&estimate, lead, mixture.len())?;
    Ok(ModelSeparation { waveform, estimate, output })
}

fn infer_from_output(
    model: &Mlp<f32>,
    kind: TargetKind,
    output: &Array2<f64>,
    params: &MaskParams,
    soft_ibm: bool,
) -> Result<AppliedMask, NnError> {
    if model.config.target != Some(kind) {
        let model_kind = model.config.target.map_or("no target".to_string(), |k| k.to_string());
        return Err(NnError::KindMismatch { model: model_kind, requested: kind });
    }
    Ok(mask_from_output(kind, output, params, soft_ibm)?)
}
