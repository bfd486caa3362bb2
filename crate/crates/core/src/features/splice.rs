//! Block concatenation, context splicing, deltas and mean/variance
//! normalisation.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{FeatureConfig, FeatureError, FeatureMatrix};

const STD_FLOOR: f64 = 1e-8;
const DELTA_SPAN: isize = 2;

/// Concatenate per-frame blocks (in order) and splice the result over the
/// configured context window.
pub fn assemble_feature_vector(parts: &[FeatureMatrix], cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let frames: Vec<usize> = parts.iter().map(FeatureMatrix::frames).collect();
    if frames.is_empty() || frames.iter().any(|&t| t != frames[0]) {
        return Err(FeatureError::FrameMismatch(frames));
    }
    let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
    let joined = concatenate(Axis(1), &views).expect("frame counts checked above");
    let expected = cfg.base_dims();
    if joined.ncols() != expected {
        return Err(FeatureError::DimMismatch { expected, got: joined.ncols() });
    }
    Ok(splice(&FeatureMatrix::new(joined), cfg.context))
}

/// Stack frames `t-context ..= t+context` into one row, replicating the
/// first and last frame at the edges.
pub fn splice(m: &FeatureMatrix, context: usize) -> FeatureMatrix {
    let (frames, dims) = m.values.dim();
    let width = 2 * context + 1;
    let mut out = Array2::zeros((frames, dims * width));
    if frames == 0 {
        return FeatureMatrix::new(out);
    }
    for t in 0..frames {
        for j in 0..width {
            let src = (t + j).saturating_sub(context).min(frames - 1);
            out.row_mut(t).slice_mut(ndarray::s![j * dims..(j + 1) * dims]).assign(&m.values.row(src));
        }
    }
    FeatureMatrix::new(out)
}

/// Append first-order regression deltas over ±2 frames.
pub fn append_deltas(m: &FeatureMatrix) -> FeatureMatrix {
    let (frames, dims) = m.values.dim();
    let mut delta = Array2::zeros((frames, dims));
    let denom: f64 = 2.0 * (1..=DELTA_SPAN).map(|k| (k * k) as f64).sum::<f64>();
    let last = frames as isize - 1;
    for t in 0..frames as isize {
        let mut row = delta.row_mut(t as usize);
        for k in 1..=DELTA_SPAN {
            let ahead = m.values.row((t + k).min(last) as usize);
            let behind = m.values.row((t - k).max(0) as usize);
            row.scaled_add(k as f64 / denom, &(&ahead - &behind));
        }
    }
    FeatureMatrix::new(concatenate(Axis(1), &[m.values.view(), delta.view()]).expect("same frame count"))
}

/// Per-dimension mean and standard deviation of the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let n = m.frames().max(1) as f64;
        let mean: Array1<f64> = m.values.sum_axis(Axis(0)) / n;
        let std: Vec<f64> = (0..m.dims())
            .map(|j| {
                let col = m.values.column(j);
                let v = col.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
                v.sqrt().max(STD_FLOOR)
            })
            .collect();
        Self { mean: mean.to_vec(), std }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        if m.dims() != self.dims() {
            return Err(FeatureError::DimMismatch { expected: self.dims(), got: m.dims() });
        }
        let mut out = m.values.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(FeatureMatrix::new(out))
    }
}

/// Normalise `apply_to` with statistics fitted on `train`, or with the
/// supplied statistics when given (in which case `train` is ignored).
pub fn normalize_features(
    train: &FeatureMatrix,
    apply_to: &FeatureMatrix,
    stats: Option<&NormStats>,
) -> Result<(FeatureMatrix, NormStats), FeatureError> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(train),
    };
    Ok((stats.apply(apply_to)?, stats))
}
