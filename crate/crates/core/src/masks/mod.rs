//! Time-frequency training targets.
//!
//! All ratio targets are computed per T-F unit from the clean speech `S`,
//! the noise `N` and/or the mixture `Y = S + N`. The optimal ratio mask
//! (ORM) is the real gain minimising `|S - m·Y|²`, which works out to
//! `Re(S·Y*) / |Y|²`; the real part of the complex ideal ratio mask and the
//! unclipped phase-sensitive mask are the same quantity.

mod coherence;
mod separate;
pub mod export;
pub mod unit;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Spectrogram;

pub use coherence::spectral_coherence;
pub use separate::{analyse, oracle_separation, resynthesize, Analysis, Separation};

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("mask is compressed; uncompress it before applying")]
    Compressed,
    #[error("invalid mask parameters: {0}")]
    InvalidParams(String),
    #[error("signals differ in length or rate ({0})")]
    SignalMismatch(String),
    #[error("unknown target kind '{0}'")]
    UnknownKind(String),
    #[error("expected {expected} output columns for {kind}, got {got}")]
    OutputWidth { kind: TargetKind, expected: usize, got: usize },
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskParams {
    /// IBM local threshold on `|S|² - |N|²`.
    pub theta: f64,
    /// IRM exponent.
    pub beta: f64,
    /// Compression range: compressed targets lie in `(-k, k)`.
    pub k: f64,
    /// Compression steepness.
    pub c: f64,
    /// Denominator floor.
    pub eps: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self { theta: 0.0, beta: 0.5, k: 10.0, c: 0.1, eps: 1e-12 }
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<(), MaskError> {
        for (name, v) in [("k", self.k), ("c", self.c), ("beta", self.beta), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MaskError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.theta.is_finite() {
            return Err(MaskError::InvalidParams("theta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealMaskKind {
    Ibm,
    Irm,
    Psm,
    OrmRaw,
    OrmCompressed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealMask {
    pub values: Array2<f64>,
    pub kind: RealMaskKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    pub values: Array2<Complex64>,
    pub compressed: bool,
}

/// The five training targets compared by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Ibm,
    Irm,
    Cirm,
    Psm,
    Orm,
}

impl TargetKind {
    pub const ALL: [TargetKind; 5] = [TargetKind::Ibm, TargetKind::Irm, TargetKind::Cirm, TargetKind::Psm, TargetKind::Orm];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Ibm => "ibm",
            TargetKind::Irm => "irm",
            TargetKind::Cirm => "cirm",
            TargetKind::Psm => "psm",
            TargetKind::Orm => "orm",
        }
    }

    /// Width of a target row for `bins` frequency bins.
    pub fn output_dim(self, bins: usize) -> usize {
        match self {
            TargetKind::Cirm => 2 * bins,
            _ => bins,
        }
    }

    /// Targets confined to `[0, 1]` get a sigmoid output layer.
    pub fn bounded_unit_interval(self) -> bool {
        matches!(self, TargetKind::Ibm | TargetKind::Irm)
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetKind {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MaskError::UnknownKind(s.to_string()))
    }
}

fn check_shapes(a: &Spectrogram, b: &Spectrogram) -> Result<(), MaskError> {
    if a.shape() != b.shape() {
        return Err(MaskError::ShapeMismatch { left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn zip_real(a: &Spectrogram, b: &Spectrogram, f: impl Fn(Complex64, Complex64) -> f64) -> Result<Array2<f64>, MaskError> {
    check_shapes(a, b)?;
    Ok(Zip::from(a.bins()).and(b.bins()).map_collect(|&x, &y| f(x, y)))
}

/// Ideal binary mask: 1 where `|S|² - |N|² > θ`.
pub fn compute_ibm(s: &Spectrogram, n: &Spectrogram, p: &MaskParams) -> Result<RealMask, MaskError> {
    let values = zip_real(s, n, |s, n| unit::ibm(s, n, p.theta))?;
    Ok(RealMask { values, kind: RealMaskKind::Ibm })
}

/// Ideal ratio mask `(|S|² / (|S|² + |N|²))^β`; zero where the total
/// energy is below `eps`.
pub fn compute_irm(s: &Spectrogram, n: &Spectrogram, p: &MaskParams) -> Result<RealMask, MaskError> {
    let values = zip_real(s, n, |s, n| unit::irm(s, n, p.beta, p.eps))?;
    Ok(RealMask { values, kind: RealMaskKind::Irm })
}

/// Complex ideal ratio mask `M` with `M·Y = S`. When `compress` is set the
/// real and imaginary parts are each passed through the tanh compression.
pub fn compute_cirm(s: &Spectrogram, y: &Spectrogram, p: &MaskParams, compress: bool) -> Result<ComplexMask, MaskError> {
    check_shapes(s, y)?;
    let values = Zip::from(s.bins()).and(y.bins()).map_collect(|&s, &y| {
        let m = unit::cirm(s, y, p.eps);
        if compress {
            Complex64::new(unit::compress(m.re, p.k, p.c), unit::compress(m.im, p.k, p.c))
        } else {
            m
        }
    });
    Ok(ComplexMask { values, compressed: compress })
}

/// Phase-sensitive mask `|S|/|Y| · cos(θS - θY)`, clipped to `[-K, K]`.
pub fn compute_psm(s: &Spectrogram, y: &Spectrogram, p: &MaskParams) -> Result<RealMask, MaskError> {
    let values = zip_real(s, y, |s, y| unit::psm_unclipped(s, y, p.eps).clamp(-p.k, p.k))?;
    Ok(RealMask { values, kind: RealMaskKind::Psm })
}

/// Optimal ratio mask `(|S|² + Re(S·N*)) / |S + N|²`, zero on units whose
/// mixture energy is below `eps`.
pub fn compute_orm_raw(s: &Spectrogram, n: &Spectrogram, p: &MaskParams) -> Result<RealMask, MaskError> {
    let values = zip_real(s, n, |s, n| unit::orm(s, n, p.eps))?;
    Ok(RealMask { values, kind: RealMaskKind::OrmRaw })
}

/// `K · (1 - e^{-cγ}) / (1 + e^{-cγ})`, applied elementwise.
pub fn compress_mask(m: &RealMask, p: &MaskParams) -> RealMask {
    RealMask { values: m.values.mapv(|g| unit::compress(g, p.k, p.c)), kind: RealMaskKind::OrmCompressed }
}

/// Inverse of [`compress_mask`]. Values within 1e-9 of `±K` are clamped first.
pub fn uncompress_mask(m: &RealMask, p: &MaskParams) -> RealMask {
    let kind = match m.kind {
        RealMaskKind::OrmCompressed => RealMaskKind::OrmRaw,
        other => other,
    };
    RealMask { values: m.values.mapv(|v| unit::uncompress(v, p.k, p.c)), kind }
}

pub fn uncompress_complex(m: &ComplexMask, p: &MaskParams) -> ComplexMask {
    if !m.compressed {
        return m.clone();
    }
    let values = m
        .values
        .mapv(|v| Complex64::new(unit::uncompress(v.re, p.k, p.c), unit::uncompress(v.im, p.k, p.c)));
    ComplexMask { values, compressed: false }
}

/// Scales each mixture unit by the real mask, keeping the mixture phase.
pub fn apply_real_mask(m: &RealMask, y: &Spectrogram) -> Result<Spectrogram, MaskError> {
    if m.kind == RealMaskKind::OrmCompressed {
        return Err(MaskError::Compressed);
    }
    if m.values.dim() != y.shape() {
        return Err(MaskError::ShapeMismatch { left: m.values.dim(), right: y.shape() });
    }
    Ok(y.with_bins(Zip::from(&m.values).and(y.bins()).map_collect(|&g, &c| c * g)))
}

/// Elementwise complex product `M · Y`.
pub fn apply_complex_mask(m: &ComplexMask, y: &Spectrogram) -> Result<Spectrogram, MaskError> {
    if m.compressed {
        return Err(MaskError::Compressed);
    }
    if m.values.dim() != y.shape() {
        return Err(MaskError::ShapeMismatch { left: m.values.dim(), right: y.shape() });
    }
    Ok(y.with_bins(Zip::from(&m.values).and(y.bins()).map_collect(|&g, &c| c * g)))
}

/// A mask ready to be applied to a mixture spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub enum AppliedMask {
    Real(RealMask),
    Complex(ComplexMask),
}

impl AppliedMask {
    pub fn apply(&self, y: &Spectrogram) -> Result<Spectrogram, MaskError> {
        match self {
            AppliedMask::Real(m) => apply_real_mask(m, y),
            AppliedMask::Complex(m) => apply_complex_mask(m, y),
        }
    }
}

/// Ideal (oracle) mask of the given kind, in applicable (uncompressed) form.
pub fn oracle_mask(
    kind: TargetKind,
    s: &Spectrogram,
    n: &Spectrogram,
    y: &Spectrogram,
    p: &MaskParams,
) -> Result<AppliedMask, MaskError> {
    Ok(match kind {
        TargetKind::Ibm => AppliedMask::Real(compute_ibm(s, n, p)?),
        TargetKind::Irm => AppliedMask::Real(compute_irm(s, n, p)?),
        TargetKind::Cirm => AppliedMask::Complex(compute_cirm(s, y, p, false)?),
        TargetKind::Psm => AppliedMask::Real(compute_psm(s, y, p)?),
        TargetKind::Orm => AppliedMask::Real(compute_orm_raw(s, n, p)?),
    })
}

/// Training target matrix for `kind`: T×F, or T×2F (real half, then
/// imaginary half) for the cIRM. ORM and cIRM targets are compressed.
pub fn training_target(
    kind: TargetKind,
    s: &Spectrogram,
    n: &Spectrogram,
    y: &Spectrogram,
    p: &MaskParams,
) -> Result<Array2<f64>, MaskError> {
    Ok(match kind {
        TargetKind::Ibm => compute_ibm(s, n, p)?.values,
        TargetKind::Irm => compute_irm(s, n, p)?.values,
        TargetKind::Psm => compute_psm(s, y, p)?.values,
        TargetKind::Orm => compress_mask(&compute_orm_raw(s, n, p)?, p).values,
        TargetKind::Cirm => {
            let m = compute_cirm(s, y, p, true)?;
            let (t, f) = m.values.dim();
            let mut out = Array2::zeros((t, 2 * f));
            for ((i, j), v) in m.values.indexed_iter() {
                out[[i, j]] = v.re;
                out[[i, j + f]] = v.im;
            }
            out
        }
    })
}

/// Converts estimator outputs (one row per frame, in training-target
/// units) into an applicable mask. IBM outputs are thresholded at 0.5 unless
/// `soft_ibm` is set.
pub fn mask_from_output(
    kind: TargetKind,
    output: &Array2<f64>,
    p: &MaskParams,
    soft_ibm: bool,
) -> Result<AppliedMask, MaskError> {
    let (_, width) = output.dim();
    let bins = match kind {
        TargetKind::Cirm => width / 2,
        _ => width,
    };
    if width == 0 || kind.output_dim(bins) != width {
        return Err(MaskError::OutputWidth { kind, expected: kind.output_dim(bins.max(1)), got: width });
    }
    Ok(match kind {
        TargetKind::Ibm => {
            let values = if soft_ibm { output.clone() } else { output.mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }) };
            AppliedMask::Real(RealMask { values, kind: RealMaskKind::Ibm })
        }
        TargetKind::Irm => AppliedMask::Real(RealMask { values: output.clone(), kind: RealMaskKind::Irm }),
        TargetKind::Psm => AppliedMask::Real(RealMask { values: output.clone(), kind: RealMaskKind::Psm }),
        TargetKind::Orm => AppliedMask::Real(uncompress_mask(
            &RealMask { values: output.clone(), kind: RealMaskKind::OrmCompressed },
            p,
        )),
        TargetKind::Cirm => {
            let t = output.nrows();
            let values = Array2::from_shape_fn((t, bins), |(i, j)| Complex64::new(output[[i, j]], output[[i, j + bins]]));
            AppliedMask::Complex(uncompress_complex(&ComplexMask { values, compressed: true }, p))
        }
    })
}
