//! Short-time objective intelligibility (STOI).
//!
//! Both signals are resampled to 10 kHz, frames more than 40 dB below the
//! loudest clean frame are dropped from both, and one-third-octave band
//! envelopes are compared over 384 ms segments after normalising and
//! clipping the processed envelope.

use ndarray::{s, Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::MetricsError;
use crate::signal::{hann_symmetric, resample, Waveform};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per envelope segment.
const SEGMENT: usize = 30;
/// Lower signal-to-distortion bound in dB.
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// `BANDS × (NFFT/2 + 1)` 0/1 matrix selecting each one-third-octave band.
fn third_octave_matrix() -> Array2<f64> {
    let nbins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..nbins).map(|k| k as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |f: f64| {
        (0..nbins).min_by(|&a, &b| (freqs[a] - f).powi(2).total_cmp(&(freqs[b] - f).powi(2))).unwrap()
    };
    let mut m = Array2::zeros((BANDS, nbins));
    for b in 0..BANDS {
        let lo = nearest(MIN_FREQ * 2f64.powf((2.0 * b as f64 - 1.0) / 6.0));
        let hi = nearest(MIN_FREQ * 2f64.powf((2.0 * b as f64 + 1.0) / 6.0));
        m.slice_mut(s![b, lo..hi]).fill(1.0);
    }
    m
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..(len + 1).saturating_sub(FRAME)).step_by(HOP)
}

/// Drop frames of both signals whose clean energy is more than the dynamic
/// range below the loudest clean frame, then overlap-add the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    if starts.is_empty() {
        return Err(MetricsError::TooShort { frames: 0, needed: SEGMENT });
    }
    let energy: Vec<f64> = starts
        .iter()
        .map(|&i| {
            let norm = x[i..i + FRAME].iter().zip(w).map(|(v, w)| (v * w).powi(2)).sum::<f64>().sqrt();
            20.0 * (norm + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 20.0 * EPS.log10() {
        return Err(MetricsError::NoSpeech);
    }
    let kept: Vec<usize> = starts.iter().zip(&energy).filter(|(_, e)| max - DYN_RANGE_DB - **e < 0.0).map(|(s, _)| *s).collect();
    let len = (kept.len() - 1) * HOP + FRAME;
    let (mut xs, mut ys) = (vec![0.0; len], vec![0.0; len]);
    for (j, &i) in kept.iter().enumerate() {
        for n in 0..FRAME {
            xs[j * HOP + n] += x[i + n] * w[n];
            ys[j * HOP + n] += y[i + n] * w[n];
        }
    }
    Ok((xs, ys))
}

/// One-third-octave band magnitudes, `BANDS × frames`.
fn band_envelopes(x: &[f64], w: &[f64], obm: &Array2<f64>) -> Array2<f64> {
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    // Frames start strictly before `len - FRAME`, as in the reference
    // implementation.
    let starts: Vec<usize> = (0..x.len().saturating_sub(FRAME)).step_by(HOP).collect();
    let nbins = NFFT / 2 + 1;
    let mut power = Array2::zeros((nbins, starts.len()));
    let mut buf = vec![Complex64::default(); NFFT];
    for (t, &i) in starts.iter().enumerate() {
        buf.fill(Complex64::default());
        for n in 0..FRAME {
            buf[n].re = x[i + n] * w[n];
        }
        fft.process(&mut buf);
        for k in 0..nbins {
            power[[k, t]] = buf[k].norm_sqr();
        }
    }
    obm.dot(&power).mapv(f64::sqrt)
}

fn centred_unit(v: ArrayView1<f64>) -> Vec<f64> {
    let mean = v.mean().unwrap_or(0.0);
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt() + EPS;
    c.into_iter().map(|x| x / norm).collect()
}

/// STOI of `processed` against `clean`, in [0, 1]. `processed` is trimmed
/// or zero-padded to the clean length.
pub fn stoi(clean: &Waveform, processed: &Waveform) -> Result<f64, MetricsError> {
    if clean.sample_rate() != processed.sample_rate() {
        return Err(MetricsError::RateMismatch(clean.sample_rate(), processed.sample_rate()));
    }
    let processed = processed.fit_to(clean.len());
    let (x, y) = if clean.sample_rate() == FS {
        (clean.clone(), processed)
    } else {
        (resample(clean, FS)?, resample(&processed, FS)?)
    };
    let w = hann_symmetric(FRAME);
    let (x, y) = remove_silent_frames(x.samples(), y.samples(), &w)?;
    let obm = third_octave_matrix();
    let xe = band_envelopes(&x, &w, &obm);
    let ye = band_envelopes(&y, &w, &obm);
    let frames = xe.ncols();
    if frames < SEGMENT {
        return Err(MetricsError::TooShort { frames, needed: SEGMENT });
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in SEGMENT..=frames {
        let xs = xe.slice(s![.., m - SEGMENT..m]);
        let ys = ye.slice(s![.., m - SEGMENT..m]);
        for b in 0..BANDS {
            let (xr, yr) = (xs.row(b), ys.row(b));
            let xn = xr.dot(&xr).sqrt();
            let yn = yr.dot(&yr).sqrt();
            let k = xn / (yn + EPS);
            let yp: Vec<f64> = yr.iter().zip(xr).map(|(y, x)| (y * k).min(x * (1.0 + clip))).collect();
            let xu = centred_unit(xr);
            let yu = centred_unit(ArrayView1::from(&yp));
            total += xu.iter().zip(&yu).map(|(a, b)| a * b).sum::<f64>();
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}
