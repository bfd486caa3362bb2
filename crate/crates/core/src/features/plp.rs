//! RASTA-PLP cepstra.
//!
//! Critical-band power spectrum on the shared frame grid, log compression,
//! RASTA band-pass filtering of every band trajectory, exponentiation,
//! equal-loudness weighting, cube-root intensity-loudness compression, an
//! all-pole model fitted by Levinson-Durbin and its cepstrum.

use ndarray::{Array1, Array2};

use super::{check_input, power_frames, FeatureConfig, FeatureError, FeatureMatrix};
use crate::signal::Waveform;

const FFT_SIZE: usize = 512;
const LOG_FLOOR: f64 = 1e-10;
/// RASTA numerator `0.1 · (2 + z⁻¹ - z⁻³ - 2z⁻⁴)`.
const RASTA_NUM: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
/// RASTA pole.
const RASTA_POLE: f64 = 0.98;

fn hz_to_bark(f: f64) -> f64 {
    6.0 * (f / 600.0).asinh()
}

fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Number of critical bands covering 0..Nyquist at unit Bark spacing.
fn band_count(sample_rate: f64) -> usize {
    hz_to_bark(sample_rate / 2.0).ceil() as usize + 1
}

/// Trapezoidal critical-band weights on the Bark axis (flat ±0.5 Bark,
/// skirts of +25 dB/Bark below and -10 dB/Bark above).
fn bark_filterbank(bands: usize, sample_rate: f64) -> Array2<f64> {
    let nyq_bark = hz_to_bark(sample_rate / 2.0);
    let step = nyq_bark / (bands - 1) as f64;
    let nbins = FFT_SIZE / 2 + 1;
    Array2::from_shape_fn((bands, nbins), |(b, k)| {
        let z = hz_to_bark(k as f64 * sample_rate / FFT_SIZE as f64);
        let mid = b as f64 * step;
        let lof = z - mid - 0.5;
        let hif = z - mid + 0.5;
        10f64.powf(hif.min(-2.5 * lof).min(0.0))
    })
}

/// Critical-band power per frame (T × bands).
pub fn bark_band_powers(w: &Waveform, cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    check_input(w, cfg)?;
    let sr = w.sample_rate() as f64;
    let power = power_frames(w.samples(), &cfg.grid, FFT_SIZE);
    Ok(power.dot(&bark_filterbank(band_count(sr), sr).t()))
}

/// RASTA band-pass filter applied along time to one trajectory. The filter
/// starts in steady state for the first value (as if the trajectory had
/// been constant before it), so constant offsets are removed from the
/// first frame on.
pub fn rasta_filter(x: &[f64]) -> Vec<f64> {
    let Some(&first) = x.first() else {
        return Vec::new();
    };
    let at = |i: isize| if i < 0 { first } else { x[i as usize] };
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for t in 0..x.len() as isize {
        let fir: f64 = RASTA_NUM.iter().enumerate().map(|(k, b)| b * at(t - k as isize)).sum();
        prev = fir + RASTA_POLE * prev;
        y.push(prev);
    }
    y
}

/// Equal-loudness curve evaluated at a band centre frequency.
fn equal_loudness(f: f64) -> f64 {
    let fsq = f * f;
    let ftmp = fsq + 1.6e5;
    (fsq / ftmp).powi(2) * ((fsq + 1.44e6) / (fsq + 9.61e6))
}

/// Levinson-Durbin recursion. Returns the predictor polynomial
/// `[1, a1, .., ap]` and the final prediction error.
fn levinson(r: &[f64], order: usize) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err <= 0.0 {
        return (a, 0.0);
    }
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    (a, err)
}

/// Cepstrum of the all-pole model `gain / A(z)`; `order + 1` coefficients
/// with `c0 = ln(gain)`.
fn lpc_to_cepstrum(a: &[f64], gain: f64) -> Vec<f64> {
    let p = a.len() - 1;
    let mut c = vec![0.0; p + 1];
    c[0] = gain.max(LOG_FLOOR).ln();
    for n in 1..=p {
        let sum: f64 = (1..n).map(|m| (n - m) as f64 * a[m] * c[n - m]).sum();
        c[n] = -(a[n] + sum / n as f64);
    }
    c
}

/// RASTA-PLP cepstra from critical-band power trajectories (T × bands).
pub fn rasta_plp_from_band_powers(bands: &Array2<f64>, order: usize, sample_rate: f64) -> Array2<f64> {
    let (frames, nb) = bands.dim();
    let mut filtered = Array2::zeros((frames, nb));
    for b in 0..nb {
        let logs: Vec<f64> = bands.column(b).iter().map(|p| p.max(LOG_FLOOR).ln()).collect();
        for (t, v) in rasta_filter(&logs).into_iter().enumerate() {
            filtered[[t, b]] = v;
        }
    }
    let step = hz_to_bark(sample_rate / 2.0) / (nb - 1) as f64;
    let loudness: Array1<f64> = (0..nb).map(|b| equal_loudness(bark_to_hz(b as f64 * step))).collect();

    // Real even extension of the auditory spectrum, for its autocorrelation.
    let ext_len = 2 * (nb - 1);
    let cosines = Array2::from_shape_fn((order + 1, ext_len), |(lag, k)| {
        (2.0 * std::f64::consts::PI * lag as f64 * k as f64 / ext_len as f64).cos()
    });
    let mut out = Array2::zeros((frames, order + 1));
    let mut aud = vec![0.0; nb];
    let mut ext = Array1::zeros(ext_len);
    for t in 0..frames {
        for b in 0..nb {
            aud[b] = (filtered[[t, b]].exp() * loudness[b]).powf(0.33);
        }
        // Edge bands are outside the reliable loudness range; copy neighbours.
        aud[0] = aud[1];
        aud[nb - 1] = aud[nb - 2];
        for k in 0..ext_len {
            ext[k] = if k < nb { aud[k] } else { aud[ext_len - k] };
        }
        let r: Vec<f64> = cosines.dot(&ext).iter().map(|v| v / ext_len as f64).collect();
        let (a, err) = levinson(&r, order);
        for (j, c) in lpc_to_cepstrum(&a, err).into_iter().enumerate() {
            out[[t, j]] = c;
        }
    }
    out
}

pub fn extract_rasta_plp(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let bands = bark_band_powers(w, cfg)?;
    Ok(FeatureMatrix::new(rasta_plp_from_band_powers(&bands, cfg.plp_order, w.sample_rate() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    #[test]
    fn sixteen_khz_has_twenty_one_bands() {
        assert_eq!(band_count(16_000.0), 21);
    }

    #[test]
    fn rasta_has_zero_dc_gain() {
        let y = rasta_filter(&vec![3.7; 400]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        // From a zero history a step decays away through the pole.
        let mut step = vec![0.0; 10];
        step.extend(vec![1.0; 600]);
        let y = rasta_filter(&step);
        assert!(y[20].abs() > 1e-3);
        assert!(y.last().unwrap().abs() < 1e-4);
    }

    #[test]
    fn levinson_recovers_an_ar1_process() {
        // r[k] = ρ^k is the autocorrelation of x[n] = ρ x[n-1] + e[n].
        let rho: f64 = 0.8;
        let r: Vec<f64> = (0..5).map(|k| rho.powi(k)).collect();
        let (a, err) = levinson(&r, 4);
        assert!((a[1] + rho).abs() < 1e-12);
        assert!(a[2..].iter().all(|v| v.abs() < 1e-12));
        assert!((err - (1.0 - rho * rho)).abs() < 1e-12);
    }

    #[test]
    fn cepstrum_of_one_pole_model() {
        // ln(1 / (1 - ρ z⁻¹)) = Σ ρ^n / n z⁻ⁿ.
        let rho: f64 = 0.5;
        let c = lpc_to_cepstrum(&[1.0, -rho, 0.0, 0.0], 1.0);
        for n in 1..4 {
            assert!((c[n] - rho.powi(n as i32) / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn silence_gives_constant_rows() {
        let cfg = FeatureConfig::default();
        let m = extract_rasta_plp(&Waveform::zeros(8000, 16_000), &cfg).unwrap();
        assert_eq!(m.dims(), 13);
        let first = m.values.row(0).to_owned();
        for row in m.values.rows() {
            for (a, b) in row.iter().zip(&first) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_input_trajectories_decay() {
        let cfg = FeatureConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..48_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let bands = bark_band_powers(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
        // Periodic (frame-stationary) trajectories with a constant offset:
        // the offset must vanish from the filtered output.
        let col: Vec<f64> = bands.column(5).iter().map(|p| p.ln()).collect();
        let offset: Vec<f64> = col.iter().map(|v| v + 4.0).collect();
        let a = rasta_filter(&col);
        let b = rasta_filter(&offset);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        let tone: Vec<f64> = (0..32_000).map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin()).collect();
        let bands = bark_band_powers(&Waveform::new(tone, 16_000).unwrap(), &cfg).unwrap();
        let traj: Vec<f64> = bands.column(8).iter().map(|p| p.max(LOG_FLOOR).ln()).collect();
        let y = rasta_filter(&traj);
        assert!(y.iter().skip(5).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn constant_spectral_tilt_is_removed() {
        let cfg = FeatureConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Non-stationary input: noise with a slowly varying envelope.
        let x: Vec<f64> = (0..32_000)
            .map(|n| {
                let env = 1.0 + 0.8 * (2.0 * PI * 3.0 * n as f64 / 16_000.0).sin();
                { let g: f64 = StandardNormal.sample(&mut rng); env * g }
            })
            .collect();
        let bands = bark_band_powers(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
        let tilt: Vec<f64> = (0..bands.ncols()).map(|b| 10f64.powf(-0.1 * b as f64)).collect();
        let tilted = Array2::from_shape_fn(bands.dim(), |(t, b)| bands[[t, b]] * tilt[b]);
        let a = rasta_plp_from_band_powers(&bands, 12, 16_000.0);
        let b = rasta_plp_from_band_powers(&tilted, 12, 16_000.0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn waveform_tilt_converges_for_periodic_signal() {
        // A periodic signal whose period divides the hop gives identical
        // frames; a first-order tilt filter then changes every frame's band
        // powers by the same factors, which RASTA removes.
        let cfg = FeatureConfig::default();
        let sig = |n: i64| {
            let t = n as f64 / 16_000.0;
            (2.0 * PI * 400.0 * t).sin() + 0.5 * (2.0 * PI * 1200.0 * t).sin() + 0.25 * (2.0 * PI * 2800.0 * t).sin()
        };
        let x: Vec<f64> = (0..16_000).map(sig).collect();
        let y: Vec<f64> = (0..16_000).map(|n| sig(n) - 0.6 * sig(n - 1)).collect();
        let a = extract_rasta_plp(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
        let b = extract_rasta_plp(&Waveform::new(y, 16_000).unwrap(), &cfg).unwrap();
        for t in 5..a.frames() {
            for (p, q) in a.values.row(t).iter().zip(b.values.row(t)) {
                assert!((p - q).abs() < 1e-6, "frame {t}");
            }
        }
    }
}
