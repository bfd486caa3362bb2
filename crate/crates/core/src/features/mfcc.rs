use ndarray::Array2;
use std::f64::consts::PI;

use super::{check_input, power_frames, FeatureConfig, FeatureError, FeatureMatrix};
use crate::signal::Waveform;

pub(crate) const MEL_BANDS: usize = 40;
const FFT_SIZE: usize = 512;
const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between `fmin` and
/// `fmax`, unit peak, as a `bands × (fft_size/2 + 1)` matrix.
pub fn mel_filterbank(bands: usize, fft_size: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Array2<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64)).collect();
    let nbins = fft_size / 2 + 1;
    Array2::from_shape_fn((bands, nbins), |(b, k)| {
        let f = k as f64 * sample_rate / fft_size as f64;
        let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    })
}

/// Pre-emphasised, Hann-windowed mel filterbank energies (T × 40).
pub fn mel_energies(w: &Waveform, cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    check_input(w, cfg)?;
    let x = w.samples();
    let mut emph = Vec::with_capacity(x.len());
    emph.push(x[0]);
    emph.extend(x.windows(2).map(|p| p[1] - PRE_EMPHASIS * p[0]));
    let power = power_frames(&emph, &cfg.grid, FFT_SIZE);
    let bank = mel_filterbank(MEL_BANDS, FFT_SIZE, w.sample_rate() as f64, 0.0, w.sample_rate() as f64 / 2.0);
    Ok(power.dot(&bank.t()))
}

/// Orthonormal DCT-II rows `0..keep` for an `n`-point input.
fn dct_matrix(keep: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((keep, n), |(k, m)| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (PI * k as f64 * (m as f64 + 0.5) / n as f64).cos()
    })
}

/// MFCC: log mel energies (floored at 1e-10) through a DCT-II, keeping the
/// first `mfcc_dims` coefficients including c0.
pub fn extract_mfcc(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let energies = mel_energies(w, cfg)?;
    let logs = energies.mapv(|e| e.max(LOG_FLOOR).ln());
    let dct = dct_matrix(cfg.mfcc_dims, MEL_BANDS);
    Ok(FeatureMatrix::new(logs.dot(&dct.t())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn silence_gives_dct_of_the_log_floor() {
        let cfg = FeatureConfig::default();
        let m = extract_mfcc(&Waveform::zeros(3200, 16_000), &cfg).unwrap();
        let expected = dct_matrix(cfg.mfcc_dims, MEL_BANDS).dot(&Array1::from_elem(MEL_BANDS, LOG_FLOOR.ln()));
        for row in m.values.rows() {
            for (a, b) in row.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(expected.iter().skip(1).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn scaling_only_moves_c0() {
        let cfg = FeatureConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..6400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = Waveform::new(x, 16_000).unwrap();
        assert!(mel_energies(&w, &cfg).unwrap().iter().all(|&e| e > LOG_FLOOR));
        let a = extract_mfcc(&w, &cfg).unwrap().values;
        let b = extract_mfcc(&w.scaled(3.0), &cfg).unwrap().values;
        let shift = 2.0 * 3f64.ln() * (MEL_BANDS as f64).sqrt();
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            assert!((rb[0] - ra[0] - shift).abs() < 1e-9);
            for k in 1..cfg.mfcc_dims {
                assert!((ra[k] - rb[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tone_excites_the_band_covering_it() {
        let cfg = FeatureConfig::default();
        let x: Vec<f64> = (0..8000).map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin()).collect();
        let e = mel_energies(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
        let bank = mel_filterbank(MEL_BANDS, FFT_SIZE, 16_000.0, 0.0, 8_000.0);
        // 1 kHz falls exactly on bin 32 of the 512-point grid.
        let expected = (0..MEL_BANDS).max_by(|&a, &b| bank[[a, 32]].total_cmp(&bank[[b, 32]])).unwrap();
        for row in e.rows() {
            let got = (0..MEL_BANDS).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn every_mel_filter_covers_a_bin() {
        let bank = mel_filterbank(MEL_BANDS, FFT_SIZE, 16_000.0, 0.0, 8_000.0);
        for row in bank.rows() {
            assert!(row.iter().any(|&v| v > 0.0));
        }
    }
}
