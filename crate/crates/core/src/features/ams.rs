//! Broadband amplitude modulation spectrogram.
//!
//! The full-wave rectified signal is decimated by four to a 4 kHz envelope.
//! Around the centre of each STFT frame a 32 ms envelope segment is taken,
//! its mean removed, Hann-windowed and transformed; triangular filters with
//! log-spaced centres between 15.6 and 400 Hz pool the modulation magnitude
//! spectrum into one value per filter.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{check_input, FeatureConfig, FeatureError, FeatureMatrix};
use crate::signal::{hann_periodic, resample, Waveform};

const DECIMATION: u32 = 4;
const SEGMENT: usize = 128;
const FFT_SIZE: usize = 1024;
const LOWEST_CENTER_HZ: f64 = 15.625;
const HIGHEST_CENTER_HZ: f64 = 400.0;

/// Log-spaced modulation filter centres, lowest first.
pub fn ams_filter_centers(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![LOWEST_CENTER_HZ];
    }
    let ratio = (HIGHEST_CENTER_HZ / LOWEST_CENTER_HZ).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| LOWEST_CENTER_HZ * ratio.powi(i as i32)).collect()
}

/// Unit-area triangular filters over the modulation spectrum bins; each
/// triangle spans its neighbours' centres.
fn modulation_filters(count: usize, env_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let centers = ams_filter_centers(count);
    let ratio = if count > 1 { centers[1] / centers[0] } else { 1.5 };
    let bin_hz = env_rate / FFT_SIZE as f64;
    (0..count)
        .map(|i| {
            let c = centers[i];
            let lo = if i == 0 { c / ratio } else { centers[i - 1] };
            let hi = if i + 1 == count { c * ratio } else { centers[i + 1] };
            let mut taps: Vec<(usize, f64)> = (0..=FFT_SIZE / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

pub fn extract_ams(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let frames = check_input(w, cfg)?;
    let rectified = Waveform::new(w.samples().iter().map(|x| x.abs()).collect(), w.sample_rate())?;
    let env_rate = w.sample_rate() / DECIMATION;
    let envelope = resample(&rectified, env_rate)?;
    let env = envelope.samples();

    let filters = modulation_filters(cfg.ams_dims, env_rate as f64);
    let window = hann_periodic(SEGMENT);
    let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
    let mut buf = vec![Complex64::default(); FFT_SIZE];
    let mut segment = vec![0.0; SEGMENT];
    let mut out = ndarray::Array2::zeros((frames, cfg.ams_dims));
    let centre_offset = cfg.grid.frame_len as f64 / 2.0;
    for t in 0..frames {
        let centre = (t as f64 * cfg.grid.hop as f64 + centre_offset) / DECIMATION as f64;
        let start = centre.round() as i64 - SEGMENT as i64 / 2;
        for (i, s) in segment.iter_mut().enumerate() {
            let k = start + i as i64;
            *s = if k >= 0 && (k as usize) < env.len() { env[k as usize] } else { 0.0 };
        }
        let mean = segment.iter().sum::<f64>() / SEGMENT as f64;
        buf.fill(Complex64::default());
        for (b, (s, wv)) in buf.iter_mut().zip(segment.iter().zip(&window)) {
            b.re = (s - mean) * wv;
        }
        fft.process(&mut buf);
        for (j, taps) in filters.iter().enumerate() {
            out[[t, j]] = taps.iter().map(|&(k, wt)| wt * buf[k].norm()).sum();
        }
    }
    Ok(FeatureMatrix::new(out))
}
