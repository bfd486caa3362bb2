use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::hann_periodic;
use super::{SignalError, Waveform};

/// Overlap-add normalisation floor for samples near the signal edges.
const WINDOW_SUM_FLOOR: f64 = 1e-12;
/// Maximum relative ripple of the shifted-window sum accepted as COLA.
const COLA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => hann_periodic(len),
        }
    }
}

/// Framing parameters shared by every time-frequency representation in the
/// pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 20 ms Hann frames with a 10 ms hop at 16 kHz.
    fn default() -> Self {
        Self { frame_len: 320, hop: 160, fft_size: 320, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size {
            return Err(SignalError::InvalidConfig(format!(
                "need 0 < hop <= frame_len <= fft_size, got hop={} frame_len={} fft_size={}",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.hop
        }
    }

    /// Number of samples spanned by `frames` analysis frames.
    pub fn span(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    pub fn window_coefficients(&self) -> Vec<f64> {
        self.window.coefficients(self.frame_len)
    }

    pub fn is_cola(&self) -> bool {
        cola_deviation(&self.window_coefficients(), self.hop, 1) < COLA_TOLERANCE
    }
}

/// Largest relative deviation from its mean of the hop-periodic sum
/// `Σ_k w[n + k·hop]^power`.
pub fn cola_deviation(window: &[f64], hop: usize, power: i32) -> f64 {
    assert!(hop > 0);
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).map(|w| w.powi(power)).sum())
        .collect();
    let mean = sums.iter().sum::<f64>() / hop as f64;
    if mean == 0.0 {
        return f64::INFINITY;
    }
    sums.iter().map(|s| (s / mean - 1.0).abs()).fold(0.0, f64::max)
}

/// Zero-pads a waveform so that every original sample lies in the fully
/// overlapped interior of the frame grid, and the padded length is an
/// exact frame span. Returns the padded waveform and the leading pad.
///
/// Synthesis from a modified spectrogram is only well conditioned in the
/// interior, so separation runs analysis on the padded signal and trims
/// the resynthesis back with [`Waveform::slice`].
pub fn pad_for_analysis(w: &Waveform, cfg: &StftConfig) -> (Waveform, usize) {
    let lead = cfg.frame_len - cfg.hop;
    let mut total = (lead + w.len() + lead).max(cfg.frame_len);
    let rem = (total - cfg.frame_len) % cfg.hop;
    if rem != 0 {
        total += cfg.hop - rem;
    }
    let mut samples = vec![0.0; total];
    samples[lead..lead + w.len()].copy_from_slice(w.samples());
    (Waveform { samples, sample_rate: w.sample_rate() }, lead)
}

/// Complex one-sided STFT of a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Array2<Complex64>,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(bins: Array2<Complex64>, config: StftConfig, sample_rate: u32) -> Result<Self, SignalError> {
        config.validate()?;
        if bins.ncols() != config.num_bins() {
            return Err(SignalError::BinMismatch { got: bins.ncols(), expected: config.num_bins() });
        }
        if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SignalError::InvalidConfig("spectrogram contains non-finite bins".into()));
        }
        Ok(Self { bins, config, sample_rate })
    }

    /// Builds a spectrogram sharing grid metadata with `self`.
    pub fn with_bins(&self, bins: Array2<Complex64>) -> Self {
        assert_eq!(bins.dim(), self.bins.dim(), "shape must match the source spectrogram");
        Self { bins, config: self.config, sample_rate: self.sample_rate }
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.bins
    }

    pub fn into_bins(self) -> Array2<Complex64> {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.config.fft_size as f64
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm())
    }

    pub fn power(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm_sqr())
    }

    pub fn scaled(&self, gain: f64) -> Self {
        self.with_bins(self.bins.mapv(|c| c * gain))
    }
}

fn plan(size: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    }
}

/// Short-time Fourier transform without padding:
/// `T = 1 + (len - frame_len) / hop` frames of `fft_size / 2 + 1` bins.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram, SignalError> {
    cfg.validate()?;
    if w.len() < cfg.frame_len {
        return Err(SignalError::TooShort { len: w.len(), needed: cfg.frame_len });
    }
    let frames = cfg.num_frames(w.len());
    let nbins = cfg.num_bins();
    let window = cfg.window_coefficients();
    let fft = plan(cfg.fft_size, false);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut bins = Array2::zeros((frames, nbins));
    let x = w.samples();
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.fill(Complex64::default());
        for (n, (b, wv)) in buf.iter_mut().zip(&window).enumerate() {
            b.re = x[start + n] * wv;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, src) in bins.row_mut(t).iter_mut().zip(&buf[..nbins]) {
            *dst = *src;
        }
    }
    Ok(Spectrogram { bins, config: *cfg, sample_rate: w.sample_rate() })
}

/// Overlap-add resynthesis. Each inverse-transformed frame is added back at
/// its hop position and the sum is divided by the accumulated analysis
/// window, floored at 1e-12 where the overlap is incomplete.
pub fn istft(spec: &Spectrogram) -> Result<Waveform, SignalError> {
    let cfg = spec.config();
    cfg.validate()?;
    let window = cfg.window_coefficients();
    let deviation = cola_deviation(&window, cfg.hop, 1);
    if deviation >= COLA_TOLERANCE {
        return Err(SignalError::NotCola { deviation });
    }
    let frames = spec.num_frames();
    let nbins = spec.num_bins();
    let len = cfg.span(frames);
    let mut out = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    let ifft = plan(cfg.fft_size, true);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let scale = 1.0 / cfg.fft_size as f64;
    for t in 0..frames {
        let row = spec.bins().row(t);
        for k in 0..cfg.fft_size {
            buf[k] = if k < nbins { row[k] } else { row[cfg.fft_size - k].conj() };
        }
        // Imaginary parts of DC and Nyquist carry no information in a
        // real signal's spectrum.
        buf[0].im = 0.0;
        if cfg.fft_size.is_multiple_of(2) {
            buf[cfg.fft_size / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.hop;
        for n in 0..cfg.frame_len {
            out[start + n] += buf[n].re * scale;
            wsum[start + n] += window[n];
        }
    }
    for (o, s) in out.iter_mut().zip(&wsum) {
        *o /= s.max(WINDOW_SUM_FLOOR);
    }
    Waveform::new(out, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn default_grid_has_161_bins() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.num_bins(), 161);
        assert_eq!(cfg.num_frames(16_000), 99);
        assert!(cfg.is_cola());
    }

    #[test]
    fn short_signal_is_rejected() {
        let w = Waveform::zeros(100, 16_000);
        let err = stft(&w, &StftConfig::default()).unwrap_err();
        assert!(err.to_string().contains("signal too short"));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let w = Waveform::zeros(1600, 16_000);
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert_eq!(s.shape(), (9, 161));
        assert!(s.bins().iter().all(|c| c.norm() == 0.0));
        let back = istft(&s).unwrap();
        assert!(back.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        for k in [3usize, 20, 77, 150] {
            let f = k as f64 * 16_000.0 / 320.0;
            let x: Vec<f64> = (0..4000).map(|n| (2.0 * PI * f * n as f64 / 16_000.0).sin()).collect();
            let s = stft(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
            for row in s.magnitude().rows() {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(argmax, k);
            }
        }
    }

    #[test]
    fn parseval_against_windowed_energy() {
        let cfg = StftConfig::default();
        let w = noise(5000, 1);
        let s = stft(&w, &cfg).unwrap();
        let win = cfg.window_coefficients();
        let mut time_energy = 0.0;
        for t in 0..s.num_frames() {
            for n in 0..cfg.frame_len {
                let v = w.samples()[t * cfg.hop + n] * win[n];
                time_energy += v * v;
            }
        }
        // One-sided spectrum: interior bins stand for two conjugate bins.
        let last = cfg.fft_size / 2;
        let mut spec_energy = 0.0;
        for row in s.bins().rows() {
            for (k, c) in row.iter().enumerate() {
                let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
                spec_energy += weight * c.norm_sqr();
            }
        }
        spec_energy /= cfg.fft_size as f64;
        assert!(((spec_energy - time_energy) / time_energy).abs() < 1e-9);
    }

    #[test]
    fn round_trip_interior() {
        let cfg = StftConfig::default();
        let w = noise(8000, 2);
        let back = istft(&stft(&w, &cfg).unwrap()).unwrap();
        assert_eq!(back.len(), cfg.span(cfg.num_frames(8000)));
        let (a, b) = (cfg.frame_len, back.len() - cfg.frame_len);
        let err: f64 = (a..b).map(|n| (back.samples()[n] - w.samples()[n]).powi(2)).sum();
        let norm: f64 = (a..b).map(|n| w.samples()[n].powi(2)).sum();
        assert!((err / norm).sqrt() < 1e-10);
    }

    #[test]
    fn istft_is_linear() {
        let w = noise(3200, 3);
        let s = stft(&w, &StftConfig::default()).unwrap();
        let once = istft(&s).unwrap();
        let twice = istft(&s.scaled(2.0)).unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_cola_hop_is_rejected() {
        let cfg = StftConfig { frame_len: 320, hop: 100, fft_size: 320, window: WindowKind::Hann };
        assert!(!cfg.is_cola());
        let s = stft(&noise(2000, 4), &cfg).unwrap();
        assert!(matches!(istft(&s), Err(SignalError::NotCola { .. })));
    }

    #[test]
    fn hann_half_hop_window_sum_is_flat() {
        let w = hann_periodic(320);
        assert!(cola_deviation(&w, 160, 1) < 1e-12);
        // The squared Hann window is not flat at half overlap.
        assert!(cola_deviation(&w, 160, 2) > 0.1);
    }

    #[test]
    fn padding_keeps_signal_interior() {
        let cfg = StftConfig::default();
        let w = noise(1234, 5);
        let (p, lead) = pad_for_analysis(&w, &cfg);
        assert_eq!(lead, 160);
        assert_eq!((p.len() - cfg.frame_len) % cfg.hop, 0);
        assert!(p.len() >= lead + w.len() + lead);
        let back = istft(&stft(&p, &cfg).unwrap()).unwrap().slice(lead, w.len());
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
