//! Synthetic speech-like corpus for tests and demos: voiced syllables
//! (glottal harmonic source through formant resonators) with fricative
//! onsets and pauses, plus white and speech-shaped noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{io_err, DatasetError};
use crate::signal::{istft, pad_for_analysis, stft, wav, StftConfig, Waveform};
use crate::PIPELINE_RATE;

const SR: f64 = PIPELINE_RATE as f64;

/// (F1, F2, F3) in Hz for a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BW: [f64; 3] = [80.0, 110.0, 150.0];

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-pole resonator with unit gain at DC.
fn resonate(x: &mut [f64], freq: f64, bw: f64) {
    let r = (-PI * bw / SR).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / SR).cos();
    let a2 = -r * r;
    let g = 1.0 - a1 - a2;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Raised-cosine attack and release.
fn envelope(x: &mut [f64], attack: usize, release: usize) {
    let n = x.len();
    for i in 0..attack.min(n) {
        x[i] *= 0.5 - 0.5 * (PI * i as f64 / attack as f64).cos();
    }
    for i in 0..release.min(n) {
        x[n - 1 - i] *= 0.5 - 0.5 * (PI * i as f64 / release as f64).cos();
    }
}

fn voiced(rng: &mut ChaCha8Rng, len: usize, f0: f64, formants: [f64; 3]) -> Vec<f64> {
    let glide = rng.random_range(-0.15..0.15);
    let vibrato_rate = rng.random_range(3.0..6.0);
    let mut phase: f64 = 0.0;
    let mut out = vec![0.0; len];
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / len as f64;
        let f = f0 * (1.0 + glide * (t - 0.5)) * (1.0 + 0.02 * (2.0 * PI * vibrato_rate * i as f64 / SR).sin());
        phase += 2.0 * PI * f / SR;
        let harmonics = (4000.0 / f) as usize;
        *v = (1..=harmonics).map(|h| (h as f64 * phase).sin() / h as f64).sum();
    }
    for (f, bw) in formants.iter().zip(FORMANT_BW) {
        resonate(&mut out, *f, bw);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    out.iter_mut().for_each(|v| *v /= peak);
    envelope(&mut out, len / 5, len / 4);
    out
}

fn fricative(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let white: Vec<f64> = (0..len + 2).map(|_| gauss(rng)).collect();
    // Second difference: a crude high-pass emphasising 3-8 kHz.
    let mut out: Vec<f64> = white.windows(3).map(|w| 0.25 * (w[2] - 2.0 * w[1] + w[0])).collect();
    envelope(&mut out, len / 3, len / 3);
    out
}

/// One speech-like utterance of roughly `secs` seconds at 16 kHz.
pub fn speech_utterance(seed: u64, secs: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (secs * SR) as usize;
    let f0 = rng.random_range(95.0..230.0);
    let mut out = Vec::with_capacity(target + 8000);
    out.extend(std::iter::repeat_n(0.0, (rng.random_range(0.05..0.15) * SR) as usize));
    while out.len() < target {
        if rng.random_bool(0.35) {
            let len = (rng.random_range(0.04..0.1) * SR) as usize;
            let amp = rng.random_range(0.05..0.2);
            out.extend(fricative(&mut rng, len).into_iter().map(|v| amp * v));
        }
        let len = (rng.random_range(0.1..0.26) * SR) as usize;
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let amp = rng.random_range(0.2..0.5);
        let pitch = f0 * rng.random_range(0.9..1.1);
        out.extend(voiced(&mut rng, len, pitch, vowel).into_iter().map(|v| amp * v));
        let gap = if rng.random_bool(0.25) { rng.random_range(0.1..0.3) } else { rng.random_range(0.0..0.04) };
        out.extend(std::iter::repeat_n(0.0, (gap * SR) as usize));
    }
    Waveform::new(out, PIPELINE_RATE).expect("synthesis is finite")
}

pub fn white_noise(seed: u64, len: usize, std: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| std * gauss(&mut rng)).collect(), PIPELINE_RATE).expect("finite")
}

/// Gaussian noise shaped to the long-term average spectrum of `speech`,
/// with the given RMS.
pub fn speech_shaped_noise(seed: u64, len: usize, speech: &[Waveform], rms: f64) -> Waveform {
    let cfg = StftConfig::default();
    let bins = cfg.num_bins();
    let mut ltas = vec![0.0; bins];
    let mut frames = 0usize;
    for w in speech {
        let Ok(spec) = stft(w, &cfg) else { continue };
        for row in spec.power().rows() {
            ltas.iter_mut().zip(row).for_each(|(a, p)| *a += p);
            frames += 1;
        }
    }
    let shape: Vec<f64> = ltas.iter().map(|p| (p / frames.max(1) as f64).sqrt()).collect();
    let white = white_noise(seed, len.max(cfg.frame_len), 1.0);
    let (padded, lead) = pad_for_analysis(&white, &cfg);
    let mut spec = stft(&padded, &cfg).expect("padded noise spans a frame");
    for mut row in spec.bins_mut().rows_mut() {
        row.iter_mut().zip(&shape).for_each(|(c, g)| *c *= *g);
    }
    let shaped = istft(&spec).expect("default grid is COLA");
    let out = shaped.slice(lead, len);
    let k = rms / out.rms().max(1e-300);
    out.scaled(k)
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub train_utts: usize,
    pub test_utts: usize,
    pub min_secs: f64,
    pub max_secs: f64,
    pub noise_secs: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { train_utts: 20, test_utts: 5, min_secs: 1.5, max_secs: 2.5, noise_secs: 30.0, seed: 0 }
    }
}

/// Write `speech/{train,test}/*.wav` and `noise/{white,ssn}.wav` under
/// `dir`.
pub fn write_corpus(dir: &Path, cfg: &CorpusConfig) -> Result<(), DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    for (split, count) in [("train", cfg.train_utts), ("test", cfg.test_utts)] {
        let d = dir.join("speech").join(split);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
        for i in 0..count {
            let secs = rng.random_range(cfg.min_secs..=cfg.max_secs);
            let w = speech_utterance(rng.random(), secs);
            let p = d.join(format!("utt{i:04}.wav"));
            wav::write(&p, &w).map_err(|e| DatasetError::Audio { path: p.display().to_string(), source: e.into() })?;
            if split == "train" {
                train.push(w);
            }
        }
    }
    let d = dir.join("noise");
    fs::create_dir_all(&d).map_err(io_err(&d))?;
    let len = (cfg.noise_secs * SR) as usize;
    let noises = [("white", white_noise(rng.random(), len, 0.1)), ("ssn", speech_shaped_noise(rng.random(), len, &train, 0.1))];
    for (name, w) in noises {
        let p = d.join(format!("{name}.wav"));
        wav::write(&p, &w).map_err(|e| DatasetError::Audio { path: p.display().to_string(), source: e.into() })?;
    }
    Ok(())
}
