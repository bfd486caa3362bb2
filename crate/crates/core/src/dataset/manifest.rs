//! Manifest construction and JSON-lines serialisation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::mixing::mixing_gain;
use super::{io_err, AudioCache, DatasetError};
use crate::PIPELINE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One mixture: an utterance plus a gain-scaled noise slice at a target SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub id: String,
    pub speech_path: String,
    pub noise_path: String,
    /// First noise sample (at the pipeline rate) of the slice.
    pub noise_offset: usize,
    pub snr_db: f64,
    #[serde(serialize_with = "exact_decimal")]
    pub noise_gain: f64,
    pub split: Split,
    /// Seed of the generator that drew this spec's offset.
    pub seed_used: u64,
}

impl MixtureSpec {
    /// File stem of the noise, used to group results.
    pub fn noise_name(&self) -> String {
        Path::new(&self.noise_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    }
}

/// 17 significant digits: enough to round-trip any f64.
fn exact_decimal<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestConfig {
    pub snrs: Vec<f64>,
    pub slices_per_utt: usize,
    pub test_slices_per_utt: usize,
    /// Fraction of utterances held out for testing when the speech
    /// directory has no `train/` and `test/` subdirectories.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self { snrs: vec![-3.0, 0.0, 3.0], slices_per_utt: 10, test_slices_per_utt: 1, test_fraction: 1.0 / 6.0, seed: 0 }
    }
}

impl ManifestConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidConfig(m.into()));
        if self.snrs.is_empty() {
            return bad("snrs nonempty");
        }
        if self.snrs.iter().any(|s| !s.is_finite()) {
            return bad("snrs must be finite");
        }
        if self.slices_per_utt == 0 {
            return bad("slices_per_utt must be at least 1");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub sample_rate: u32,
    pub seed: u64,
    pub snrs: Vec<f64>,
    pub slices_per_utt: usize,
    pub test_slices_per_utt: usize,
    pub n_train_utts: usize,
    pub n_test_utts: usize,
    pub n_noises: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub meta: ManifestMeta,
    pub specs: Vec<MixtureSpec>,
}

/// Mixed into the seed for the utterance hold-out draw so it is independent
/// of the offset stream.
const HOLDOUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const META_FILE: &str = "manifest_meta.json";

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &MixtureSpec> {
        self.specs.iter().filter(move |s| s.split == split)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for spec in &self.specs {
            let line = serde_json::to_string(spec).expect("specs always serialise");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str, meta: ManifestMeta, path: &str) -> Result<Self, DatasetError> {
        let mut specs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let spec = serde_json::from_str(line).map_err(|e| DatasetError::Manifest {
                path: path.into(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            specs.push(spec);
        }
        Ok(Self { meta, specs })
    }

    /// Write `manifest.jsonl` and `manifest_meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, self.to_jsonl()).map_err(io_err(&p))?;
        let p = dir.join(META_FILE);
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta always serialises") + "\n";
        fs::write(&p, meta).map_err(io_err(&p))
    }

    pub fn read(dir: &Path) -> Result<Self, DatasetError> {
        let p = dir.join(META_FILE);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let meta = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
            path: p.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let p = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        Self::from_jsonl(&text, meta, &p.display().to_string())
    }
}

/// Sorted `.wav` files directly inside `dir`.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(DatasetError::NoFiles(dir.display().to_string()));
    }
    Ok(out)
}

/// Train and test utterance lists: `train/` and `test/` subdirectories
/// when present, otherwise a seeded hold-out of `test_fraction`.
fn split_speech(dir: &Path, cfg: &ManifestConfig) -> Result<(Vec<PathBuf>, Vec<PathBuf>), DatasetError> {
    let (train_dir, test_dir) = (dir.join("train"), dir.join("test"));
    if train_dir.is_dir() {
        let test = match list_wavs(&test_dir) {
            Ok(files) => files,
            Err(DatasetError::NoFiles(_)) => Vec::new(),
            Err(_) if !test_dir.exists() => Vec::new(),
            Err(e) => return Err(e),
        };
        return Ok((list_wavs(&train_dir)?, test));
    }
    let all = list_wavs(dir)?;
    let mut n_test = (all.len() as f64 * cfg.test_fraction).round() as usize;
    if cfg.test_fraction > 0.0 && all.len() >= 2 {
        n_test = n_test.max(1);
    }
    n_test = n_test.min(all.len() - 1);
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ HOLDOUT_STREAM));
    let mut test: Vec<PathBuf> = order[..n_test].iter().map(|&i| all[i].clone()).collect();
    let mut train: Vec<PathBuf> = order[n_test..].iter().map(|&i| all[i].clone()).collect();
    test.sort();
    train.sort();
    Ok((train, test))
}

/// Build the manifest: for each split, every (noise, SNR, slice,
/// utterance) combination in that nesting order, with a uniformly drawn
/// noise offset inside the split's half of the noise and the gain that
/// realises the SNR.
pub fn build_manifest(
    speech_dir: &Path,
    noise_dir: &Path,
    cfg: &ManifestConfig,
    cache: &AudioCache,
) -> Result<Manifest, DatasetError> {
    cfg.validate()?;
    let (train_utts, test_utts) = split_speech(speech_dir, cfg)?;
    let noises = list_wavs(noise_dir)?;

    let mut longest = (0, String::new());
    for p in train_utts.iter().chain(&test_utts) {
        let len = cache.get(p)?.len();
        if len == 0 {
            return Err(DatasetError::Silent(p.display().to_string()));
        }
        if len > longest.0 {
            longest = (len, p.display().to_string());
        }
    }
    for p in &noises {
        let len = cache.get(p)?.len();
        if len < 2 * longest.0 {
            return Err(DatasetError::NoiseTooShort {
                noise: p.display().to_string(),
                speech: longest.1,
                noise_len: len,
                needed: 2 * longest.0,
            });
        }
    }

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut specs = Vec::new();
    let plan = [(Split::Train, &train_utts, cfg.slices_per_utt), (Split::Test, &test_utts, cfg.test_slices_per_utt)];
    for (split, utts, slices) in plan {
        let mut index = 0usize;
        for noise_path in &noises {
            let noise = cache.get(noise_path)?;
            let mid = noise.len() / 2;
            for &snr in &cfg.snrs {
                for _ in 0..slices {
                    for speech_path in utts.iter() {
                        let speech = cache.get(speech_path)?;
                        let len = speech.len();
                        let (lo, hi) = match split {
                            Split::Train => (0, mid - len),
                            Split::Test => (mid, noise.len() - len),
                        };
                        let seed_used = master.next_u64();
                        let noise_offset = ChaCha8Rng::seed_from_u64(seed_used).random_range(lo..=hi);
                        let slice = noise.slice(noise_offset, len);
                        let id = format!("{}_{index:06}", split.name());
                        let noise_gain = mixing_gain(&speech, &slice, snr).map_err(|e| DatasetError::Spec {
                            id: id.clone(),
                            reason: format!("{e} ({} with {} at offset {noise_offset})", speech_path.display(), noise_path.display()),
                        })?;
                        specs.push(MixtureSpec {
                            id,
                            speech_path: speech_path.display().to_string(),
                            noise_path: noise_path.display().to_string(),
                            noise_offset,
                            snr_db: snr,
                            noise_gain,
                            split,
                            seed_used,
                        });
                        index += 1;
                    }
                }
            }
        }
    }

    let n_train = specs.iter().filter(|s| s.split == Split::Train).count();
    let meta = ManifestMeta {
        sample_rate: PIPELINE_RATE,
        seed: cfg.seed,
        snrs: cfg.snrs.clone(),
        slices_per_utt: cfg.slices_per_utt,
        test_slices_per_utt: cfg.test_slices_per_utt,
        n_train_utts: train_utts.len(),
        n_test_utts: test_utts.len(),
        n_noises: noises.len(),
        n_train,
        n_test: specs.len() - n_train,
    };
    Ok(Manifest { meta, specs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(gain: f64) -> MixtureSpec {
        MixtureSpec {
            id: "train_000000".into(),
            speech_path: "s/a.wav".into(),
            noise_path: "n/babble.wav".into(),
            noise_offset: 17,
            snr_db: -3.0,
            noise_gain: gain,
            split: Split::Train,
            seed_used: u64::MAX,
        }
    }

    #[test]
    fn gain_is_written_with_seventeen_digits_and_round_trips() {
        for g in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789] {
            let line = serde_json::to_string(&spec(g)).unwrap();
            let digits = line.split("\"noise_gain\":").nth(1).unwrap().split(',').next().unwrap();
            assert_eq!(digits.split('e').next().unwrap().replace('.', "").len(), 17, "{digits}");
            let back: MixtureSpec = serde_json::from_str(&line).unwrap();
            assert_eq!(back.noise_gain.to_bits(), g.to_bits());
            assert_eq!(back, spec(g));
        }
    }

    #[test]
    fn malformed_lines_are_located() {
        let meta = ManifestMeta {
            sample_rate: 16_000,
            seed: 0,
            snrs: vec![0.0],
            slices_per_utt: 1,
            test_slices_per_utt: 1,
            n_train_utts: 1,
            n_test_utts: 0,
            n_noises: 1,
            n_train: 1,
            n_test: 0,
        };
        let good = serde_json::to_string(&spec(1.0)).unwrap();
        let text = format!("{good}\n{{\"id\": 3}}\n");
        let err = Manifest::from_jsonl(&text, meta, "m.jsonl").unwrap_err();
        assert!(matches!(err, DatasetError::Manifest { line: 2, .. }));
    }

    #[test]
    fn empty_snr_list_is_rejected() {
        let cfg = ManifestConfig { snrs: vec![], ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().to_string(), "invalid dataset configuration: snrs nonempty");
    }

    #[test]
    fn noise_name_is_the_file_stem() {
        assert_eq!(spec(1.0).noise_name(), "babble");
    }
}
