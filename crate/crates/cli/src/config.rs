//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use maskbench_core::dataset::ManifestConfig;
use maskbench_core::features::FeatureConfig;
use maskbench_core::masks::{MaskParams, TargetKind};
use maskbench_core::nn::{TrainConfig, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const WORKDIR_ENV: &str = "MASKBENCH_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub speech_dir: PathBuf,
    pub noise_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingSection {
    pub snrs: Vec<f64>,
    pub slices_per_utt: usize,
    pub test_slices_per_utt: usize,
    pub test_fraction: f64,
}

impl Default for MixingSection {
    fn default() -> Self {
        let d = ManifestConfig::default();
        Self { snrs: d.snrs, slices_per_utt: d.slices_per_utt, test_slices_per_utt: d.test_slices_per_utt, test_fraction: d.test_fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: DEFAULT_HIDDEN.to_vec(), dropout_rate: DEFAULT_DROPOUT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self { batch_size: d.batch_size, epochs: d.epochs, learning_rate: d.learning_rate, validation_fraction: d.validation_fraction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationSection {
    /// Use raw IBM network outputs instead of thresholding at 0.5.
    pub soft_ibm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_targets")]
    pub targets: Vec<TargetKind>,
    pub paths: Paths,
    #[serde(default)]
    pub mixing: MixingSection,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub masks: MaskParams,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub separation: SeparationSection,
}

fn all_targets() -> Vec<TargetKind> {
    TargetKind::ALL.to_vec()
}

/// 1-based line of the first `key = ...` assignment, if any.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl PipelineConfig {
    /// Parse and validate; relative paths are resolved against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(1);
            CliError::Config(format!("{origin}:{line}: {}", e.message()))
        })?;
        let at = |key: &str, msg: String| CliError::Config(format!("{origin}:{}: {msg}", line_of(text, key).unwrap_or(1)));
        if cfg.mixing.snrs.is_empty() {
            return Err(at("snrs", "snrs nonempty".into()));
        }
        if cfg.targets.is_empty() {
            return Err(at("targets", "targets nonempty".into()));
        }
        let mcfg = cfg.manifest_config();
        mcfg.validate().map_err(|e| at("snrs", e.to_string()))?;
        cfg.features.validate().map_err(|e| at("features", e.to_string()))?;
        cfg.masks.validate().map_err(|e| at("masks", e.to_string()))?;
        cfg.train_config().validate().map_err(|e| at("training", e.to_string()))?;
        if !(0.0..1.0).contains(&cfg.model.dropout_rate) {
            return Err(at("dropout_rate", format!("dropout_rate {} outside [0, 1)", cfg.model.dropout_rate)));
        }
        if cfg.model.hidden.contains(&0) {
            return Err(at("hidden", "hidden layer widths must be positive".into()));
        }
        let mut seen = Vec::new();
        cfg.targets.retain(|k| {
            let fresh = !seen.contains(k);
            seen.push(*k);
            fresh
        });
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.paths.speech_dir = resolve(&cfg.paths.speech_dir);
        cfg.paths.noise_dir = resolve(&cfg.paths.noise_dir);
        cfg.paths.workdir = cfg.paths.workdir.as_deref().map(resolve);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent).unwrap_or_else(|_| parent.to_path_buf());
        Self::parse(&text, &path.display().to_string(), &base)
    }

    /// Workdir from the config, else from the environment.
    pub fn workdir(&self) -> Result<PathBuf, CliError> {
        if let Some(w) = &self.paths.workdir {
            return Ok(w.clone());
        }
        match std::env::var_os(WORKDIR_ENV) {
            Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
            _ => Err(CliError::Config(format!("no workdir: set paths.workdir or {WORKDIR_ENV}"))),
        }
    }

    pub fn manifest_config(&self) -> ManifestConfig {
        ManifestConfig {
            snrs: self.mixing.snrs.clone(),
            slices_per_utt: self.mixing.slices_per_utt,
            test_slices_per_utt: self.mixing.test_slices_per_utt,
            test_fraction: self.mixing.test_fraction,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            epochs: self.training.epochs,
            learning_rate: self.training.learning_rate,
            validation_fraction: self.training.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}
