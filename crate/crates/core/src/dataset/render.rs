//! Materialise a manifest into `{root}/{split}/{id}/`: WAVs, target
//! matrices and (separately) feature matrices. Each directory gets a
//! completion marker keyed by what was rendered, so interrupted runs resume
//! and finished specs are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{io_err, realize, AudioCache, DatasetError, Manifest, MixtureSpec};
use crate::features::{cache, extract_features, FeatureConfig};
use crate::masks::{analyse, training_target, MaskParams, TargetKind};
use crate::signal::{pad_for_analysis, wav, StftConfig};

pub const FEATURES_FILE: &str = "features.bin";
const TARGETS_DONE: &str = "targets.done";
const FEATURES_DONE: &str = "features.done";

#[derive(Debug, Clone)]
pub struct RenderConfig {
    pub targets: Vec<TargetKind>,
    pub stft: StftConfig,
    pub mask_params: MaskParams,
    pub write_wavs: bool,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct RenderSummary {
    pub rendered: usize,
    pub skipped: usize,
    /// `(spec id, error)` for every spec that failed.
    pub failed: Vec<(String, String)>,
}

#[derive(Serialize)]
struct SpecMeta<'a> {
    id: &'a str,
    frames: usize,
    bins: usize,
    peak_scale: f64,
}

pub fn spec_dir(root: &Path, spec: &MixtureSpec) -> PathBuf {
    root.join(spec.split.name()).join(&spec.id)
}

pub fn target_file(kind: TargetKind) -> String {
    format!("target_{}.bin", kind.name())
}

/// Read one cached matrix of a rendered spec.
pub fn read_spec_matrix(root: &Path, spec: &MixtureSpec, file: &str) -> Result<ndarray::Array2<f64>, DatasetError> {
    Ok(cache::read_matrix(&spec_dir(root, spec).join(file))?)
}

fn is_done(dir: &Path, marker: &str, key: &str) -> bool {
    fs::read_to_string(dir.join(marker)).is_ok_and(|k| k == key)
}

fn run_all<F>(m: &Manifest, root: &Path, marker: &str, key: &str, work: F) -> RenderSummary
where
    F: Fn(&MixtureSpec, &Path) -> Result<(), DatasetError> + Sync,
{
    let outcomes: Vec<(String, Result<bool, String>)> = m
        .specs
        .par_iter()
        .map(|spec| {
            let dir = spec_dir(root, spec);
            if is_done(&dir, marker, key) {
                return (spec.id.clone(), Ok(false));
            }
            let result = fs::create_dir_all(&dir)
                .map_err(io_err(&dir))
                .and_then(|_| work(spec, &dir))
                .and_then(|_| fs::write(dir.join(marker), key).map_err(io_err(&dir)));
            (spec.id.clone(), result.map(|_| true).map_err(|e| e.to_string()))
        })
        .collect();
    let mut summary = RenderSummary::default();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(true) => summary.rendered += 1,
            Ok(false) => summary.skipped += 1,
            Err(e) => summary.failed.push((id, e)),
        }
    }
    summary
}

/// Render WAVs, target masks and per-spec metadata.
pub fn render_dataset(m: &Manifest, root: &Path, cfg: &RenderConfig, audio: &AudioCache) -> RenderSummary {
    let key = format!("{:?}|{:?}|{:?}|{}", cfg.targets, cfg.stft, cfg.mask_params, cfg.write_wavs);
    run_all(m, root, TARGETS_DONE, &key, |spec, dir| {
        let r = realize(spec, audio)?;
        if cfg.write_wavs {
            for (name, w) in [("mixture.wav", &r.mixture), ("clean.wav", &r.speech), ("noise.wav", &r.noise)] {
                wav::write(dir.join(name), w).map_err(|e| DatasetError::Spec { id: spec.id.clone(), reason: e.to_string() })?;
            }
        }
        let s = analyse(&r.speech, &cfg.stft)?.spec;
        let n = analyse(&r.noise, &cfg.stft)?.spec;
        let y = analyse(&r.mixture, &cfg.stft)?.spec;
        for &kind in &cfg.targets {
            let t = training_target(kind, &s, &n, &y, &cfg.mask_params)?;
            cache::write_matrix(&dir.join(target_file(kind)), &t)?;
        }
        let meta = SpecMeta { id: &spec.id, frames: y.num_frames(), bins: y.num_bins(), peak_scale: r.peak_scale };
        let p = dir.join("meta.json");
        fs::write(&p, serde_json::to_string_pretty(&meta).expect("meta serialises") + "\n").map_err(io_err(&p))
    })
}

/// Compute and cache the (unnormalised, spliced) mixture features. Both
/// features and targets live on the padded analysis grid used at
/// separation time.
pub fn render_features(m: &Manifest, root: &Path, cfg: &FeatureConfig, audio: &AudioCache) -> RenderSummary {
    let key = format!("{cfg:?}");
    run_all(m, root, FEATURES_DONE, &key, |spec, dir| {
        let r = realize(spec, audio)?;
        let (padded, _) = pad_for_analysis(&r.mixture, &cfg.grid);
        let f = extract_features(&padded, cfg)?;
        cache::write_matrix(&dir.join(FEATURES_FILE), &f.values)?;
        Ok(())
    })
}
