//! Per-mixture scoring of a separation system and aggregation into
//! (noise, SNR, target) conditions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{snr_metrics, spectral_mse, stoi, MetricsError};
use crate::dataset::{realize, AudioCache, MixtureSpec, Realized};
use crate::masks::analyse;
use crate::signal::{Spectrogram, StftConfig, Waveform};

/// Target label used for the unprocessed mixture.
pub const MIXTURE_LABEL: &str = "mixture";
const METRICS: [&str; 4] = ["stoi", "snr_out", "si_sdr", "spectral_mse"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub mixture_id: String,
    pub noise_name: String,
    pub snr_db: f64,
    pub target_kind: String,
    pub stoi: f64,
    pub snr_out: f64,
    pub si_sdr: f64,
    pub spectral_mse: f64,
}

impl EvalResult {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "stoi" => self.stoi,
            "snr_out" => self.snr_out,
            "si_sdr" => self.si_sdr,
            "spectral_mse" => self.spectral_mse,
            _ => unreachable!("unknown metric {name}"),
        }
    }
}

/// A system's output for one mixture: the separated waveform and its
/// estimate of the clean spectrogram on the padded analysis grid.
#[derive(Debug, Clone)]
pub struct Processed {
    pub waveform: Waveform,
    pub estimate: Spectrogram,
}

/// All metrics of one processed signal. `clean_spec` and `estimate` must
/// share the padded analysis grid.
pub fn score(
    clean: &Waveform,
    processed: &Waveform,
    clean_spec: &Spectrogram,
    estimate: &Spectrogram,
) -> Result<(f64, f64, f64, f64), MetricsError> {
    let processed = processed.fit_to(clean.len());
    let snr = snr_metrics(clean, &processed)?;
    Ok((stoi(clean, &processed)?, snr.snr_out, snr.si_sdr, spectral_mse(clean_spec, estimate)?))
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutcome {
    pub results: Vec<EvalResult>,
    /// `(mixture id, reason)` for mixtures that could not be scored.
    pub skipped: Vec<(String, String)>,
}

/// Score `system` on every spec. `process` maps a realised mixture to the
/// system output; failures are recorded in `skipped` rather than aborting.
/// Results keep the order of `specs`.
pub fn evaluate_system<F>(
    specs: &[&MixtureSpec],
    audio: &AudioCache,
    grid: &StftConfig,
    system: &str,
    process: F,
) -> EvalOutcome
where
    F: Fn(&MixtureSpec, &Realized) -> Result<Processed, String> + Sync,
{
    let outcomes: Vec<Result<EvalResult, (String, String)>> = specs
        .par_iter()
        .map(|spec| {
            let fail = |e: String| (spec.id.clone(), e);
            let r = realize(spec, audio).map_err(|e| fail(e.to_string()))?;
            let out = process(spec, &r).map_err(fail)?;
            let clean = analyse(&r.speech, grid).map_err(|e| fail(e.to_string()))?;
            let (stoi, snr_out, si_sdr, mse) =
                score(&r.speech, &out.waveform, &clean.spec, &out.estimate).map_err(|e| fail(e.to_string()))?;
            Ok(EvalResult {
                mixture_id: spec.id.clone(),
                noise_name: spec.noise_name(),
                snr_db: spec.snr_db,
                target_kind: system.to_string(),
                stoi,
                snr_out,
                si_sdr,
                spectral_mse: mse,
            })
        })
        .collect();
    let mut outcome = EvalOutcome::default();
    for o in outcomes {
        match o {
            Ok(r) => outcome.results.push(r),
            Err(s) => outcome.skipped.push(s),
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub noise: String,
    pub snr_db: f64,
    pub target: String,
    pub metric: &'static str,
    pub mean: f64,
    /// Sample standard deviation (0 for a single mixture).
    pub std: f64,
    pub n: usize,
}

/// Mean, standard deviation and count per (noise, SNR, target, metric).
/// Conditions appear in first-seen order of `results`.
pub fn aggregate(results: &[EvalResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    for r in results {
        let key = (r.noise_name.clone(), r.snr_db, r.target_kind.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::new();
    for (noise, snr, target) in keys {
        let group: Vec<&EvalResult> =
            results.iter().filter(|r| r.noise_name == noise && r.snr_db == snr && r.target_kind == target).collect();
        for metric in METRICS {
            let vals: Vec<f64> = group.iter().map(|r| r.metric(metric)).collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 { (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
            rows.push(AggregateRow { noise: noise.clone(), snr_db: snr, target: target.clone(), metric, mean, std, n });
        }
    }
    rows
}

pub fn report_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("noise,snr_db,target,metric,mean,std,n\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.noise, r.snr_db, r.target, r.metric, r.mean, r.std, r.n);
    }
    out
}

/// One JSON object per mixture.
pub fn results_jsonl(results: &[EvalResult]) -> String {
    results.iter().map(|r| serde_json::to_string(r).expect("results serialise") + "\n").collect()
}
