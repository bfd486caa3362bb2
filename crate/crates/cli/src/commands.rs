//! The eight pipeline subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use maskbench_core::dataset::{
    build_manifest, read_spec_matrix, realize, render_dataset, render_features, target_file, AudioCache, Manifest,
    MixtureSpec, RenderConfig, RenderSummary, Split, FEATURES_FILE,
};
use maskbench_core::features::{cache, FeatureMatrix, NormStats};
use maskbench_core::masks::{
    analyse, export, mask_from_output, oracle_mask, oracle_separation, resynthesize, spectral_coherence, AppliedMask,
    TargetKind,
};
use maskbench_core::metrics::{aggregate, evaluate_system, report_csv, results_jsonl, EvalOutcome, EvalResult, Processed, MIXTURE_LABEL};
use maskbench_core::nn::{self, load_model, save_model, ModelConfig, Mlp, TrainingSet};
use maskbench_core::signal::{wav, Spectrogram};
use ndarray::Array2;
use rayon::prelude::*;

use crate::workdir::sha256_hex;
use crate::{io_error, CliError, Command, Layout, PipelineConfig};

const MODEL_FILE: &str = "model.bin";
const HISTORY_FILE: &str = "history.csv";
const TRAIN_DONE: &str = "train.done";
/// Dynamic range of exported spectrogram images.
const FIG_RANGE_DB: f64 = 80.0;

pub(crate) struct Context {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    pub audio: AudioCache,
}

impl Context {
    pub fn new(cfg: PipelineConfig, layout: Layout) -> Self {
        Self { cfg, layout, audio: AudioCache::new() }
    }

    fn manifest(&self) -> Result<Manifest, CliError> {
        let dir = self.layout.manifest_dir();
        if !dir.exists() {
            return Err(CliError::Data(format!("missing manifest {}: run `mix` first", dir.display())));
        }
        Ok(Manifest::read(&dir)?)
    }

    fn norm(&self, path: &Path) -> Result<NormStats, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("missing normalisation statistics {}: {e}; run `features` first", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    fn test_specs<'a>(&self, m: &'a Manifest) -> Result<Vec<&'a MixtureSpec>, CliError> {
        let specs: Vec<&MixtureSpec> = m.split(Split::Test).collect();
        if specs.is_empty() {
            return Err(CliError::Data(format!("manifest in {} has no test mixtures", self.layout.manifest_dir().display())));
        }
        Ok(specs)
    }
}

pub(crate) fn dispatch(ctx: &Context, cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Mix => mix(ctx),
        Command::Features => features(ctx),
        Command::Train => train(ctx),
        Command::Separate => separate(ctx),
        Command::Eval => eval(ctx),
        Command::Oracle => oracle(ctx),
        Command::Coherence => coherence(ctx),
        Command::ExportFigs { count } => export_figs(ctx, count),
    }
}

fn require_dir(what: &str, dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} directory {} does not exist", dir.display())))
    }
}

fn check_summary(step: &str, s: &RenderSummary) -> Result<(), CliError> {
    eprintln!("{step}: {} rendered, {} already complete, {} failed", s.rendered, s.skipped, s.failed.len());
    match s.failed.first() {
        None => Ok(()),
        Some((id, reason)) => Err(CliError::Data(format!("{step} failed for {} spec(s); first: {id}: {reason}", s.failed.len()))),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, bytes).map_err(io_error(path))
}

fn mix(ctx: &Context) -> Result<(), CliError> {
    let paths = &ctx.cfg.paths;
    require_dir("speech", &paths.speech_dir)?;
    require_dir("noise", &paths.noise_dir)?;
    let m = build_manifest(&paths.speech_dir, &paths.noise_dir, &ctx.cfg.manifest_config(), &ctx.audio)?;
    eprintln!("mix: {} training and {} test mixtures", m.meta.n_train, m.meta.n_test);
    let manifest_dir = ctx.layout.manifest_dir();
    fs::create_dir_all(&manifest_dir).map_err(io_error(&manifest_dir))?;
    m.write(&manifest_dir)?;
    let render = RenderConfig {
        targets: ctx.cfg.targets.clone(),
        stft: ctx.cfg.features.grid,
        mask_params: ctx.cfg.masks,
        write_wavs: true,
    };
    check_summary("render", &render_dataset(&m, &ctx.layout.render_dir(), &render, &ctx.audio))
}

fn features(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let root = ctx.layout.render_dir();
    check_summary("features", &render_features(&m, &root, &ctx.cfg.features, &ctx.audio))?;
    let blocks = m
        .split(Split::Train)
        .map(|spec| read_spec_matrix(&root, spec, FEATURES_FILE))
        .collect::<Result<Vec<_>, _>>()?;
    if blocks.is_empty() {
        return Err(CliError::Data("manifest has no training mixtures to fit normalisation on".into()));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let all = ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| CliError::Data(format!("feature caches disagree in width: {e}")))?;
    let stats = NormStats::fit(&FeatureMatrix::new(all));
    let path = ctx.layout.norm_file();
    write(&path, serde_json::to_string(&stats).expect("stats serialise") + "\n")?;
    eprintln!("features: normalisation over {} training frames, {} dims", views.iter().map(|v| v.nrows()).sum::<usize>(), stats.dims());
    Ok(())
}

/// Normalised training inputs and targets of `kind`, frame-aligned.
fn training_set(ctx: &Context, m: &Manifest, norm: &NormStats, kind: TargetKind) -> Result<TrainingSet<f32>, CliError> {
    let root = ctx.layout.render_dir();
    let specs: Vec<&MixtureSpec> = m.split(Split::Train).collect();
    let blocks = specs
        .par_iter()
        .map(|spec| {
            let feats = read_spec_matrix(&root, spec, FEATURES_FILE)
                .map_err(|e| CliError::Data(format!("{e}; run `features` first")))?;
            let target = read_spec_matrix(&root, spec, &target_file(kind))
                .map_err(|e| CliError::Data(format!("{e}; is {kind} among the configured targets?")))?;
            if feats.nrows() != target.nrows() {
                return Err(CliError::Data(format!(
                    "{}: {} feature frames but {} target frames",
                    spec.id,
                    feats.nrows(),
                    target.nrows()
                )));
            }
            let x = norm.apply(&FeatureMatrix::new(feats))?.values;
            Ok((x.mapv(|v| v as f32), target.mapv(|v| v as f32)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if blocks.is_empty() {
        return Err(CliError::Data("manifest has no training mixtures".into()));
    }
    let xs: Vec<_> = blocks.iter().map(|(x, _)| x.view()).collect();
    let ts: Vec<_> = blocks.iter().map(|(_, t)| t.view()).collect();
    let widths = |e: ndarray::ShapeError| CliError::Data(format!("cached matrices disagree in width: {e}"));
    Ok(TrainingSet {
        inputs: ndarray::concatenate(ndarray::Axis(0), &xs).map_err(widths)?,
        targets: ndarray::concatenate(ndarray::Axis(0), &ts).map_err(widths)?,
    })
}

fn train(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let norm_path = ctx.layout.norm_file();
    let norm = ctx.norm(&norm_path)?;
    let inputs_digest = sha256_hex((m.to_jsonl() + &fs::read_to_string(&norm_path).map_err(io_error(&norm_path))?).as_bytes());
    let tcfg = ctx.cfg.train_config();
    for &kind in &ctx.cfg.targets {
        let dir = ctx.layout.model_dir(kind);
        let key = format!(
            "{kind}|{tcfg:?}|{:?}|{:?}|{:?}|{inputs_digest}",
            ctx.cfg.model, ctx.cfg.features, ctx.cfg.masks
        );
        if fs::read_to_string(dir.join(TRAIN_DONE)).is_ok_and(|k| k == key) && dir.join(MODEL_FILE).exists() {
            eprintln!("train {kind}: up to date");
            continue;
        }
        let data = training_set(ctx, &m, &norm, kind)?;
        let bins = ctx.cfg.features.grid.num_bins();
        let model_cfg = ModelConfig::for_target(
            kind,
            data.inputs.ncols(),
            bins,
            &ctx.cfg.model.hidden,
            ctx.cfg.model.dropout_rate,
            ctx.cfg.seed,
        );
        let model: Mlp<f32> = Mlp::init(model_cfg)?;
        eprintln!("train {kind}: {} frames, {} parameters", data.inputs.nrows(), model.num_parameters());
        let mut progress = |r: &nn::EpochRecord| {
            eprintln!("train {kind}: epoch {:>3} train {:.5e} val {:.5e}", r.epoch, r.train_mse, r.val_mse);
        };
        let (model, history) = nn::train(model, &data, &tcfg, &mut progress)?;
        eprintln!("train {kind}: kept epoch {}", history.best_epoch);
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        save_model(&dir.join(MODEL_FILE), &model)?;
        write(&dir.join(HISTORY_FILE), history.to_csv())?;
        fs::copy(&norm_path, dir.join("norm.json")).map_err(io_error(&norm_path))?;
        write(&dir.join(TRAIN_DONE), key)?;
    }
    Ok(())
}

fn load_trained(ctx: &Context, kind: TargetKind) -> Result<(Mlp<f32>, NormStats), CliError> {
    let dir = ctx.layout.model_dir(kind);
    let path = dir.join(MODEL_FILE);
    if !path.exists() {
        return Err(CliError::Data(format!("missing model {}: run `train` first", path.display())));
    }
    Ok((load_model(&path)?, ctx.norm(&dir.join("norm.json"))?))
}

fn output_file(ctx: &Context, kind: TargetKind, spec: &MixtureSpec) -> PathBuf {
    ctx.layout.separated_dir(kind).join(format!("{}.out.bin", spec.id))
}

fn separate(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let specs = ctx.test_specs(&m)?;
    for &kind in &ctx.cfg.targets {
        let (model, norm) = load_trained(ctx, kind)?;
        let dir = ctx.layout.separated_dir(kind);
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        let failures: Vec<String> = specs
            .par_iter()
            .filter_map(|spec| {
                let run = || -> Result<(), CliError> {
                    let r = realize(spec, &ctx.audio)?;
                    let sep = nn::separate(
                        &model,
                        &norm,
                        &ctx.cfg.features,
                        &r.mixture,
                        kind,
                        &ctx.cfg.masks,
                        ctx.cfg.separation.soft_ibm,
                    )?;
                    wav::write(dir.join(format!("{}.wav", spec.id)), &sep.waveform)?;
                    cache::write_matrix(&output_file(ctx, kind, spec), &sep.output)?;
                    Ok(())
                };
                run().err().map(|e| format!("{}: {e}", spec.id))
            })
            .collect();
        eprintln!("separate {kind}: {} of {} mixtures", specs.len() - failures.len(), specs.len());
        if let Some(first) = failures.first() {
            return Err(CliError::Data(format!("separation failed for {} mixture(s); first: {first}", failures.len())));
        }
    }
    Ok(())
}

fn mixture_outcome(ctx: &Context, specs: &[&MixtureSpec]) -> EvalOutcome {
    let grid = ctx.cfg.features.grid;
    evaluate_system(specs, &ctx.audio, &grid, MIXTURE_LABEL, |_, r| {
        let y = analyse(&r.mixture, &grid).map_err(|e| e.to_string())?;
        Ok(Processed { waveform: r.mixture.clone(), estimate: y.spec })
    })
}

fn report(ctx: &Context, name: &str, outcomes: Vec<(String, EvalOutcome)>) -> Result<(), CliError> {
    let mut results: Vec<EvalResult> = Vec::new();
    for (system, outcome) in outcomes {
        for (id, reason) in &outcome.skipped {
            eprintln!("{name}: skipped {id} for {system}: {reason}");
        }
        if outcome.results.is_empty() {
            return Err(CliError::Data(format!("{name}: no mixture could be scored for {system}")));
        }
        results.extend(outcome.results);
    }
    let dir = ctx.layout.reports_dir();
    let rows = aggregate(&results);
    write(&dir.join(format!("{name}.csv")), report_csv(&rows))?;
    write(&dir.join(format!("{name}.jsonl")), results_jsonl(&results))?;
    for r in rows.iter().filter(|r| r.metric == "stoi" || r.metric == "si_sdr") {
        eprintln!("{name}: {:<8} {:>7} {:>+5} dB {:<6} {:.4}", r.target, r.noise, r.snr_db, r.metric, r.mean);
    }
    Ok(())
}

fn eval(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let specs = ctx.test_specs(&m)?;
    for &kind in &ctx.cfg.targets {
        if let Some(spec) = specs.iter().find(|s| !output_file(ctx, kind, s).exists()) {
            return Err(CliError::Data(format!(
                "missing separated outputs: {} (run `separate` first)",
                output_file(ctx, kind, spec).display()
            )));
        }
    }
    let grid = ctx.cfg.features.grid;
    let mut outcomes = vec![(MIXTURE_LABEL.to_string(), mixture_outcome(ctx, &specs))];
    for &kind in &ctx.cfg.targets {
        let outcome = evaluate_system(&specs, &ctx.audio, &grid, kind.name(), |spec, r| {
            let path = output_file(ctx, kind, spec);
            let output = cache::read_matrix(&path).map_err(|e| e.to_string())?;
            let y = analyse(&r.mixture, &grid).map_err(|e| e.to_string())?;
            let mask =
                mask_from_output(kind, &output, &ctx.cfg.masks, ctx.cfg.separation.soft_ibm).map_err(|e| e.to_string())?;
            let estimate = mask.apply(&y.spec).map_err(|e| format!("{}: {e}", path.display()))?;
            let waveform = resynthesize(&estimate, y.lead, y.len).map_err(|e| e.to_string())?;
            Ok(Processed { waveform, estimate })
        });
        outcomes.push((kind.name().to_string(), outcome));
    }
    report(ctx, "eval", outcomes)
}

fn oracle(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let specs = ctx.test_specs(&m)?;
    let grid = ctx.cfg.features.grid;
    let mut outcomes = vec![(MIXTURE_LABEL.to_string(), mixture_outcome(ctx, &specs))];
    for kind in TargetKind::ALL {
        let outcome = evaluate_system(&specs, &ctx.audio, &grid, kind.name(), |_, r| {
            let sep = oracle_separation(&r.speech, &r.noise, &r.mixture, kind, &grid, &ctx.cfg.masks)
                .map_err(|e| e.to_string())?;
            Ok(Processed { waveform: sep.waveform, estimate: sep.estimate })
        });
        outcomes.push((kind.name().to_string(), outcome));
    }
    report(ctx, "oracle", outcomes)
}

fn coherence(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let mut specs: Vec<&MixtureSpec> = m.split(Split::Test).collect();
    if specs.is_empty() {
        specs = m.specs.iter().collect();
    }
    let grid = ctx.cfg.features.grid;
    let per_spec = specs
        .par_iter()
        .map(|spec| {
            let r = realize(spec, &ctx.audio)?;
            let c = spectral_coherence(&r.speech, &r.noise, &grid).map_err(|e| CliError::Data(format!("{}: {e}", spec.id)))?;
            Ok((spec.noise_name(), c))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut by_noise: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (noise, c) in per_spec {
        let entry = by_noise.entry(noise).or_insert_with(|| (vec![0.0; c.len()], 0));
        entry.0.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        entry.1 += 1;
    }
    let rate = m.meta.sample_rate as f64;
    let mut out = String::from("noise,bin,freq_hz,coherence,n\n");
    for (noise, (sum, n)) in &by_noise {
        for (k, v) in sum.iter().enumerate() {
            let hz = k as f64 * rate / grid.fft_size as f64;
            let _ = writeln!(out, "{noise},{k},{hz},{:.6e},{n}", v / *n as f64);
        }
        let mean = sum.iter().sum::<f64>() / (sum.len() * n) as f64;
        eprintln!("coherence: {noise}: mean {mean:.4} over {n} mixtures");
    }
    write(&ctx.layout.reports_dir().join("coherence.csv"), out)
}

fn log_power(spec: &Spectrogram) -> Array2<f64> {
    spec.power().mapv(|p| 10.0 * (p + 1e-12).log10())
}

fn export_matrix(dir: &Path, stem: &str, m: &Array2<f64>, range: Option<(f64, f64)>) -> Result<(), CliError> {
    let pgm = dir.join(format!("{stem}.pgm"));
    export::write_pgm(&pgm, m, range).map_err(io_error(&pgm))?;
    let csv = dir.join(format!("{stem}.csv"));
    export::write_csv(&csv, m).map_err(io_error(&csv))
}

fn export_mask(dir: &Path, stem: &str, mask: &AppliedMask) -> Result<(), CliError> {
    match mask {
        AppliedMask::Real(m) => export_matrix(dir, stem, &m.values, Some((0.0, 1.0))),
        AppliedMask::Complex(m) => {
            export_matrix(dir, &format!("{stem}_re"), &m.values.mapv(|c| c.re), Some((-1.0, 1.0)))?;
            export_matrix(dir, &format!("{stem}_im"), &m.values.mapv(|c| c.im), Some((-1.0, 1.0)))
        }
    }
}

fn export_figs(ctx: &Context, count: usize) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let specs = ctx.test_specs(&m)?;
    let dir = ctx.layout.figs_dir();
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let grid = ctx.cfg.features.grid;
    for spec in specs.iter().take(count) {
        let r = realize(spec, &ctx.audio)?;
        let s = analyse(&r.speech, &grid)?;
        let n = analyse(&r.noise, &grid)?;
        let y = analyse(&r.mixture, &grid)?;
        let clean_db = log_power(&s.spec);
        let top = clean_db.iter().chain(log_power(&y.spec).iter()).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = Some((top - FIG_RANGE_DB, top));
        export_matrix(&dir, &format!("{}_clean", spec.id), &clean_db, range)?;
        export_matrix(&dir, &format!("{}_mixture", spec.id), &log_power(&y.spec), range)?;
        for &kind in &ctx.cfg.targets {
            let mask = oracle_mask(kind, &s.spec, &n.spec, &y.spec, &ctx.cfg.masks)?;
            export_mask(&dir, &format!("{}_oracle_{kind}", spec.id), &mask)?;
            let out = output_file(ctx, kind, spec);
            if out.exists() {
                let output = cache::read_matrix(&out)?;
                let est = mask_from_output(kind, &output, &ctx.cfg.masks, ctx.cfg.separation.soft_ibm)?;
                export_mask(&dir, &format!("{}_estimated_{kind}", spec.id), &est)?;
                let separated = est.apply(&y.spec)?;
                export_matrix(&dir, &format!("{}_separated_{kind}", spec.id), &log_power(&separated), range)?;
            }
        }
        eprintln!("export-figs: {}", spec.id);
    }
    Ok(())
}
