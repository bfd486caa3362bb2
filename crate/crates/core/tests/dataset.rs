use std::collections::HashSet;
use std::fs;
use std::path::Path;

use maskbench_core::dataset::synth::{write_corpus, CorpusConfig};
use maskbench_core::dataset::{
    build_manifest, read_spec_matrix, realize, render_dataset, snr_db, AudioCache, DatasetError, ManifestConfig,
    RenderConfig, Split,
};
use maskbench_core::masks::{analyse, training_target, MaskParams, TargetKind};
use maskbench_core::signal::{stft, wav, StftConfig, Waveform};

fn tiny_corpus(dir: &Path, train: usize, test: usize) {
    let cfg = CorpusConfig { train_utts: train, test_utts: test, min_secs: 0.5, max_secs: 0.8, noise_secs: 4.0, seed: 11 };
    write_corpus(dir, &cfg).unwrap();
}

fn manifest_cfg(seed: u64) -> ManifestConfig {
    ManifestConfig { snrs: vec![-3.0, 0.0, 3.0], slices_per_utt: 2, test_slices_per_utt: 1, test_fraction: 0.0, seed }
}

#[test]
fn spec_count_follows_the_product_formula() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 5, 2);
    let m = build_manifest(&dir.path().join("speech"), &dir.path().join("noise"), &manifest_cfg(1), &AudioCache::new())
        .unwrap();
    assert_eq!(m.meta.n_train, 5 * 2 * 2 * 3);
    assert_eq!(m.split(Split::Train).count(), 60);
    assert_eq!(m.split(Split::Test).count(), 2 * 1 * 2 * 3);
    let ids: HashSet<_> = m.specs.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids.len(), m.specs.len());
    // Noise-major, then SNR, then slice, then utterance.
    let first: Vec<_> = m.split(Split::Train).take(10).collect();
    assert!(first.iter().all(|s| s.snr_db == -3.0 && s.noise_path == first[0].noise_path));
    assert_eq!(first[0].speech_path, first[5].speech_path);
}

#[test]
fn same_seed_gives_byte_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 3, 1);
    let (speech, noise) = (dir.path().join("speech"), dir.path().join("noise"));
    let a = build_manifest(&speech, &noise, &manifest_cfg(5), &AudioCache::new()).unwrap();
    let b = build_manifest(&speech, &noise, &manifest_cfg(5), &AudioCache::new()).unwrap();
    let c = build_manifest(&speech, &noise, &manifest_cfg(6), &AudioCache::new()).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_ne!(a.to_jsonl(), c.to_jsonl());

    let out = tempfile::tempdir().unwrap();
    a.write(out.path()).unwrap();
    let back = maskbench_core::dataset::Manifest::read(out.path()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_jsonl(), fs::read_to_string(out.path().join("manifest.jsonl")).unwrap());
}

#[test]
fn train_and_test_never_share_noise_samples() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 4, 2);
    let audio = AudioCache::new();
    let m = build_manifest(&dir.path().join("speech"), &dir.path().join("noise"), &manifest_cfg(2), &audio).unwrap();
    for spec in &m.specs {
        let len = audio.get(spec.speech_path.as_ref()).unwrap().len();
        let noise_len = audio.get(spec.noise_path.as_ref()).unwrap().len();
        let mid = noise_len / 2;
        match spec.split {
            Split::Train => assert!(spec.noise_offset + len <= mid),
            Split::Test => assert!(spec.noise_offset >= mid && spec.noise_offset + len <= noise_len),
        }
    }
}

#[test]
fn stored_gain_reproduces_the_snr() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 3, 1);
    let audio = AudioCache::new();
    let m = build_manifest(&dir.path().join("speech"), &dir.path().join("noise"), &manifest_cfg(3), &audio).unwrap();
    let out = tempfile::tempdir().unwrap();
    m.write(out.path()).unwrap();
    let m = maskbench_core::dataset::Manifest::read(out.path()).unwrap();
    for spec in &m.specs {
        assert!(spec.noise_gain > 0.0);
        let r = realize(spec, &audio).unwrap();
        assert!((snr_db(&r.speech, &r.noise) - spec.snr_db).abs() < 1e-9, "{}", spec.id);
    }
}

#[test]
fn short_noise_is_reported_with_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let speech = dir.path().join("speech");
    let noise = dir.path().join("noise");
    fs::create_dir_all(&speech).unwrap();
    fs::create_dir_all(&noise).unwrap();
    let utt = maskbench_core::dataset::synth::speech_utterance(1, 1.0);
    wav::write(speech.join("long.wav"), &utt).unwrap();
    wav::write(speech.join("short.wav"), &utt.slice(0, 4000)).unwrap();
    let n = maskbench_core::dataset::synth::white_noise(2, utt.len() + 100, 0.1);
    wav::write(noise.join("hum.wav"), &n).unwrap();
    let err = build_manifest(&speech, &noise, &manifest_cfg(0), &AudioCache::new()).unwrap_err();
    assert!(matches!(err, DatasetError::NoiseTooShort { .. }));
    let msg = err.to_string();
    assert!(msg.contains("hum.wav") && msg.contains("long.wav"), "{msg}");
}

#[test]
fn held_out_split_is_seeded_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat");
    fs::create_dir_all(&flat).unwrap();
    for i in 0..6 {
        wav::write(flat.join(format!("u{i}.wav")), &maskbench_core::dataset::synth::speech_utterance(i, 0.4)).unwrap();
    }
    tiny_corpus(dir.path(), 1, 0);
    let cfg = ManifestConfig { test_fraction: 1.0 / 6.0, ..manifest_cfg(9) };
    let m = build_manifest(&flat, &dir.path().join("noise"), &cfg, &AudioCache::new()).unwrap();
    assert_eq!((m.meta.n_train_utts, m.meta.n_test_utts), (5, 1));
    let train: HashSet<_> = m.split(Split::Train).map(|s| s.speech_path.clone()).collect();
    assert!(m.split(Split::Test).all(|s| !train.contains(&s.speech_path)));
}

#[test]
fn rendering_is_consistent_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 2, 1);
    let audio = AudioCache::new();
    let m = build_manifest(&dir.path().join("speech"), &dir.path().join("noise"), &manifest_cfg(4), &audio).unwrap();
    let cfg = RenderConfig {
        targets: TargetKind::ALL.to_vec(),
        stft: StftConfig::default(),
        mask_params: MaskParams::default(),
        write_wavs: true,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = render_dataset(&m, a.path(), &cfg, &audio);
    assert_eq!((sa.rendered, sa.failed.len()), (m.specs.len(), 0));
    render_dataset(&m, b.path(), &cfg, &audio);
    for spec in &m.specs {
        for kind in TargetKind::ALL {
            let file = format!("target_{}.bin", kind.name());
            let ta = read_spec_matrix(a.path(), spec, &file).unwrap();
            assert_eq!(ta, read_spec_matrix(b.path(), spec, &file).unwrap());
            if kind == TargetKind::Irm {
                assert!(ta.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        let r = realize(spec, &audio).unwrap();
        let g = stft(&r.speech, &cfg.stft).unwrap();
        let n = stft(&r.noise, &cfg.stft).unwrap();
        let y = stft(&r.mixture, &cfg.stft).unwrap();
        for ((s, n), y) in g.bins().iter().zip(n.bins()).zip(y.bins()) {
            assert!((s + n - y).norm() < 1e-10);
        }
        // Targets are stored on the padded grid used at separation time.
        let padded = analyse(&r.mixture, &cfg.stft).unwrap().spec;
        let irm = read_spec_matrix(a.path(), spec, "target_irm.bin").unwrap();
        assert_eq!(irm.dim(), (padded.num_frames(), padded.num_bins()));
        let mix: Waveform = wav::read(a.path().join("train").join(&spec.id).join("mixture.wav"))
            .or_else(|_| wav::read(a.path().join("test").join(&spec.id).join("mixture.wav")))
            .unwrap();
        assert_eq!(mix.len(), r.mixture.len());
    }
    let again = render_dataset(&m, a.path(), &cfg, &audio);
    assert_eq!((again.rendered, again.skipped), (0, m.specs.len()));
}

#[test]
fn joint_scaling_leaves_targets_unchanged() {
    let audio = AudioCache::new();
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path(), 1, 0);
    let m = build_manifest(&dir.path().join("speech"), &dir.path().join("noise"), &manifest_cfg(8), &audio).unwrap();
    let r = realize(&m.specs[0], &audio).unwrap();
    let cfg = StftConfig::default();
    let p = MaskParams::default();
    // Power-of-two factors scale every float exactly, so the targets must
    // agree to 1e-12. Other factors add one rounding per sample, which
    // near-cancelling units (|Y| much smaller than |S|) amplify; those get a
    // relative bound instead.
    for (k, tol) in [(0.25, 0.0), (4.0, 0.0), (0.01, 1e-9), (3.7, 1e-9)] {
        for kind in TargetKind::ALL {
            let base = training_target(
                kind,
                &stft(&r.speech, &cfg).unwrap(),
                &stft(&r.noise, &cfg).unwrap(),
                &stft(&r.mixture, &cfg).unwrap(),
                &p,
            )
            .unwrap();
            let scaled = training_target(
                kind,
                &stft(&r.speech.scaled(k), &cfg).unwrap(),
                &stft(&r.noise.scaled(k), &cfg).unwrap(),
                &stft(&r.mixture.scaled(k), &cfg).unwrap(),
                &p,
            )
            .unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                assert!((a - b).abs() < 1e-12 + tol * a.abs().max(1.0), "{kind} k={k}: {a} vs {b}");
            }
        }
    }
}
