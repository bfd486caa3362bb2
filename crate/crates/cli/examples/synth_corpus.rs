//! Write a synthetic speech + noise corpus: `synth_corpus DIR [TRAIN_UTTS TEST_UTTS SEED]`.

use maskbench_core::dataset::synth::{write_corpus, CorpusConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let Some(dir) = args.get(1) else {
        eprintln!("usage: synth_corpus DIR [TRAIN_UTTS TEST_UTTS SEED]");
        std::process::exit(1);
    };
    let num = |i: usize, d: u64| args.get(i).map_or(d, |s| s.parse().expect("numeric argument"));
    let cfg = CorpusConfig {
        train_utts: num(2, 20) as usize,
        test_utts: num(3, 5) as usize,
        seed: num(4, 0),
        ..CorpusConfig::default()
    };
    if let Err(e) = write_corpus(std::path::Path::new(dir), &cfg) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
