//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use latfuse_core::eval::{build_setup, SyntheticSetup, SyntheticSetupConfig};
use latfuse_core::lattice::{ConfusionNetwork, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly positive network with `vocab` tokens, blank at id 0.
pub fn random_network(frames: usize, vocab: usize, seed: u64) -> ConfusionNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = (0..vocab)
        .map(|i| if i == 0 { "<b>".to_string() } else { format!("▁t{i}") })
        .collect();
    let vocab_arc = Arc::new(Vocabulary::new(tokens, 0).expect("valid vocabulary"));
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    ConfusionNetwork::from_probs(vocab_arc, 0.04, rows).expect("normalized rows")
}

/// The default synthetic setup, shrunk to `utterances`.
pub fn synthetic(utterances: usize) -> SyntheticSetup {
    let mut cfg = SyntheticSetupConfig::default();
    cfg.corpus.utterance_count = utterances;
    build_setup(&cfg).expect("default setup builds")
}
