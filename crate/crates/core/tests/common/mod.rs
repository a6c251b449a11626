//! Brute-force oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use latfuse_core::lattice::{rank_order, ConfusionNetwork, TokenId, Vocabulary};
use latfuse_core::lm::{train_ngram, NGramModel};
use latfuse_core::tokenization::Tokenizer;
use rand::Rng;

pub const PIECES: [&str; 5] = ["▁a", "▁b", "c", "▁d", "e"];

/// Blank plus the first `v - 1` pieces of `PIECES`.
pub fn tiny_vocab(v: usize) -> Arc<Vocabulary> {
    let mut tokens = vec!["<b>".to_string()];
    tokens.extend(PIECES[..v - 1].iter().map(|s| s.to_string()));
    Arc::new(Vocabulary::new(tokens, 0).unwrap())
}

/// Strictly positive random frames.
pub fn random_net<R: Rng>(rng: &mut R, frames: usize, v: usize) -> ConfusionNetwork {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = (0..v).map(|_| rng.gen_range(0.02..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect::<Vec<f64>>()
        })
        .collect();
    ConfusionNetwork::from_probs(tiny_vocab(v), 0.1, rows).unwrap()
}

/// Every frame path with its score summed in frame order.
pub fn all_paths(net: &ConfusionNetwork) -> Vec<(Vec<TokenId>, f64)> {
    let v = net.vocab_size();
    let t = net.num_frames();
    let total = v.pow(t as u32);
    (0..total)
        .map(|mut code| {
            let mut labels = vec![0; t];
            for slot in labels.iter_mut().rev() {
                *slot = (code % v) as TokenId;
                code /= v;
            }
            let mut score = 0.0;
            for (f, &l) in labels.iter().enumerate() {
                score += net.log_prob(f, l);
            }
            (labels, score)
        })
        .collect()
}

pub fn sorted_paths(net: &ConfusionNetwork) -> Vec<(Vec<TokenId>, f64)> {
    let mut paths = all_paths(net);
    paths.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
    paths
}

/// Merge repeats, then drop blanks.
pub fn collapse(labels: &[TokenId], blank: TokenId) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Total probability of each collapsed sequence, in plain probability space.
pub fn collapsed_mass(net: &ConfusionNetwork) -> BTreeMap<Vec<TokenId>, f64> {
    let blank = net.vocab().blank_id();
    let mut groups = BTreeMap::new();
    for (labels, score) in all_paths(net) {
        *groups.entry(collapse(&labels, blank)).or_insert(0.0) += score.exp();
    }
    groups
}

/// An n-gram model whose tokenizer has exactly the text pieces of `vocab`.
pub fn matched_lm(vocab: &Vocabulary, corpus: &[&str]) -> (Tokenizer, NGramModel) {
    let asr = Tokenizer::from_vocabulary(vocab, "<unk>", "▁").unwrap();
    let pieces = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i as TokenId != vocab.blank_id())
        .map(|(_, p)| p.clone())
        .collect();
    let lm_tok = Tokenizer::new(pieces, "<unk>", "▁").unwrap();
    let model = train_ngram(corpus, 2, 0.5, lm_tok).unwrap();
    (asr, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Alignment {
    pub cost: usize,
    pub gaps: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Minimum over every alignment, enumerated without memoisation.
pub fn brute_force_alignment<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Alignment {
    fn go<S: AsRef<str>>(r: &[S], h: &[S], acc: Alignment, best: &mut Alignment) {
        if r.is_empty() && h.is_empty() {
            if (acc.cost, acc.gaps) < (best.cost, best.gaps) {
                *best = acc;
            }
            return;
        }
        if !r.is_empty() && !h.is_empty() {
            let sub = usize::from(r[0].as_ref() != h[0].as_ref());
            go(
                &r[1..],
                &h[1..],
                Alignment {
                    cost: acc.cost + sub,
                    substitutions: acc.substitutions + sub,
                    ..acc
                },
                best,
            );
        }
        if !r.is_empty() {
            go(
                &r[1..],
                h,
                Alignment {
                    cost: acc.cost + 1,
                    gaps: acc.gaps + 1,
                    deletions: acc.deletions + 1,
                    ..acc
                },
                best,
            );
        }
        if !h.is_empty() {
            go(
                r,
                &h[1..],
                Alignment {
                    cost: acc.cost + 1,
                    gaps: acc.gaps + 1,
                    insertions: acc.insertions + 1,
                    ..acc
                },
                best,
            );
        }
    }
    let mut best = Alignment {
        cost: usize::MAX,
        gaps: usize::MAX,
        substitutions: 0,
        insertions: 0,
        deletions: 0,
    };
    let zero = Alignment {
        cost: 0,
        gaps: 0,
        substitutions: 0,
        insertions: 0,
        deletions: 0,
    };
    go(reference, hypothesis, zero, &mut best);
    best
}
