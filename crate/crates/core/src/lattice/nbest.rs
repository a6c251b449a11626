//! Exact k-best extraction from a product of independent frame distributions.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::ctc::collapse_unchecked;
use super::network::ConfusionNetwork;
use super::vocab::TokenId;
use super::Hypothesis;
use crate::error::{Error, Result};
use crate::logmath::log_sum_exp;

/// A full frame-label path and its log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPath {
    pub labels: Vec<TokenId>,
    pub log_prob: f64,
}

/// Descending score, then ascending lexicographic labels.
pub fn rank_order(a_score: f64, a_labels: &[TokenId], b_score: f64, b_labels: &[TokenId]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then_with(|| a_labels.cmp(b_labels))
}

/// `V^T`, saturating.
pub fn path_count(net: &ConfusionNetwork) -> usize {
    if net.is_empty() {
        return 0;
    }
    let mut n: usize = 1;
    for _ in 0..net.num_frames() {
        n = n.saturating_mul(net.vocab_size());
    }
    n
}

/// Number of paths to expand when `n_hyps` distinct hypotheses are wanted:
/// `max(4 * n_hyps, 256)`, capped at the number of paths in the network.
pub fn default_path_budget(net: &ConfusionNetwork, n_hyps: usize) -> usize {
    n_hyps
        .saturating_mul(4)
        .max(256)
        .min(path_count(net))
        .max(1)
}

struct Candidate {
    score: f64,
    labels: Vec<TokenId>,
    ranks: Vec<u32>,
    pivot: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // BinaryHeap is a max-heap: the best-ranked candidate must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self.score, &self.labels, other.score, &other.labels).reverse()
    }
}

/// Exact top-`k` frame paths, best first.
///
/// Best-first search over per-frame rank vectors. Each frame's tokens are
/// sorted by (log-prob descending, id ascending); a candidate's children
/// advance the rank at one position at or after its pivot, so every rank
/// vector is generated exactly once and children never outrank parents.
pub fn nbest_paths(net: &ConfusionNetwork, k: usize) -> Result<Vec<ScoredPath>> {
    if k == 0 {
        return Err(Error::Config("nbest_paths needs k >= 1".into()));
    }
    let frames = net.num_frames();
    if frames == 0 {
        return Ok(Vec::new());
    }
    let width = net.vocab_size();
    let order: Vec<Vec<TokenId>> = net
        .frames()
        .map(|row| {
            let mut ids: Vec<TokenId> = (0..width as TokenId).collect();
            ids.sort_by(|&a, &b| {
                row[b as usize]
                    .total_cmp(&row[a as usize])
                    .then_with(|| a.cmp(&b))
            });
            ids
        })
        .collect();

    let score_of = |labels: &[TokenId]| -> f64 {
        let mut total = 0.0;
        for (t, &l) in labels.iter().enumerate() {
            total += net.log_prob(t, l);
        }
        total
    };

    let root_labels: Vec<TokenId> = order.iter().map(|o| o[0]).collect();
    let mut heap = BinaryHeap::new();
    heap.push(Candidate {
        score: score_of(&root_labels),
        labels: root_labels,
        ranks: vec![0; frames],
        pivot: 0,
    });

    let want = k.min(path_count(net));
    let mut out = Vec::with_capacity(want.min(1 << 16));
    while let Some(best) = heap.pop() {
        for pos in best.pivot..frames {
            let next_rank = best.ranks[pos] as usize + 1;
            if next_rank >= width {
                continue;
            }
            let mut ranks = best.ranks.clone();
            ranks[pos] = next_rank as u32;
            let mut labels = best.labels.clone();
            labels[pos] = order[pos][next_rank];
            heap.push(Candidate {
                score: score_of(&labels),
                labels,
                ranks,
                pivot: pos,
            });
        }
        out.push(ScoredPath {
            labels: best.labels,
            log_prob: best.score,
        });
        if out.len() >= want {
            break;
        }
    }
    Ok(out)
}

/// Top distinct collapsed hypotheses from the best `n_paths` frame paths.
///
/// Paths collapsing to the same token sequence are merged by log-sum-exp, so
/// each score is a lower bound on the full CTC forward score of its tokens.
pub fn nbest_hypotheses(
    net: &ConfusionNetwork,
    n_paths: usize,
    n_hyps: usize,
) -> Result<Vec<Hypothesis>> {
    if n_hyps == 0 || n_paths < n_hyps {
        return Err(Error::Config(format!(
            "nbest_hypotheses needs n_paths >= n_hyps >= 1, got n_paths={n_paths}, n_hyps={n_hyps}"
        )));
    }
    let paths = nbest_paths(net, n_paths)?;
    Ok(merge_paths(&paths, net.vocab().blank_id(), n_hyps))
}

pub(crate) fn merge_paths(paths: &[ScoredPath], blank: TokenId, n_hyps: usize) -> Vec<Hypothesis> {
    let mut groups: HashMap<Vec<TokenId>, Vec<f64>> = HashMap::new();
    for path in paths {
        groups
            .entry(collapse_unchecked(&path.labels, blank))
            .or_default()
            .push(path.log_prob);
    }
    let mut hyps: Vec<Hypothesis> = groups
        .into_iter()
        .map(|(tokens, scores)| Hypothesis {
            tokens,
            asr_log_score: log_sum_exp(scores).min(0.0),
        })
        .collect();
    hyps.sort_by(|a, b| rank_order(a.asr_log_score, &a.tokens, b.asr_log_score, &b.tokens));
    hyps.truncate(n_hyps);
    hyps
}
