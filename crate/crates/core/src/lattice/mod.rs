//! Confusion-network lattices and CTC scoring.

mod ctc;
pub mod format;
mod nbest;
mod network;
mod vocab;

use serde::{Deserialize, Serialize};

pub use ctc::{collapse_ctc_path, ctc_forward_score, path_log_prob};
pub use nbest::{default_path_budget, nbest_hypotheses, nbest_paths, path_count, rank_order, ScoredPath};
pub use network::{ConfusionNetwork, FramePosterior, NORMALIZATION_TOLERANCE};
pub use vocab::{TokenId, Vocabulary};

/// A collapsed token sequence with its acoustic log score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub asr_log_score: f64,
}
