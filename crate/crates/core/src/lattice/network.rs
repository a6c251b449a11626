use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::logmath::{clamp_log, ln_floor};

/// Tolerance on per-frame normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// One time slot of a confusion network: a log-probability per vocabulary token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePosterior {
    pub log_probs: Vec<f64>,
}

/// Sequence of independent per-frame token distributions.
///
/// Immutable after construction. Rows are stored contiguously, one row of
/// `vocab.len()` log-probabilities per frame.
#[derive(Debug, Clone)]
pub struct ConfusionNetwork {
    vocab: Arc<Vocabulary>,
    frame_duration: f64,
    log_probs: Vec<f64>,
}

impl ConfusionNetwork {
    /// Builds a network from per-frame log-probability rows.
    ///
    /// `-inf` and values below the floor are stored as the floor. Rows must
    /// have one entry per token, be non-positive and sum to one.
    pub fn new(
        vocab: Arc<Vocabulary>,
        frame_duration: f64,
        frames: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<Self> {
        if !(frame_duration > 0.0 && frame_duration.is_finite()) {
            return Err(Error::Network(format!(
                "frame_duration must be positive, got {frame_duration}"
            )));
        }
        let width = vocab.len();
        let mut log_probs = Vec::new();
        for (t, row) in frames.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    found: row.len(),
                });
            }
            let mut mass = 0.0;
            for &lp in &row {
                if lp.is_nan() || lp == f64::INFINITY {
                    return Err(Error::Network(format!("frame {t} has a non-finite entry")));
                }
                if lp > 1e-9 {
                    return Err(Error::Network(format!(
                        "frame {t} has a positive log-probability {lp}"
                    )));
                }
                mass += lp.exp();
            }
            if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::Network(format!(
                    "frame {t} sums to {mass}, expected 1"
                )));
            }
            log_probs.extend(row.into_iter().map(|lp| clamp_log(lp.min(0.0))));
        }
        Ok(Self {
            vocab,
            frame_duration,
            log_probs,
        })
    }

    /// Builds a network from per-frame probabilities (not logs).
    pub fn from_probs(
        vocab: Arc<Vocabulary>,
        frame_duration: f64,
        frames: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<Self> {
        Self::new(
            vocab,
            frame_duration,
            frames
                .into_iter()
                .map(|row| row.into_iter().map(ln_floor).collect()),
        )
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn num_frames(&self) -> usize {
        if self.vocab.is_empty() {
            0
        } else {
            self.log_probs.len() / self.vocab.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.num_frames() == 0
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.vocab.len();
        &self.log_probs[t * w..(t + 1) * w]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.log_probs.chunks_exact(self.vocab.len())
    }

    pub fn log_prob(&self, t: usize, token: TokenId) -> f64 {
        self.frame(t)[token as usize]
    }

    pub fn blank_prob(&self, t: usize) -> f64 {
        self.log_prob(t, self.vocab.blank_id()).exp()
    }

    /// Per-frame blank probabilities, the input of the VAD proxy.
    pub fn blank_probs(&self) -> Vec<f64> {
        (0..self.num_frames()).map(|t| self.blank_prob(t)).collect()
    }

    /// Copy of the frames in `range`, sharing the vocabulary.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let w = self.vocab.len();
        Self {
            vocab: Arc::clone(&self.vocab),
            frame_duration: self.frame_duration,
            log_probs: self.log_probs[range.start * w..range.end * w].to_vec(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_frames() as f64 * self.frame_duration
    }

    pub fn to_posteriors(&self) -> Vec<FramePosterior> {
        self.frames()
            .map(|row| FramePosterior {
                log_probs: row.to_vec(),
            })
            .collect()
    }
}
