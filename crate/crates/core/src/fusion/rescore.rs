use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::FusionConfig;
use crate::error::{Error, Result};
use crate::lattice::{rank_order, Hypothesis};
use crate::lm::{LmBackend, ScoreRequest};
use crate::tokenization::Tokenizer;

/// `asr_log + lambda * lm_log`.
#[inline]
pub fn combine_scores(asr_log: f64, lm_log: f64, lambda: f64) -> f64 {
    asr_log + lambda * lm_log
}

/// Winner texts of the most recent segments, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentContext {
    capacity: usize,
    recent_top_texts: VecDeque<String>,
}

impl SegmentContext {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            recent_top_texts: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, text: String) {
        if self.capacity == 0 {
            return;
        }
        if self.recent_top_texts.len() == self.capacity {
            self.recent_top_texts.pop_front();
        }
        self.recent_top_texts.push_back(text);
    }

    pub fn len(&self) -> usize {
        self.recent_top_texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent_top_texts.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.recent_top_texts.iter().map(String::as_str)
    }

    /// Non-empty texts joined by single spaces.
    pub fn prefix(&self) -> String {
        self.texts()
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub hypothesis: Hypothesis,
    pub text: String,
    pub lm_log_score: f64,
    pub final_log_score: f64,
    /// Suffix length under the LM's tokenizer.
    pub lm_tokens: usize,
}

/// Entries sorted by final score, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNBest {
    pub entries: Vec<ScoredEntry>,
}

impl ScoredNBest {
    pub fn winner(&self) -> Option<&ScoredEntry> {
        self.entries.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScoring {
    pub prefix: String,
    pub nbest: ScoredNBest,
    /// Set when the backend failed and the ranking fell back to ASR scores.
    pub lm_error: Option<String>,
}

/// Rescores one segment's n-best list with a single batched LM request.
///
/// On backend failure every LM score is zero, which leaves the ASR order, and
/// the error is returned alongside.
pub fn rescore_segment(
    nbest: &[Hypothesis],
    ctx: &SegmentContext,
    asr_tokenizer: &Tokenizer,
    backend: &dyn LmBackend,
    cfg: &FusionConfig,
) -> Result<SegmentScoring> {
    if nbest.is_empty() {
        return Err(Error::Config("rescore_segment needs a non-empty n-best list".into()));
    }
    let prefix = ctx.prefix();
    let texts = nbest
        .iter()
        .map(|h| asr_tokenizer.detokenize(&h.tokens))
        .collect::<Result<Vec<_>>>()?;

    let request = ScoreRequest::new(prefix.clone(), texts.clone());
    let (lm_scores, lm_tokens, lm_error) = match backend
        .score_suffixes(&request)
        .and_then(|resp| resp.conform(&request))
    {
        Ok(resp) => (resp.log_probs, resp.token_counts, None),
        Err(e) => {
            let counts = nbest.iter().map(|h| h.tokens.len()).collect();
            (vec![0.0; nbest.len()], counts, Some(e.to_string()))
        }
    };

    let mut entries: Vec<ScoredEntry> = nbest
        .iter()
        .zip(texts)
        .zip(lm_scores.into_iter().zip(lm_tokens))
        .map(|((hyp, text), (lm_raw, count))| {
            let lm_log_score = if cfg.length_normalize && count > 0 {
                lm_raw / count as f64
            } else {
                lm_raw
            };
            ScoredEntry {
                hypothesis: hyp.clone(),
                text,
                lm_log_score,
                final_log_score: combine_scores(hyp.asr_log_score, lm_log_score, cfg.lambda),
                lm_tokens: count,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        rank_order(
            a.final_log_score,
            &a.hypothesis.tokens,
            b.final_log_score,
            &b.hypothesis.tokens,
        )
    });
    Ok(SegmentScoring {
        prefix,
        nbest: ScoredNBest { entries },
        lm_error,
    })
}
