//! Language-model scoring backends.
//!
//! Every backend answers the same stateless, batched question: the
//! teacher-forced log-probability of each suffix text given a prefix text.
//! Context travels entirely in the prefix, and each backend tokenizes with
//! its own vocabulary.

mod ngram;
mod remote;

use serde::{Deserialize, Serialize};

pub use ngram::{train_ngram, NGramModel, NGramModelFile, BOS_ID, NGRAM_FORMAT};
pub use remote::{RemoteBackend, RemoteConfig, ENDPOINT_ENV, SCORE_PATH};

use crate::logmath::clamp_log;
use crate::tokenization::Tokenizer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("invalid score request: {0}")]
    Validation(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response shape mismatch: expected {expected} scores, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },
}

/// Score every suffix after a shared prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prefix: String,
    pub suffixes: Vec<String>,
}

impl ScoreRequest {
    pub fn new(prefix: impl Into<String>, suffixes: Vec<String>) -> Self {
        Self {
            prefix: prefix.into(),
            suffixes,
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.suffixes.is_empty() {
            return Err(LmError::Validation("suffixes must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub log_probs: Vec<f64>,
    pub token_counts: Vec<usize>,
}

impl ScoreResponse {
    /// Checks both arrays against the request and floors the scores.
    pub fn conform(mut self, req: &ScoreRequest) -> Result<Self, LmError> {
        for found in [self.log_probs.len(), self.token_counts.len()] {
            if found != req.suffixes.len() {
                return Err(LmError::ShapeMismatch {
                    expected: req.suffixes.len(),
                    found,
                });
            }
        }
        for lp in &mut self.log_probs {
            if lp.is_nan() || *lp > 1e-9 {
                return Err(LmError::Malformed(format!("log-probability {lp} out of range")));
            }
            *lp = clamp_log(lp.min(0.0));
        }
        Ok(self)
    }
}

/// Batched prefix/suffix teacher-forcing scorer.
pub trait LmBackend: Send + Sync {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError>;

    /// The backend's own tokenizer, when it is known locally.
    fn tokenizer(&self) -> Option<&Tokenizer> {
        None
    }
}

impl<B: LmBackend + ?Sized> LmBackend for &B {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        (**self).score_suffixes(req)
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        (**self).tokenizer()
    }
}

impl<B: LmBackend + ?Sized> LmBackend for std::sync::Arc<B> {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        (**self).score_suffixes(req)
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        (**self).tokenizer()
    }
}

impl<B: LmBackend + ?Sized> LmBackend for Box<B> {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        (**self).score_suffixes(req)
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        (**self).tokenizer()
    }
}

/// Adds a constant to every score of the wrapped backend.
#[derive(Debug, Clone)]
pub struct OffsetBackend<B> {
    pub inner: B,
    pub offset: f64,
}

impl<B: LmBackend> LmBackend for OffsetBackend<B> {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        let mut resp = self.inner.score_suffixes(req)?;
        for lp in &mut resp.log_probs {
            *lp += self.offset;
        }
        Ok(resp)
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        self.inner.tokenizer()
    }
}

/// Joins prefix and continuation text with a single space.
pub fn join_text(prefix: &str, suffix: &str) -> String {
    match (prefix.is_empty(), suffix.is_empty()) {
        (true, _) => suffix.to_string(),
        (_, true) => prefix.to_string(),
        _ => format!("{prefix} {suffix}"),
    }
}
