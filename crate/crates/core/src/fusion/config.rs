use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Segmenter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Batched n-best rescoring once per segment.
    Segment,
    /// Shallow fusion inside a frame-synchronous beam search.
    Frame,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Segment => "segment",
            FusionMode::Frame => "frame",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(FusionMode::Segment),
            "frame" => Ok(FusionMode::Frame),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// LM weight in `asr + lambda * lm`.
    pub lambda: f64,
    /// Hypotheses rescored per segment.
    pub nbest_size: usize,
    /// Previous segment winners used as the LM prefix.
    pub context_segments: usize,
    pub segmenter: Segmenter,
    /// Frames whose blank probability exceeds this are forced to blank in
    /// frame mode, with no LM involvement.
    pub blank_prune_threshold: f64,
    pub mode: FusionMode,
    pub beam_width: usize,
    /// Tokens tried per frame in frame mode; `None` means `min(V, 8)`.
    pub acoustic_candidates: Option<usize>,
    /// Frame paths expanded per segment; `None` means `max(4N, 256)` capped at `V^T`.
    pub path_budget: Option<usize>,
    /// Divide LM scores by their token count before weighting.
    pub length_normalize: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            nbest_size: 16,
            context_segments: 2,
            segmenter: Segmenter::default(),
            blank_prune_threshold: 0.9,
            mode: FusionMode::Segment,
            beam_width: 16,
            acoustic_candidates: None,
            path_budget: None,
            length_normalize: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.nbest_size == 0 || self.beam_width == 0 {
            return Err(Error::Config("nbest_size and beam_width must be >= 1".into()));
        }
        if self.acoustic_candidates == Some(0) || self.path_budget == Some(0) {
            return Err(Error::Config(
                "acoustic_candidates and path_budget must be >= 1 when set".into(),
            ));
        }
        if self.blank_prune_threshold.is_nan() || self.blank_prune_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "blank_prune_threshold must be > 0, got {}",
                self.blank_prune_threshold
            )));
        }
        self.segmenter.validate()
    }

    pub fn candidates_for(&self, vocab_size: usize) -> usize {
        self.acoustic_candidates.unwrap_or(8).min(vocab_size).max(1)
    }
}
