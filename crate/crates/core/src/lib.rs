//! Streaming rescoring of CTC confusion networks with language-model scores.
//!
//! Networks are cut into segments, each segment's n-best hypotheses are
//! rescored as `asr + lambda * lm` with earlier winners as LM context, and a
//! per-frame shallow-fusion decoder is provided for comparison.

mod error;
pub mod eval;
pub mod fusion;
pub mod lattice;
pub mod lm;
pub mod logmath;
pub mod segmentation;
pub mod tokenization;

pub use error::{Error, Result};
pub use eval::{wer, Corpus, SweepGrid, SyntheticCorpusSpec, WerBreakdown};
pub use fusion::{decode, CostCounters, FusionConfig, FusionMode, RunReport};
pub use lattice::{ConfusionNetwork, Hypothesis, TokenId, Vocabulary};
pub use lm::{LmBackend, LmError, NGramModel, RemoteBackend, ScoreRequest, ScoreResponse};
pub use segmentation::{SegmentBoundaries, Segmenter};
pub use tokenization::Tokenizer;
