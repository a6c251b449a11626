//! LM fusion over streamed confusion networks.

mod config;
mod cost;
mod rescore;
mod shallow;
mod streaming;

pub use config::{FusionConfig, FusionMode};
pub use cost::{cost_report, CostCounters, CostReport};
pub use rescore::{
    combine_scores, rescore_segment, ScoredEntry, ScoredNBest, SegmentContext, SegmentScoring,
};
pub use shallow::{check_matched_vocab, shallow_fusion_decode, ShallowFusionResult};
pub use streaming::{
    asr_only_transcript, decode, run_streaming, segment_nbest_texts, RunReport, SegmentRecord,
};
