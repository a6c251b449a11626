use serde::{Deserialize, Serialize};

use super::config::{FusionConfig, FusionMode};
use super::cost::CostCounters;
use super::rescore::{rescore_segment, ScoredEntry, SegmentContext};
use super::shallow::shallow_fusion_decode;
use crate::error::Result;
use crate::lattice::{default_path_budget, nbest_hypotheses, ConfusionNetwork, Hypothesis};
use crate::lm::LmBackend;
use crate::tokenization::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub span: (usize, usize),
    pub prefix_used: String,
    pub nbest: Vec<ScoredEntry>,
    pub winner: String,
    pub lm_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: FusionMode,
    pub transcript: String,
    pub segments: Vec<SegmentRecord>,
    pub counters: CostCounters,
}

impl RunReport {
    pub fn lm_failures(&self) -> usize {
        self.segments.iter().filter(|s| s.lm_error.is_some()).count()
    }
}

fn join_nonempty<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    texts.filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ")
}

fn segment_nbest(segment: &ConfusionNetwork, cfg: &FusionConfig) -> Result<Vec<Hypothesis>> {
    let budget = cfg
        .path_budget
        .unwrap_or_else(|| default_path_budget(segment, cfg.nbest_size));
    let n_hyps = cfg.nbest_size.min(budget);
    nbest_hypotheses(segment, budget, n_hyps)
}

/// Per-segment n-best rescoring over the whole stream.
///
/// Segments are processed in order and each one sees only the winners of the
/// segments before it, so a segment's record never depends on later frames.
pub fn run_streaming(
    net: &ConfusionNetwork,
    cfg: &FusionConfig,
    backend: &dyn LmBackend,
    asr_tokenizer: &Tokenizer,
) -> Result<RunReport> {
    cfg.validate()?;
    let boundaries = cfg.segmenter.segment(net)?;
    let mut ctx = SegmentContext::new(cfg.context_segments);
    let mut counters = CostCounters::default();
    let mut segments = Vec::with_capacity(boundaries.len());

    for (index, &(start, end)) in boundaries.spans.iter().enumerate() {
        let segment = net.slice(start..end);
        let nbest = segment_nbest(&segment, cfg)?;
        let scoring = rescore_segment(&nbest, &ctx, asr_tokenizer, backend, cfg)?;
        let winner = scoring.nbest.winner().expect("non-empty n-best");
        let winner_text = winner.text.clone();

        let hyps = scoring.nbest.entries.len() as u64;
        let tokens = winner.lm_tokens as u64;
        counters.n_frames += (end - start) as u64;
        counters.n_hyps += hyps;
        counters.n_tokens += tokens;
        counters.lm_calls_per_segment += tokens * hyps;
        counters.backend_requests += 1;

        ctx.push(winner_text.clone());
        segments.push(SegmentRecord {
            index,
            span: (start, end),
            prefix_used: scoring.prefix,
            nbest: scoring.nbest.entries,
            winner: winner_text,
            lm_error: scoring.lm_error,
        });
    }

    Ok(RunReport {
        mode: FusionMode::Segment,
        transcript: join_nonempty(segments.iter().map(|s| s.winner.as_str())),
        segments,
        counters,
    })
}

/// Top ASR hypothesis per segment with no LM involved.
pub fn asr_only_transcript(
    net: &ConfusionNetwork,
    cfg: &FusionConfig,
    asr_tokenizer: &Tokenizer,
) -> Result<String> {
    cfg.validate()?;
    let boundaries = cfg.segmenter.segment(net)?;
    let mut texts = Vec::with_capacity(boundaries.len());
    for &(start, end) in &boundaries.spans {
        let nbest = segment_nbest(&net.slice(start..end), cfg)?;
        texts.push(asr_tokenizer.detokenize(&nbest[0].tokens)?);
    }
    Ok(join_nonempty(texts.iter().map(String::as_str)))
}

/// Per-segment n-best lists without rescoring, for oracle analyses.
pub fn segment_nbest_texts(
    net: &ConfusionNetwork,
    cfg: &FusionConfig,
    asr_tokenizer: &Tokenizer,
) -> Result<Vec<Vec<String>>> {
    let boundaries = cfg.segmenter.segment(net)?;
    boundaries
        .spans
        .iter()
        .map(|&(start, end)| {
            segment_nbest(&net.slice(start..end), cfg)?
                .iter()
                .map(|h| asr_tokenizer.detokenize(&h.tokens))
                .collect()
        })
        .collect()
}

/// Decodes with whichever mode `cfg` selects.
pub fn decode(
    net: &ConfusionNetwork,
    cfg: &FusionConfig,
    backend: &dyn LmBackend,
    asr_tokenizer: &Tokenizer,
) -> Result<RunReport> {
    match cfg.mode {
        FusionMode::Segment => run_streaming(net, cfg, backend, asr_tokenizer),
        FusionMode::Frame => {
            let out = shallow_fusion_decode(net, cfg, backend, asr_tokenizer)?;
            Ok(RunReport {
                mode: FusionMode::Frame,
                transcript: out.text,
                segments: Vec::new(),
                counters: out.counters,
            })
        }
    }
}
