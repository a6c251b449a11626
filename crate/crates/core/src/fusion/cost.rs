//! LM forward-propagation accounting for the two fusion modes.
//!
//! Counts follow fixed-shape accelerator batches: scoring a segment costs one
//! propagation per winner token for each hypothesis in the batch, and each
//! unpruned frame in frame mode costs one propagation per beam slot.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub n_frames: u64,
    pub n_tokens: u64,
    pub n_hyps: u64,
    pub lm_calls_per_segment: u64,
    pub lm_calls_per_frame: u64,
    pub frames_skipped_by_blank_prune: u64,
    /// Actual `score_suffixes` invocations.
    pub backend_requests: u64,
}

impl CostCounters {
    /// Field-wise sum, for totals over a corpus.
    pub fn accumulate(&mut self, other: &CostCounters) {
        self.n_frames += other.n_frames;
        self.n_tokens += other.n_tokens;
        self.n_hyps += other.n_hyps;
        self.lm_calls_per_segment += other.lm_calls_per_segment;
        self.lm_calls_per_frame += other.lm_calls_per_frame;
        self.frames_skipped_by_blank_prune += other.frames_skipped_by_blank_prune;
        self.backend_requests += other.backend_requests;
    }

    /// Pairs a segment-mode run with a frame-mode run over the same frames.
    pub fn pair(segment_run: &CostCounters, frame_run: &CostCounters) -> Result<CostCounters> {
        if segment_run.n_frames != frame_run.n_frames {
            return Err(Error::Config(format!(
                "runs cover different frame counts: {} vs {}",
                segment_run.n_frames, frame_run.n_frames
            )));
        }
        Ok(CostCounters {
            n_frames: segment_run.n_frames,
            n_tokens: segment_run.n_tokens,
            n_hyps: segment_run.n_hyps,
            lm_calls_per_segment: segment_run.lm_calls_per_segment,
            lm_calls_per_frame: frame_run.lm_calls_per_frame,
            frames_skipped_by_blank_prune: frame_run.frames_skipped_by_blank_prune,
            backend_requests: segment_run.backend_requests + frame_run.backend_requests,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub counters: CostCounters,
    /// `lm_calls_per_frame / lm_calls_per_segment`; `None` when undefined.
    pub measured_ratio: Option<f64>,
    /// `n_frames / n_tokens`; `None` when undefined.
    pub predicted_ratio: Option<f64>,
    /// Exact cross-multiplied agreement of the two ratios. Only judged when
    /// no frame was pruned and both ratios are defined.
    pub consistent: Option<bool>,
}

pub fn cost_report(counters: &CostCounters) -> CostReport {
    let ratio = |num: u64, den: u64| (den != 0).then(|| num as f64 / den as f64);
    let measured_ratio = ratio(counters.lm_calls_per_frame, counters.lm_calls_per_segment);
    let predicted_ratio = ratio(counters.n_frames, counters.n_tokens);
    let consistent = (measured_ratio.is_some()
        && predicted_ratio.is_some()
        && counters.frames_skipped_by_blank_prune == 0)
        .then(|| {
            counters.lm_calls_per_frame as u128 * counters.n_tokens as u128
                == counters.lm_calls_per_segment as u128 * counters.n_frames as u128
        });
    CostReport {
        counters: *counters,
        measured_ratio,
        predicted_ratio,
        consistent,
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |r: Option<f64>| r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
        writeln!(
            f,
            "frames={} tokens={} hyps={} skipped={}",
            self.counters.n_frames,
            self.counters.n_tokens,
            self.counters.n_hyps,
            self.counters.frames_skipped_by_blank_prune
        )?;
        writeln!(
            f,
            "lm calls: per-frame={} per-segment={}",
            self.counters.lm_calls_per_frame, self.counters.lm_calls_per_segment
        )?;
        write!(
            f,
            "measured ratio={} predicted ratio={} consistent={}",
            show(self.measured_ratio),
            show(self.predicted_ratio),
            self.consistent
                .map_or_else(|| "n/a".to_string(), |c| c.to_string())
        )
    }
}
