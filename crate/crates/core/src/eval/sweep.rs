//! Ablation sweeps over fusion settings, written as versioned CSV.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{corpus_oracle, evaluate_corpus, Corpus};
use crate::error::{Error, Result};
use crate::fusion::{cost_report, FusionConfig, FusionMode};
use crate::lm::LmBackend;
use crate::segmentation::Segmenter;

pub const SWEEP_CSV_HEADER: &str = "# latfuse-sweep v1";

/// Axes of a sweep. An empty axis keeps the value from `base`.
///
/// `segment_seconds` sets the fixed segment length, or the maximum segment
/// length for the VAD segmenter. A λ=0 point is always added per setting so
/// every row has a baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambda: Vec<f64>,
    #[serde(alias = "context")]
    pub context_segments: Vec<usize>,
    #[serde(alias = "nbest")]
    pub nbest_size: Vec<usize>,
    pub segmenter: Vec<String>,
    pub segment_seconds: Vec<f64>,
    pub mode: Vec<FusionMode>,
    pub base: FusionConfig,
}

fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

fn segmenter_seconds(s: &Segmenter) -> f64 {
    match *s {
        Segmenter::Fixed { segment_seconds } => segment_seconds,
        Segmenter::Vad {
            max_segment_seconds, ..
        } => max_segment_seconds,
    }
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Grid points in a fixed order, with λ varying fastest.
    pub fn expand(&self) -> Result<Vec<FusionConfig>> {
        let base = &self.base;
        let mut lambdas = vec![0.0];
        for &l in &self.lambda {
            if !lambdas.contains(&l) {
                lambdas.push(l);
            }
        }
        if self.lambda.is_empty() && base.lambda != 0.0 {
            lambdas.push(base.lambda);
        }
        let kinds = axis(&self.segmenter, base.segmenter.name().to_string());
        let seconds = axis(&self.segment_seconds, segmenter_seconds(&base.segmenter));

        let mut out = Vec::new();
        for &mode in &axis(&self.mode, base.mode) {
            for kind in &kinds {
                for &secs in &seconds {
                    let segmenter = match kind.as_str() {
                        "fixed" => Segmenter::fixed(secs),
                        "vad" => {
                            let template = match &base.segmenter {
                                vad @ Segmenter::Vad { .. } => vad.clone(),
                                _ => Segmenter::vad_default(),
                            };
                            match template {
                                Segmenter::Vad { threshold, min_silence_seconds, .. } => Segmenter::Vad {
                                    threshold,
                                    min_silence_seconds,
                                    max_segment_seconds: secs,
                                },
                                fixed => fixed,
                            }
                        }
                        other => return Err(Error::Config(format!("unknown segmenter {other:?}"))),
                    };
                    for &context in &axis(&self.context_segments, base.context_segments) {
                        for &nbest in &axis(&self.nbest_size, base.nbest_size) {
                            for &lambda in &lambdas {
                                out.push(FusionConfig {
                                    lambda,
                                    context_segments: context,
                                    nbest_size: nbest,
                                    segmenter: segmenter.clone(),
                                    mode,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub mode: FusionMode,
    pub segmenter: String,
    pub segment_seconds: f64,
    pub context_segments: usize,
    pub nbest_size: usize,
    pub lambda: f64,
    pub corpus_wer: Option<f64>,
    pub baseline_wer: Option<f64>,
    /// `(corpus_wer - baseline_wer) / baseline_wer` against the λ=0 row.
    pub relative_change: Option<f64>,
    pub oracle_wer: Option<f64>,
    pub substitutions: Option<usize>,
    pub insertions: Option<usize>,
    pub deletions: Option<usize>,
    pub reference_words: Option<usize>,
    pub n_frames: Option<u64>,
    pub n_tokens: Option<u64>,
    pub n_hyps: Option<u64>,
    pub lm_calls_per_segment: Option<u64>,
    pub lm_calls_per_frame: Option<u64>,
    pub frames_skipped_by_blank_prune: Option<u64>,
    pub predicted_cost_ratio: Option<f64>,
    pub median_segment_seconds: Option<f64>,
    pub lm_failures: Option<usize>,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(index: usize, cfg: &FusionConfig) -> Self {
        Self {
            index,
            mode: cfg.mode,
            segmenter: cfg.segmenter.name().to_string(),
            segment_seconds: segmenter_seconds(&cfg.segmenter),
            context_segments: cfg.context_segments,
            nbest_size: cfg.nbest_size,
            lambda: cfg.lambda,
            corpus_wer: None,
            baseline_wer: None,
            relative_change: None,
            oracle_wer: None,
            substitutions: None,
            insertions: None,
            deletions: None,
            reference_words: None,
            n_frames: None,
            n_tokens: None,
            n_hyps: None,
            lm_calls_per_segment: None,
            lm_calls_per_frame: None,
            frames_skipped_by_blank_prune: None,
            predicted_cost_ratio: None,
            median_segment_seconds: None,
            lm_failures: None,
            error: None,
        }
    }

    /// Every setting except λ.
    fn group_key(&self) -> (FusionMode, &str, u64, usize, usize) {
        (
            self.mode,
            &self.segmenter,
            self.segment_seconds.to_bits(),
            self.context_segments,
            self.nbest_size,
        )
    }
}

pub fn relative_change(wer: f64, baseline: f64) -> Option<f64> {
    if baseline > 0.0 {
        Some((wer - baseline) / baseline)
    } else if wer == baseline {
        Some(0.0)
    } else {
        None
    }
}

fn run_point(index: usize, cfg: &FusionConfig, corpus: &Corpus, backend: &dyn LmBackend) -> SweepRow {
    let mut row = SweepRow::empty(index, cfg);
    let outcome = evaluate_corpus(corpus, cfg, backend).and_then(|eval| {
        let oracle = match cfg.mode {
            FusionMode::Segment => corpus_oracle(corpus, cfg)?.rate(),
            FusionMode::Frame => None,
        };
        Ok((eval, oracle))
    });
    match outcome {
        Ok((eval, oracle)) => {
            let c = eval.counters;
            row.corpus_wer = eval.wer.rate();
            row.oracle_wer = oracle;
            row.substitutions = Some(eval.wer.substitutions);
            row.insertions = Some(eval.wer.insertions);
            row.deletions = Some(eval.wer.deletions);
            row.reference_words = Some(eval.wer.reference_words);
            row.n_frames = Some(c.n_frames);
            row.n_tokens = Some(c.n_tokens);
            row.n_hyps = Some(c.n_hyps);
            row.lm_calls_per_segment = Some(c.lm_calls_per_segment);
            row.lm_calls_per_frame = Some(c.lm_calls_per_frame);
            row.frames_skipped_by_blank_prune = Some(c.frames_skipped_by_blank_prune);
            row.predicted_cost_ratio = cost_report(&c).predicted_ratio;
            row.median_segment_seconds = eval.median_segment_seconds();
            row.lm_failures = Some(eval.lm_failures);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Fills `baseline_wer` and `relative_change` from each group's λ=0 row.
pub fn attach_baselines(rows: &mut [SweepRow]) {
    let baselines: Vec<_> = rows
        .iter()
        .filter(|r| r.lambda == 0.0)
        .map(|r| {
            let (m, s, secs, c, n) = r.group_key();
            ((m, s.to_string(), secs, c, n), r.corpus_wer)
        })
        .collect();
    for row in rows.iter_mut() {
        let (m, s, secs, c, n) = row.group_key();
        let base = baselines
            .iter()
            .find(|(k, _)| *k == (m, s.to_string(), secs, c, n))
            .and_then(|(_, w)| *w);
        row.baseline_wer = base;
        row.relative_change = match (row.corpus_wer, base) {
            (Some(w), Some(b)) => relative_change(w, b),
            _ => None,
        };
    }
}

/// Runs every grid point; rows come back in grid order whatever the
/// completion order. A failing point yields a row with only `error` set.
pub fn run_sweep(grid: &SweepGrid, corpus: &Corpus, backend: &dyn LmBackend) -> Result<Vec<SweepRow>> {
    let points = grid.expand()?;
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| run_point(i, cfg, corpus, backend))
        .collect();
    attach_baselines(&mut rows);
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(mut input: R) -> Result<Vec<SweepRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != SWEEP_CSV_HEADER {
        return Err(Error::Format(format!("expected {SWEEP_CSV_HEADER:?}, got {:?}", first.trim_end())));
    }
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
