//! Per-frame fusion: CTC prefix beam search with incremental LM scores.
//!
//! Each beam tracks the acoustic mass of its collapsed prefix split into
//! paths ending in blank and in a token. A prefix's LM score is the
//! teacher-forced score of its text, so the increment for a new token is the
//! difference to its parent and the increments telescope to the full-text
//! score. All prefixes created in one frame go to the backend as one batch.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::config::FusionConfig;
use super::cost::CostCounters;
use crate::error::{Error, Result};
use crate::lattice::{rank_order, ConfusionNetwork, Hypothesis, TokenId};
use crate::lm::{LmBackend, ScoreRequest};
use crate::logmath::{is_floor, log_add, LOG_FLOOR};
use crate::tokenization::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowFusionResult {
    pub hypothesis: Hypothesis,
    pub text: String,
    pub lm_log_score: f64,
    pub final_log_score: f64,
    pub counters: CostCounters,
    pub lm_failures: usize,
}

#[derive(Debug, Clone, Copy)]
struct Mass {
    blank: f64,
    token: f64,
}

impl Mass {
    const ZERO: Mass = Mass {
        blank: LOG_FLOOR,
        token: LOG_FLOOR,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.token)
    }
}

#[derive(Debug, Clone, Copy)]
struct LmEntry {
    score: f64,
    tokens: usize,
}

#[inline]
fn extend(a: f64, b: f64) -> f64 {
    if is_floor(a) || is_floor(b) {
        LOG_FLOOR
    } else {
        a + b
    }
}

fn text_pieces_without_unk(t: &Tokenizer) -> BTreeSet<&str> {
    let unk = t.piece(t.unk_id());
    t.text_pieces()
        .into_iter()
        .filter(|p| Some(*p) != unk)
        .collect()
}

/// Errors unless the backend's vocabulary matches the ASR one.
pub fn check_matched_vocab(asr: &Tokenizer, backend: &dyn LmBackend) -> Result<()> {
    let lm = backend.tokenizer().ok_or_else(|| {
        Error::Config("frame mode needs the LM vocabulary to compare against the ASR one".into())
    })?;
    if text_pieces_without_unk(asr) != text_pieces_without_unk(lm) {
        return Err(Error::Config(
            "frame mode requires identical ASR and LM vocabularies".into(),
        ));
    }
    Ok(())
}

/// Frame-synchronous shallow fusion over the whole network.
pub fn shallow_fusion_decode(
    net: &ConfusionNetwork,
    cfg: &FusionConfig,
    backend: &dyn LmBackend,
    asr_tokenizer: &Tokenizer,
) -> Result<ShallowFusionResult> {
    cfg.validate()?;
    check_matched_vocab(asr_tokenizer, backend)?;

    let blank = net.vocab().blank_id();
    let width = net.vocab_size();
    let n_candidates = cfg.candidates_for(width);
    let lambda = cfg.lambda;
    let normalize = cfg.length_normalize;

    let mut counters = CostCounters {
        n_frames: net.num_frames() as u64,
        n_hyps: cfg.beam_width as u64,
        ..Default::default()
    };
    let mut lm_failures = 0;
    let mut lm_cache: HashMap<Vec<TokenId>, LmEntry> = HashMap::new();
    lm_cache.insert(Vec::new(), LmEntry { score: 0.0, tokens: 0 });

    let fused = |mass: Mass, lm: LmEntry| -> f64 {
        let lm_score = if normalize && lm.tokens > 0 {
            lm.score / lm.tokens as f64
        } else {
            lm.score
        };
        mass.total() + lambda * lm_score
    };

    let mut beams: Vec<(Vec<TokenId>, Mass)> = vec![(
        Vec::new(),
        Mass {
            blank: 0.0,
            token: LOG_FLOOR,
        },
    )];

    for t in 0..net.num_frames() {
        let row = net.frame(t);
        if net.blank_prob(t) > cfg.blank_prune_threshold {
            counters.frames_skipped_by_blank_prune += 1;
            for (_, mass) in &mut beams {
                *mass = Mass {
                    blank: extend(mass.total(), row[blank as usize]),
                    token: LOG_FLOOR,
                };
            }
            continue;
        }

        let mut candidates: Vec<TokenId> = (0..width as TokenId)
            .filter(|&c| !is_floor(row[c as usize]))
            .collect();
        candidates.sort_by(|&a, &b| {
            row[b as usize]
                .total_cmp(&row[a as usize])
                .then_with(|| a.cmp(&b))
        });
        candidates.truncate(n_candidates);

        let mut next: HashMap<Vec<TokenId>, Mass> = HashMap::new();
        let mut parents: HashMap<Vec<TokenId>, Vec<TokenId>> = HashMap::new();
        for (prefix, mass) in &beams {
            let total = mass.total();
            for &c in &candidates {
                let lp = row[c as usize];
                if c == blank {
                    let e = next.entry(prefix.clone()).or_insert(Mass::ZERO);
                    e.blank = log_add(e.blank, extend(total, lp));
                    continue;
                }
                let last = prefix.last().copied();
                if last == Some(c) {
                    let e = next.entry(prefix.clone()).or_insert(Mass::ZERO);
                    e.token = log_add(e.token, extend(mass.token, lp));
                }
                let source = if last == Some(c) { mass.blank } else { total };
                let mut grown = prefix.clone();
                grown.push(c);
                if !lm_cache.contains_key(&grown) {
                    parents.entry(grown.clone()).or_insert_with(|| prefix.clone());
                }
                let e = next.entry(grown).or_insert(Mass::ZERO);
                e.token = log_add(e.token, extend(source, lp));
            }
        }

        counters.lm_calls_per_frame += cfg.beam_width as u64;
        if !parents.is_empty() {
            let mut pending: Vec<(Vec<TokenId>, Vec<TokenId>)> = parents.into_iter().collect();
            pending.sort();
            let texts = pending
                .iter()
                .map(|(tokens, _)| asr_tokenizer.detokenize(tokens))
                .collect::<Result<Vec<_>>>()?;
            let request = ScoreRequest::new(String::new(), texts);
            counters.backend_requests += 1;
            match backend
                .score_suffixes(&request)
                .and_then(|r| r.conform(&request))
            {
                Ok(resp) => {
                    for ((tokens, _), (score, count)) in pending
                        .into_iter()
                        .zip(resp.log_probs.into_iter().zip(resp.token_counts))
                    {
                        lm_cache.insert(tokens, LmEntry { score, tokens: count });
                    }
                }
                Err(_) => {
                    lm_failures += 1;
                    for (tokens, parent) in pending {
                        let inherited = lm_cache[&parent];
                        lm_cache.insert(tokens, inherited);
                    }
                }
            }
        }

        let mut ranked: Vec<(Vec<TokenId>, Mass, f64)> = next
            .into_iter()
            .map(|(tokens, mass)| {
                let score = fused(mass, lm_cache[&tokens]);
                (tokens, mass, score)
            })
            .collect();
        ranked.sort_by(|a, b| rank_order(a.2, &a.0, b.2, &b.0));
        ranked.truncate(cfg.beam_width);
        beams = ranked.into_iter().map(|(tokens, mass, _)| (tokens, mass)).collect();
    }

    let (tokens, mass, final_log_score) = beams
        .into_iter()
        .map(|(tokens, mass)| {
            let score = fused(mass, lm_cache[&tokens]);
            (tokens, mass, score)
        })
        .min_by(|a, b| rank_order(a.2, &a.0, b.2, &b.0))
        .expect("beam never empties");
    let lm = lm_cache[&tokens];
    counters.n_tokens = lm.tokens as u64;
    let text = asr_tokenizer.detokenize(&tokens)?;
    Ok(ShallowFusionResult {
        hypothesis: Hypothesis {
            tokens,
            asr_log_score: mass.total().min(0.0),
        },
        text,
        lm_log_score: lm.score,
        final_log_score,
        counters,
        lm_failures,
    })
}
