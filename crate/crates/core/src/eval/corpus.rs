//! Evaluation corpora: in memory, on disk, and scored end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wer::{normalize_words, text_wer, WerBreakdown};
use crate::error::{Error, Result};
use crate::fusion::{
    run_streaming, segment_nbest_texts, shallow_fusion_decode, CostCounters, FusionConfig, FusionMode,
};
use crate::lattice::format::{read_cnjl, save_cnjl};
use crate::lattice::{ConfusionNetwork, Vocabulary};
use crate::lm::LmBackend;
use crate::tokenization::{Tokenizer, DEFAULT_BOUNDARY_MARKER, DEFAULT_UNK};

pub const REFS_FILE: &str = "refs.txt";

#[derive(Debug, Clone)]
pub struct Utterance {
    pub reference: String,
    pub network: ConfusionNetwork,
}

/// Utterances sharing one ASR vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Arc<Vocabulary>,
    pub tokenizer: Tokenizer,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let first = utterances
            .first()
            .ok_or_else(|| Error::Config("corpus has no utterances".into()))?;
        let vocab = Arc::clone(first.network.vocab());
        if let Some(bad) = utterances.iter().position(|u| **u.network.vocab() != *vocab) {
            return Err(Error::Vocabulary(format!(
                "utterance {bad} uses a different vocabulary than utterance 0"
            )));
        }
        let tokenizer = Tokenizer::from_vocabulary(&vocab, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER)?;
        Ok(Self {
            vocab,
            tokenizer,
            utterances,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Reads every `*.cnjl` in `dir` in file-name order, paired line by line
    /// with `refs.txt`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let refs = fs::read_to_string(dir.join(REFS_FILE))?;
        let refs: Vec<&str> = refs.lines().collect();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cnjl"))
            .collect();
        paths.sort();
        if paths.len() != refs.len() {
            return Err(Error::Format(format!(
                "{} lattices but {} reference lines in {}",
                paths.len(),
                refs.len(),
                dir.display()
            )));
        }
        let utterances = paths
            .iter()
            .zip(refs)
            .map(|(p, r)| {
                Ok(Utterance {
                    reference: r.to_string(),
                    network: read_cnjl(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(utterances)
    }

    /// Writes `00000.cnjl`, `00001.cnjl`, ... and `refs.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut refs = String::new();
        for (i, utt) in self.utterances.iter().enumerate() {
            save_cnjl(&utt.network, dir.join(format!("{i:05}.cnjl")))?;
            refs.push_str(&normalize_words(&utt.reference).join(" "));
            refs.push('\n');
        }
        fs::write(dir.join(REFS_FILE), refs)?;
        Ok(())
    }
}

/// Errors of the best hypothesis choice, and the reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleWer {
    pub errors: usize,
    pub reference_words: usize,
}

impl OracleWer {
    pub fn rate(&self) -> Option<f64> {
        (self.reference_words > 0).then(|| self.errors as f64 / self.reference_words as f64)
    }
}

/// Fewest word errors reachable by picking one hypothesis per segment.
///
/// `best[i]` holds the cheapest alignment of `reference[..i]` against the
/// segments consumed so far; each segment extends it by the edit distance
/// between a reference slice and one of its hypotheses.
pub fn oracle_errors<S: AsRef<str>>(reference: &[S], segments: &[Vec<Vec<String>>]) -> usize {
    let n = reference.len();
    let mut best: Vec<usize> = (0..=n).collect();
    for alternatives in segments {
        let mut next = vec![usize::MAX; n + 1];
        for (i, &base) in best.iter().enumerate() {
            if base == usize::MAX {
                continue;
            }
            for hyp in alternatives {
                let mut row: Vec<usize> = (0..=hyp.len()).collect();
                next[i] = next[i].min(base + row[hyp.len()]);
                for (j, r) in reference[i..].iter().enumerate() {
                    let mut diag = row[0];
                    row[0] += 1;
                    for (c, h) in hyp.iter().enumerate() {
                        let sub = diag + usize::from(r.as_ref() != h);
                        diag = row[c + 1];
                        row[c + 1] = sub.min(row[c + 1] + 1).min(row[c] + 1);
                    }
                    let end = i + j + 1;
                    next[end] = next[end].min(base + row[hyp.len()]);
                }
            }
        }
        best = next;
    }
    best[n]
}

/// Oracle over each segment's n-best list, for segment mode.
pub fn utterance_oracle(utt: &Utterance, cfg: &FusionConfig, tokenizer: &Tokenizer) -> Result<OracleWer> {
    let reference = normalize_words(&utt.reference);
    let segments: Vec<Vec<Vec<String>>> = segment_nbest_texts(&utt.network, cfg, tokenizer)?
        .into_iter()
        .map(|alts| alts.iter().map(|t| normalize_words(t)).collect())
        .collect();
    Ok(OracleWer {
        errors: oracle_errors(&reference, &segments),
        reference_words: reference.len(),
    })
}

pub fn corpus_oracle(corpus: &Corpus, cfg: &FusionConfig) -> Result<OracleWer> {
    let per: Vec<OracleWer> = corpus
        .utterances
        .par_iter()
        .map(|u| utterance_oracle(u, cfg, &corpus.tokenizer))
        .collect::<Result<_>>()?;
    Ok(per.iter().fold(OracleWer::default(), |acc, o| OracleWer {
        errors: acc.errors + o.errors,
        reference_words: acc.reference_words + o.reference_words,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub hypothesis: String,
    pub wer: WerBreakdown,
    pub counters: CostCounters,
    pub lm_failures: usize,
    pub segment_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub wer: WerBreakdown,
    pub counters: CostCounters,
    pub lm_failures: usize,
    pub utterances: Vec<UtteranceResult>,
}

impl CorpusEvaluation {
    /// Median segment length in seconds over the whole corpus.
    pub fn median_segment_seconds(&self) -> Option<f64> {
        let mut all: Vec<f64> = self
            .utterances
            .iter()
            .flat_map(|u| u.segment_seconds.iter().copied())
            .collect();
        if all.is_empty() {
            return None;
        }
        all.sort_by(f64::total_cmp);
        let mid = all.len() / 2;
        Some(if all.len() % 2 == 1 {
            all[mid]
        } else {
            (all[mid - 1] + all[mid]) / 2.0
        })
    }
}

pub fn evaluate_utterance(
    utt: &Utterance,
    cfg: &FusionConfig,
    backend: &dyn LmBackend,
    tokenizer: &Tokenizer,
) -> Result<UtteranceResult> {
    let dt = utt.network.frame_duration();
    let segment_seconds = cfg
        .segmenter
        .segment(&utt.network)?
        .lengths()
        .map(|n| n as f64 * dt)
        .collect();
    let (hypothesis, counters, lm_failures) = match cfg.mode {
        FusionMode::Segment => {
            let run = run_streaming(&utt.network, cfg, backend, tokenizer)?;
            let failures = run.lm_failures();
            (run.transcript, run.counters, failures)
        }
        FusionMode::Frame => {
            let out = shallow_fusion_decode(&utt.network, cfg, backend, tokenizer)?;
            (out.text, out.counters, out.lm_failures)
        }
    };
    Ok(UtteranceResult {
        wer: text_wer(&utt.reference, &hypothesis),
        hypothesis,
        counters,
        lm_failures,
        segment_seconds,
    })
}

/// Decodes every utterance and pools errors and counters.
pub fn evaluate_corpus(corpus: &Corpus, cfg: &FusionConfig, backend: &dyn LmBackend) -> Result<CorpusEvaluation> {
    cfg.validate()?;
    let utterances: Vec<UtteranceResult> = corpus
        .utterances
        .par_iter()
        .map(|u| evaluate_utterance(u, cfg, backend, &corpus.tokenizer))
        .collect::<Result<_>>()?;
    let mut wer = WerBreakdown::default();
    let mut counters = CostCounters::default();
    let mut lm_failures = 0;
    for u in &utterances {
        wer += u.wer;
        counters.accumulate(&u.counters);
        lm_failures += u.lm_failures;
    }
    Ok(CorpusEvaluation {
        wer,
        counters,
        lm_failures,
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn oracle_picks_best_per_segment() {
        let reference = words("a b c d");
        let segments = vec![
            vec![words("a x"), words("a b")],
            vec![words("c"), words("c d")],
        ];
        assert_eq!(oracle_errors(&reference, &segments), 0);
        let segments = vec![vec![words("a x")], vec![words("c")]];
        assert_eq!(oracle_errors(&reference, &segments), 2);
    }

    #[test]
    fn oracle_matches_plain_wer_for_one_choice() {
        let reference = words("a b c d e");
        let hyp = words("a c c e f g");
        let plain = super::super::wer::wer(&reference, &hyp).errors();
        assert_eq!(oracle_errors(&reference, &[vec![hyp]]), plain);
    }

    #[test]
    fn oracle_edge_cases() {
        let reference = words("a b");
        assert_eq!(oracle_errors(&reference, &[]), 2);
        assert_eq!(oracle_errors(&reference, &[vec![vec![]], vec![words("a b")]]), 0);
        assert_eq!(oracle_errors::<String>(&[], &[vec![words("x y")]]), 2);
    }
}
