//! Add-k smoothed n-gram model used as the in-process scoring backend.
//!
//! Each context distribution is `(c(ctx, w) + k) / (c(ctx) + k * V)` over the
//! full piece inventory. A context never observed in training falls back to
//! the longest observed suffix of itself, down to the unigram distribution,
//! so every conditional stays normalized.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LmBackend, LmError, ScoreRequest, ScoreResponse};
use crate::error::{Error, Result};
use crate::lattice::TokenId;
use crate::tokenization::{Tokenizer, VocabFile};

/// Sentence-start padding symbol; never predicted.
pub const BOS_ID: TokenId = TokenId::MAX;
pub const NGRAM_FORMAT: &str = "latfuse-ngram v1";

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    k: f64,
    tokenizer: Tokenizer,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// Trains an add-`k` model of the given order on whitespace-tokenized texts.
///
/// An empty corpus yields the uniform distribution.
pub fn train_ngram<S: AsRef<str>>(
    corpus: &[S],
    order: usize,
    k: f64,
    tokenizer: Tokenizer,
) -> Result<NGramModel> {
    let mut model = NGramModel::empty(order, k, tokenizer)?;
    for text in corpus {
        let tokens = model.tokenizer.tokenize(text.as_ref());
        model.add_sequence(&tokens);
    }
    Ok(model)
}

impl NGramModel {
    pub const DEFAULT_ORDER: usize = 3;
    pub const DEFAULT_K: f64 = 0.1;

    fn empty(order: usize, k: f64, tokenizer: Tokenizer) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("add-k constant must be > 0, got {k}")));
        }
        if tokenizer.blank_id().is_some() {
            return Err(Error::Config(
                "n-gram tokenizer must not contain a CTC blank".into(),
            ));
        }
        Ok(Self {
            order,
            k,
            tokenizer,
            counts: HashMap::new(),
        })
    }

    fn add_sequence(&mut self, tokens: &[TokenId]) {
        let mut history = vec![BOS_ID; self.order - 1];
        for &tok in tokens {
            for m in 0..self.order {
                let ctx = history[history.len() - m..].to_vec();
                let entry = self.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(tok).or_default() += 1;
            }
            history.push(tok);
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.len()
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// The conditioning history for the first token after `prefix_tokens`.
    pub fn initial_history(&self, prefix_tokens: &[TokenId]) -> Vec<TokenId> {
        let mut history = vec![BOS_ID; self.order - 1];
        history.extend_from_slice(prefix_tokens);
        let keep = self.order - 1;
        history.split_off(history.len() - keep)
    }

    /// `p(token | history)` where only the last `order - 1` history items count.
    pub fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab_size() as f64;
        let usable = history.len().min(self.order - 1);
        for m in (0..=usable).rev() {
            let ctx = &history[history.len() - m..];
            if let Some(c) = self.counts.get(ctx) {
                if c.total > 0 {
                    let n = c.next.get(&token).copied().unwrap_or(0) as f64;
                    return (n + self.k) / (c.total as f64 + self.k * v);
                }
            }
        }
        1.0 / v
    }

    pub fn log_prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        self.prob(history, token).ln()
    }

    /// Teacher-forced log-probability of `suffix` after `prefix`, plus its token count.
    pub fn score_text(&self, prefix: &str, suffix: &str) -> (f64, usize) {
        let prefix_tokens = self.tokenizer.tokenize(prefix);
        let suffix_tokens = self.tokenizer.tokenize(suffix);
        (self.score_tokens(&prefix_tokens, &suffix_tokens), suffix_tokens.len())
    }

    pub fn score_tokens(&self, prefix: &[TokenId], suffix: &[TokenId]) -> f64 {
        let mut history = self.initial_history(prefix);
        let mut total = 0.0;
        for &tok in suffix {
            total += self.log_prob(&history, tok);
            history.push(tok);
            if history.len() >= self.order {
                history.remove(0);
            }
        }
        total
    }

    /// Draws `len` tokens continuing `history`, never drawing ids in `exclude`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        len: usize,
        exclude: &[TokenId],
    ) -> Vec<TokenId> {
        let mut history = self.initial_history(&[]);
        let mut out = Vec::with_capacity(len);
        let v = self.vocab_size() as TokenId;
        for _ in 0..len {
            let weights: Vec<f64> = (0..v)
                .map(|w| {
                    if exclude.contains(&w) {
                        0.0
                    } else {
                        self.prob(&history, w)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as TokenId;
            for (w, &p) in weights.iter().enumerate() {
                if u < p {
                    pick = w as TokenId;
                    break;
                }
                u -= p;
            }
            out.push(pick);
            history.push(pick);
            if history.len() >= self.order {
                history.remove(0);
            }
        }
        out
    }

    pub fn to_file(&self) -> NGramModelFile {
        let mut counts: Vec<ContextEntry> = self
            .counts
            .iter()
            .map(|(ctx, c)| {
                let mut next: Vec<(TokenId, u64)> = c.next.iter().map(|(&w, &n)| (w, n)).collect();
                next.sort_unstable();
                ContextEntry {
                    context: ctx.iter().map(|&id| encode_id(id)).collect(),
                    next,
                }
            })
            .collect();
        counts.sort_by(|a, b| a.context.cmp(&b.context));
        NGramModelFile {
            format: NGRAM_FORMAT.to_string(),
            order: self.order,
            k: self.k,
            vocab: self.tokenizer.to_vocab_file(),
            counts,
        }
    }

    pub fn from_file(file: NGramModelFile) -> Result<Self> {
        if file.format != NGRAM_FORMAT {
            return Err(Error::Format(format!(
                "unsupported n-gram format {:?}",
                file.format
            )));
        }
        let tokenizer = Tokenizer::from_vocab_file(&file.vocab)?;
        let v = tokenizer.len() as TokenId;
        let mut model = Self::empty(file.order, file.k, tokenizer)?;
        for entry in file.counts {
            if entry.context.len() >= model.order {
                return Err(Error::Format(format!(
                    "context of length {} in an order-{} model",
                    entry.context.len(),
                    model.order
                )));
            }
            let ctx = entry
                .context
                .iter()
                .map(|&i| decode_id(i, v))
                .collect::<Result<Vec<_>>>()?;
            let mut c = ContextCounts::default();
            for (w, n) in entry.next {
                if w >= v {
                    return Err(Error::InvalidLabel {
                        label: w,
                        vocab_size: v as usize,
                    });
                }
                c.total += n;
                *c.next.entry(w).or_default() += n;
            }
            model.counts.insert(ctx, c);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, &self.to_file())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: NGramModelFile =
            serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))?;
        Self::from_file(file)
    }
}

fn encode_id(id: TokenId) -> i64 {
    if id == BOS_ID {
        -1
    } else {
        id as i64
    }
}

fn decode_id(raw: i64, vocab_size: TokenId) -> Result<TokenId> {
    match raw {
        -1 => Ok(BOS_ID),
        n if n >= 0 && n < vocab_size as i64 => Ok(n as TokenId),
        n => Err(Error::Format(format!("context id {n} out of range"))),
    }
}

/// JSON model file: order, add-k constant, vocabulary and count tables.
///
/// Contexts are lists of piece ids with `-1` standing for sentence-start
/// padding; `next` lists `[piece_id, count]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModelFile {
    pub format: String,
    pub order: usize,
    pub k: f64,
    pub vocab: VocabFile,
    pub counts: Vec<ContextEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub context: Vec<i64>,
    pub next: Vec<(TokenId, u64)>,
}

impl LmBackend for NGramModel {
    fn score_suffixes(&self, req: &ScoreRequest) -> Result<ScoreResponse, LmError> {
        req.validate()?;
        let prefix = self.tokenizer.tokenize(&req.prefix);
        let mut log_probs = Vec::with_capacity(req.suffixes.len());
        let mut token_counts = Vec::with_capacity(req.suffixes.len());
        for suffix in &req.suffixes {
            let tokens = self.tokenizer.tokenize(suffix);
            log_probs.push(self.score_tokens(&prefix, &tokens));
            token_counts.push(tokens.len());
        }
        Ok(ScoreResponse {
            log_probs,
            token_counts,
        })
    }

    fn tokenizer(&self) -> Option<&Tokenizer> {
        Some(&self.tokenizer)
    }
}
