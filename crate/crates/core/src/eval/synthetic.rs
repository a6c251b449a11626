//! Seeded synthetic corpora: references sampled from an n-gram generator and
//! confusion networks that blur them with controlled acoustic noise.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::lattice::{ConfusionNetwork, TokenId, Vocabulary};
use crate::lm::{train_ngram, NGramModel};
use crate::tokenization::{Tokenizer, DEFAULT_BOUNDARY_MARKER, DEFAULT_UNK};

pub const BLANK_TOKEN: &str = "<blank>";

/// Acoustic side of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub utterance_count: usize,
    /// Inclusive range of reference lengths in words.
    pub min_words: usize,
    pub max_words: usize,
    /// Frames per reference token: one emitting frame, then blanks.
    pub frames_per_token: usize,
    pub frame_duration: f64,
    /// Mean fraction of an emitting frame's mass moved off the true token.
    pub noise_level: f64,
    /// Share of the moved mass that goes to blank.
    pub blank_bias: f64,
    /// Relative spread of the per-frame noise around `noise_level`, in `[0, 1]`.
    pub noise_jitter: f64,
    /// Noise on blank frames, as a fraction of `noise_level`.
    pub blank_frame_noise: f64,
    /// Confusable tokens per word; `0` spreads noise uniformly over every token.
    pub confusion_set_size: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            utterance_count: 120,
            min_words: 8,
            max_words: 16,
            frames_per_token: 4,
            frame_duration: 0.08,
            noise_level: 0.48,
            blank_bias: 0.2,
            noise_jitter: 0.6,
            blank_frame_noise: 0.15,
            confusion_set_size: 3,
            seed: 1,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64, what: &str| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be in [0, 1], got {x}")))
            }
        };
        unit(self.noise_level, "noise_level")?;
        unit(self.blank_bias, "blank_bias")?;
        unit(self.noise_jitter, "noise_jitter")?;
        unit(self.blank_frame_noise, "blank_frame_noise")?;
        if self.frames_per_token == 0 || self.min_words > self.max_words {
            return Err(Error::Config(
                "frames_per_token must be >= 1 and min_words <= max_words".into(),
            ));
        }
        if self.frame_duration.is_nan() || self.frame_duration <= 0.0 {
            return Err(Error::Config("frame_duration must be positive".into()));
        }
        Ok(())
    }
}

/// The ASR vocabulary for a generator: blank first, then its text pieces.
pub fn asr_vocabulary(generator: &NGramModel) -> Result<Vocabulary> {
    let gen_tok = generator.tokenizer();
    let mut tokens = vec![BLANK_TOKEN.to_string()];
    tokens.extend(
        gen_tok
            .pieces()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as TokenId != gen_tok.unk_id())
            .map(|(_, p)| p.clone()),
    );
    Vocabulary::new(tokens, 0)
}

fn exp_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn jittered<R: Rng>(rng: &mut R, level: f64, jitter: f64) -> f64 {
    if level == 0.0 {
        return 0.0;
    }
    (level * (1.0 - jitter + 2.0 * jitter * rng.gen::<f64>())).clamp(0.0, 1.0)
}

/// Samples references from `generator` and renders each as a noisy network.
///
/// An emitting frame keeps `1 - noise` on the true token and spreads the
/// rest over blank (`blank_bias`) and the word's confusion set. Blank frames
/// leak a smaller noise to the word just emitted and its confusables.
pub fn generate_synthetic(spec: &SyntheticCorpusSpec, generator: &NGramModel) -> Result<Corpus> {
    spec.validate()?;
    let vocab = Arc::new(asr_vocabulary(generator)?);
    let tokenizer = Tokenizer::from_vocabulary(&vocab, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER)?;
    let gen_tok = generator.tokenizer();
    let width = vocab.len();
    let words: Vec<TokenId> = (1..width as TokenId).collect();
    if words.is_empty() {
        return Err(Error::Config("generator has no text pieces".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut confusion_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c0f5);
    let confusions: Vec<Vec<TokenId>> = (0..width as TokenId)
        .map(|w| {
            let mut others: Vec<TokenId> = words.iter().copied().filter(|&o| o != w).collect();
            others.shuffle(&mut confusion_rng);
            others.truncate(spec.confusion_set_size);
            others
        })
        .collect();

    let uniform = spec.confusion_set_size == 0;
    let spread = |row: &mut [f64], mass: f64, targets: &[TokenId], rng: &mut ChaCha8Rng| {
        if uniform {
            for &w in &words {
                row[w as usize] += mass / words.len() as f64;
            }
        } else if !targets.is_empty() {
            for (&c, share) in targets.iter().zip(exp_weights(rng, targets.len())) {
                row[c as usize] += mass * share;
            }
        } else {
            row[0] += mass;
        }
    };

    let mut utterances = Vec::with_capacity(spec.utterance_count);
    for _ in 0..spec.utterance_count {
        let len = rng.gen_range(spec.min_words..=spec.max_words);
        let sampled = generator.sample(&mut rng, len, &[gen_tok.unk_id()]);
        let reference = gen_tok.detokenize(&sampled)?;
        let asr_tokens: Vec<TokenId> = sampled
            .iter()
            .map(|&id| {
                let piece = gen_tok.piece(id).expect("sampled id is in the vocabulary");
                vocab.id(piece).expect("ASR vocabulary mirrors the generator")
            })
            .collect();

        let mut rows = Vec::with_capacity(asr_tokens.len() * spec.frames_per_token);
        for &w in &asr_tokens {
            let noise = jittered(&mut rng, spec.noise_level, spec.noise_jitter);
            let mut row = vec![0.0; width];
            row[w as usize] += 1.0 - noise;
            row[0] += noise * spec.blank_bias;
            spread(&mut row, noise * (1.0 - spec.blank_bias), &confusions[w as usize], &mut rng);
            rows.push(normalized(row));

            for _ in 1..spec.frames_per_token {
                let leak = jittered(&mut rng, spec.noise_level * spec.blank_frame_noise, spec.noise_jitter);
                let mut row = vec![0.0; width];
                row[0] += 1.0 - leak;
                if uniform {
                    spread(&mut row, leak, &[], &mut rng);
                } else {
                    row[w as usize] += leak / 2.0;
                    spread(&mut row, leak / 2.0, &confusions[w as usize], &mut rng);
                }
                rows.push(normalized(row));
            }
        }
        let network = ConfusionNetwork::from_probs(Arc::clone(&vocab), spec.frame_duration, rows)?;
        utterances.push(Utterance { reference, network });
    }
    Ok(Corpus {
        vocab,
        tokenizer,
        utterances,
    })
}

fn normalized(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

/// Parameters of the random "true language" and of the LM trained on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSetupConfig {
    pub vocab_size: usize,
    /// Successors each word allows in the underlying chain.
    pub branching: usize,
    /// Sentences drawn from the chain to fit the generator.
    pub chain_sentences: usize,
    pub generator_order: usize,
    pub scorer_order: usize,
    pub scorer_k: f64,
    /// Sentences drawn from the generator to train the scorer.
    pub scorer_sentences: usize,
    /// Seed for the language; the scorer uses a disjoint stream.
    pub language_seed: u64,
    pub corpus: SyntheticCorpusSpec,
}

impl Default for SyntheticSetupConfig {
    fn default() -> Self {
        Self {
            vocab_size: 24,
            branching: 4,
            chain_sentences: 2000,
            generator_order: 2,
            scorer_order: 3,
            scorer_k: NGramModel::DEFAULT_K,
            scorer_sentences: 2000,
            language_seed: 17,
            corpus: SyntheticCorpusSpec::default(),
        }
    }
}

pub struct SyntheticSetup {
    pub generator: NGramModel,
    pub scorer: NGramModel,
    pub corpus: Corpus,
}

/// Word pieces `▁w00`, `▁w01`, ...
pub fn word_tokenizer(vocab_size: usize) -> Result<Tokenizer> {
    let pieces = (0..vocab_size)
        .map(|i| format!("{DEFAULT_BOUNDARY_MARKER}w{i:02}"))
        .collect();
    Tokenizer::new(pieces, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER)
}

/// A sparse random bigram language fitted into an n-gram generator.
pub fn generator_model(cfg: &SyntheticSetupConfig) -> Result<NGramModel> {
    if cfg.vocab_size == 0 || cfg.branching == 0 {
        return Err(Error::Config("vocab_size and branching must be >= 1".into()));
    }
    let tok = word_tokenizer(cfg.vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.language_seed);
    let ids: Vec<usize> = (0..cfg.vocab_size).collect();
    // Row `vocab_size` is the sentence start.
    let chain: Vec<Vec<(usize, f64)>> = (0..=cfg.vocab_size)
        .map(|_| {
            let succ: Vec<usize> = ids
                .choose_multiple(&mut rng, cfg.branching.min(cfg.vocab_size))
                .copied()
                .collect();
            let weights = exp_weights(&mut rng, succ.len());
            succ.into_iter().zip(weights).collect()
        })
        .collect();

    let mut sentences = Vec::with_capacity(cfg.chain_sentences);
    for _ in 0..cfg.chain_sentences {
        let len = rng.gen_range(cfg.corpus.min_words.max(1)..=cfg.corpus.max_words.max(1));
        let mut state = cfg.vocab_size;
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let mut u = rng.gen::<f64>();
            let mut pick = chain[state].last().expect("non-empty successors").0;
            for &(w, p) in &chain[state] {
                if u < p {
                    pick = w;
                    break;
                }
                u -= p;
            }
            words.push(format!("w{pick:02}"));
            state = pick;
        }
        sentences.push(words.join(" "));
    }
    train_ngram(&sentences, cfg.generator_order, 0.01, tok)
}

/// Generator, corpus and an LM trained on a disjoint sample of the generator.
pub fn build_setup(cfg: &SyntheticSetupConfig) -> Result<SyntheticSetup> {
    let generator = generator_model(cfg)?;
    let scorer = scorer_model(cfg, &generator)?;
    let corpus = generate_synthetic(&cfg.corpus, &generator)?;
    Ok(SyntheticSetup {
        generator,
        scorer,
        corpus,
    })
}

pub fn scorer_model(cfg: &SyntheticSetupConfig, generator: &NGramModel) -> Result<NGramModel> {
    let tok = generator.tokenizer();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.language_seed.wrapping_mul(31).wrapping_add(0x51c0));
    let texts = (0..cfg.scorer_sentences)
        .map(|_| {
            let len = rng.gen_range(cfg.corpus.min_words.max(1)..=cfg.corpus.max_words.max(1));
            tok.detokenize(&generator.sample(&mut rng, len, &[tok.unk_id()]))
        })
        .collect::<Result<Vec<_>>>()?;
    train_ngram(&texts, cfg.scorer_order, cfg.scorer_k, tok.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::text_wer;
    use crate::fusion::{asr_only_transcript, FusionConfig};
    use crate::lattice::NORMALIZATION_TOLERANCE;

    fn small() -> SyntheticSetupConfig {
        SyntheticSetupConfig {
            vocab_size: 8,
            chain_sentences: 200,
            scorer_sentences: 200,
            corpus: SyntheticCorpusSpec {
                utterance_count: 6,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = build_setup(&small()).unwrap();
        let b = build_setup(&small()).unwrap();
        for (x, y) in a.corpus.utterances.iter().zip(&b.corpus.utterances) {
            assert_eq!(x.reference, y.reference);
            for t in 0..x.network.num_frames() {
                assert_eq!(x.network.frame(t), y.network.frame(t));
            }
        }
    }

    #[test]
    fn networks_are_valid_and_sized() {
        let setup = build_setup(&small()).unwrap();
        for utt in &setup.corpus.utterances {
            let words = utt.reference.split_whitespace().count();
            assert_eq!(utt.network.num_frames(), words * 4);
            for row in utt.network.frames() {
                let mass: f64 = row.iter().map(|lp| lp.exp()).sum();
                assert!((mass - 1.0).abs() < NORMALIZATION_TOLERANCE);
            }
        }
    }

    #[test]
    fn noiseless_corpus_decodes_exactly() {
        let mut cfg = small();
        cfg.corpus.noise_level = 0.0;
        let setup = build_setup(&cfg).unwrap();
        let fusion = FusionConfig::default();
        for utt in &setup.corpus.utterances {
            let hyp = asr_only_transcript(&utt.network, &fusion, &setup.corpus.tokenizer).unwrap();
            assert_eq!(text_wer(&utt.reference, &hyp).errors(), 0);
        }
    }

    #[test]
    fn full_uniform_noise() {
        let mut cfg = small();
        cfg.corpus.noise_level = 1.0;
        cfg.corpus.noise_jitter = 0.0;
        cfg.corpus.confusion_set_size = 0;
        cfg.corpus.blank_frame_noise = 1.0;
        let setup = build_setup(&cfg).unwrap();
        let net = &setup.corpus.utterances[0].network;
        let n_words = (net.vocab_size() - 1) as f64;
        let emitting = net.frame(0);
        assert!((emitting[0].exp() - cfg.corpus.blank_bias).abs() < 1e-12);
        for lp in &emitting[1..] {
            assert!((lp.exp() - (1.0 - cfg.corpus.blank_bias) / n_words).abs() < 1e-12);
        }
        let blank_frame = net.frame(1);
        for lp in &blank_frame[1..] {
            assert!((lp.exp() - 1.0 / n_words).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SyntheticCorpusSpec { noise_level: 1.5, ..Default::default() };
        assert!(spec.validate().is_err());
        let spec = SyntheticCorpusSpec { min_words: 5, max_words: 2, ..Default::default() };
        assert!(spec.validate().is_err());
    }
}
