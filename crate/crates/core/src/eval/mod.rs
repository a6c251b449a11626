//! Word error rate, synthetic corpora, and ablation sweeps.

mod corpus;
mod sweep;
mod synthetic;
mod wer;

pub use corpus::{
    corpus_oracle, evaluate_corpus, evaluate_utterance, oracle_errors, utterance_oracle, Corpus,
    CorpusEvaluation, OracleWer, Utterance, UtteranceResult, REFS_FILE,
};
pub use sweep::{
    attach_baselines, read_sweep_csv, relative_change, run_sweep, write_sweep_csv, SweepGrid, SweepRow,
    SWEEP_CSV_HEADER,
};
pub use synthetic::{
    asr_vocabulary, build_setup, generate_synthetic, generator_model, scorer_model, word_tokenizer,
    SyntheticCorpusSpec, SyntheticSetup, SyntheticSetupConfig, BLANK_TOKEN,
};
pub use wer::{normalize_words, text_wer, wer, WerBreakdown};
