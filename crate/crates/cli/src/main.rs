use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use latfuse_core::eval::{
    build_setup, run_sweep, text_wer, write_sweep_csv, Corpus, SweepGrid, SyntheticSetupConfig, WerBreakdown,
};
use latfuse_core::fusion::{cost_report, decode, FusionConfig, FusionMode};
use latfuse_core::lattice::format::read_cnjl;
use latfuse_core::lattice::Vocabulary;
use latfuse_core::lm::{train_ngram, LmBackend, NGramModel, RemoteBackend, RemoteConfig, ENDPOINT_ENV};
use latfuse_core::segmentation::Segmenter;
use latfuse_core::tokenization::{Tokenizer, VocabFile, DEFAULT_BOUNDARY_MARKER, DEFAULT_UNK};
use serde_json::json;

#[derive(Parser)]
#[command(name = "latfuse", version, about = "Lattice rescoring with language-model fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one CNJL lattice and print the transcript.
    Decode(DecodeArgs),
    /// Run an ablation grid over a corpus and write CSV rows.
    Sweep(SweepArgs),
    /// Word error rate between two line-aligned text files.
    Wer(WerArgs),
    /// Train an n-gram model file from a text corpus.
    TrainNgram(TrainArgs),
    /// Write a synthetic corpus directory and its scoring LM.
    Synthesize(SynthesizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Ngram,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum SegmenterKind {
    Fixed,
    Vad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Segment,
    Frame,
}

#[derive(Args)]
struct LmArgs {
    #[arg(long, value_enum, default_value = "ngram")]
    lm_backend: Backend,
    /// N-gram model file for the ngram backend.
    #[arg(long)]
    lm_model: Option<PathBuf>,
    #[arg(long, env = ENDPOINT_ENV)]
    lm_endpoint: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    lm_timeout_ms: u64,
    /// Vocabulary of the LM; defaults to the ASR vocabulary.
    #[arg(long)]
    lm_vocab: Option<PathBuf>,
}

#[derive(Args)]
struct FusionArgs {
    #[arg(long, value_enum, default_value = "segment")]
    mode: Mode,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 16)]
    nbest: usize,
    /// Previous segment winners used as LM context.
    #[arg(long, default_value_t = 2)]
    context: usize,
    #[arg(long, value_enum, default_value = "fixed")]
    segmenter: SegmenterKind,
    #[arg(long, default_value_t = Segmenter::DEFAULT_SEGMENT_SECONDS)]
    segment_seconds: f64,
    #[arg(long, default_value_t = Segmenter::DEFAULT_VAD_THRESHOLD)]
    vad_threshold: f64,
    #[arg(long, default_value_t = Segmenter::DEFAULT_VAD_MIN_SILENCE_SECONDS)]
    vad_min_silence_seconds: f64,
    #[arg(long, default_value_t = Segmenter::DEFAULT_MAX_SEGMENT_SECONDS)]
    max_segment_seconds: f64,
    #[arg(long, default_value_t = 16)]
    beam_width: usize,
    #[arg(long, default_value_t = 0.9)]
    blank_prune_threshold: f64,
    /// Divide LM scores by their token counts.
    #[arg(long)]
    length_normalize: bool,
}

impl FusionArgs {
    fn config(&self) -> FusionConfig {
        let segmenter = match self.segmenter {
            SegmenterKind::Fixed => Segmenter::fixed(self.segment_seconds),
            SegmenterKind::Vad => Segmenter::Vad {
                threshold: self.vad_threshold,
                min_silence_seconds: self.vad_min_silence_seconds,
                max_segment_seconds: self.max_segment_seconds,
            },
        };
        FusionConfig {
            lambda: self.lambda,
            nbest_size: self.nbest,
            context_segments: self.context,
            segmenter,
            blank_prune_threshold: self.blank_prune_threshold,
            mode: match self.mode {
                Mode::Segment => FusionMode::Segment,
                Mode::Frame => FusionMode::Frame,
            },
            beam_width: self.beam_width,
            length_normalize: self.length_normalize,
            ..FusionConfig::default()
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    lattice: PathBuf,
    #[command(flatten)]
    fusion: FusionArgs,
    #[command(flatten)]
    lm: LmArgs,
    /// Vocabulary file naming the unknown piece and boundary marker of the lattice tokens.
    #[arg(long)]
    asr_vocab: Option<PathBuf>,
    /// Write the full run report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON grid of axes.
    #[arg(long)]
    grid: PathBuf,
    /// Directory of CNJL lattices plus refs.txt.
    #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
    corpus: Option<PathBuf>,
    /// Synthetic setup JSON; its trained scorer is the default LM.
    #[arg(long)]
    synthesize: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lm: LmArgs,
}

#[derive(Args)]
struct WerArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Text file, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = NGramModel::DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = NGramModel::DEFAULT_K)]
    k: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Synthetic setup JSON; defaults apply to missing fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Corpus directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Where to save the trained scoring LM.
    #[arg(long)]
    lm_out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn text_pieces(vocab: &Vocabulary) -> Vec<String> {
    vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i as u32 != vocab.blank_id())
        .map(|(_, p)| p.clone())
        .collect()
}

/// ASR tokenizer over the lattice ids, optionally checked against a vocab file.
fn asr_tokenizer(vocab: &Vocabulary, file: Option<&Path>) -> Result<Tokenizer> {
    let Some(path) = file else {
        return Ok(Tokenizer::from_vocabulary(vocab, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER)?);
    };
    let spec: VocabFile = read_json(path)?;
    let declared: BTreeSet<&str> = spec.pieces.iter().map(String::as_str).filter(|p| *p != spec.unk).collect();
    let lattice_pieces = text_pieces(vocab);
    let actual: BTreeSet<&str> = lattice_pieces.iter().map(String::as_str).filter(|p| *p != spec.unk).collect();
    if declared != actual {
        bail!("{} does not list the lattice's token pieces", path.display());
    }
    Ok(Tokenizer::from_vocabulary(vocab, &spec.unk, &spec.boundary_marker)?)
}

fn build_backend(args: &LmArgs, asr: &Tokenizer, default_model: Option<NGramModel>) -> Result<Box<dyn LmBackend>> {
    let declared = match &args.lm_vocab {
        Some(path) => Some(Tokenizer::load(path).with_context(|| format!("loading {}", path.display()))?),
        None => None,
    };
    match args.lm_backend {
        Backend::Ngram => {
            let model = match (&args.lm_model, default_model) {
                (Some(path), _) => NGramModel::load(path).with_context(|| format!("loading {}", path.display()))?,
                (None, Some(model)) => model,
                (None, None) => bail!("--lm-model is required for the ngram backend"),
            };
            if let Some(tok) = declared {
                if tok.pieces() != model.tokenizer().pieces() {
                    bail!("--lm-vocab does not match the n-gram model's vocabulary");
                }
            }
            Ok(Box::new(model))
        }
        Backend::Remote => {
            let endpoint = args
                .lm_endpoint
                .clone()
                .with_context(|| format!("--lm-endpoint or {ENDPOINT_ENV} is required for the remote backend"))?;
            let mut cfg = RemoteConfig::new(endpoint);
            cfg.timeout = Duration::from_millis(args.lm_timeout_ms);
            let lm_tok = match declared {
                Some(tok) => tok,
                None => {
                    let pieces = asr
                        .pieces()
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| Some(*i as u32) != asr.blank_id() && *i as u32 != asr.unk_id())
                        .map(|(_, p)| p.clone())
                        .collect();
                    let unk = asr.piece(asr.unk_id()).unwrap_or(DEFAULT_UNK);
                    Tokenizer::new(pieces, unk, asr.boundary_marker())?
                }
            };
            Ok(Box::new(RemoteBackend::new(cfg)?.with_tokenizer(lm_tok)))
        }
    }
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let net = read_cnjl(&args.lattice).with_context(|| format!("reading {}", args.lattice.display()))?;
    let asr = asr_tokenizer(net.vocab(), args.asr_vocab.as_deref())?;
    let backend = build_backend(&args.lm, &asr, None)?;
    let cfg = args.fusion.config();
    let report = decode(&net, &cfg, backend.as_ref(), &asr)?;
    println!("{}", report.transcript);
    for seg in report.segments.iter().filter(|s| s.lm_error.is_some()) {
        eprintln!("segment {}: LM failed, kept ASR order: {}", seg.index, seg.lm_error.as_deref().unwrap_or(""));
    }
    if let Some(path) = args.report {
        let cost = cost_report(&report.counters);
        let body = json!({
            "config": cfg,
            "mode": report.mode,
            "transcript": report.transcript,
            "segments": report.segments,
            "counters": report.counters,
            "totals": {
                "segments": report.segments.len(),
                "frames": net.num_frames(),
                "lm_failures": report.lm_failures(),
                "cost_ratio_predicted": cost.predicted_ratio,
            },
        });
        fs::write(&path, serde_json::to_string_pretty(&body)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let grid: SweepGrid = read_json(&args.grid)?;
    let (corpus, default_model) = match (&args.corpus, &args.synthesize) {
        (Some(dir), _) => (Corpus::load(dir).with_context(|| format!("loading corpus {}", dir.display()))?, None),
        (None, Some(spec)) => {
            let setup = build_setup(&read_json::<SyntheticSetupConfig>(spec)?)?;
            (setup.corpus, Some(setup.scorer))
        }
        (None, None) => bail!("either --corpus or --synthesize is required"),
    };
    let backend = build_backend(&args.lm, &corpus.tokenizer, default_model)?;
    let rows = run_sweep(&grid, &corpus, backend.as_ref())?;
    let out = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_sweep_csv(&rows, BufWriter::new(out))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} rows written to {} ({failed} failed)", rows.len(), args.out.display());
    Ok(())
}

fn cmd_wer(args: WerArgs) -> Result<()> {
    let refs = fs::read_to_string(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let hyps = fs::read_to_string(&args.hyp).with_context(|| format!("reading {}", args.hyp.display()))?;
    let (refs, hyps): (Vec<&str>, Vec<&str>) = (refs.lines().collect(), hyps.lines().collect());
    if refs.len() != hyps.len() {
        bail!("{} reference lines but {} hypothesis lines", refs.len(), hyps.len());
    }
    let mut total = WerBreakdown::default();
    for (r, h) in refs.iter().zip(&hyps) {
        total += text_wer(r, h);
    }
    let rate = match total.rate() {
        Some(r) => format!("{:.2}%", 100.0 * r),
        None => "undefined".to_string(),
    };
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "WER {rate} (S={} I={} D={} N={}, {} lines)",
        total.substitutions,
        total.insertions,
        total.deletions,
        total.reference_words,
        refs.len()
    )?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let tok = Tokenizer::load(&args.vocab).with_context(|| format!("loading {}", args.vocab.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let model = train_ngram(&lines, args.order, args.k, tok)?;
    model.save(&args.out)?;
    eprintln!("trained order-{} model on {} lines", args.order, lines.len());
    Ok(())
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<()> {
    let cfg = match &args.spec {
        Some(path) => read_json(path)?,
        None => SyntheticSetupConfig::default(),
    };
    let setup = build_setup(&cfg)?;
    setup.corpus.save(&args.out)?;
    if let Some(path) = &args.lm_out {
        setup.scorer.save(path)?;
    }
    eprintln!("{} utterances written to {}", setup.corpus.len(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Decode(a) => cmd_decode(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Wer(a) => cmd_wer(a),
        Command::TrainNgram(a) => cmd_train(a),
        Command::Synthesize(a) => cmd_synthesize(a),
    }
}
