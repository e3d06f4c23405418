//! Command-line interface. One binary, five subcommands: `train`,
//! `disambiguate`, `evaluate`, `pretrain`, `inspect`.
//!
//! Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage
//! error.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::corpus::{read_corpus, resolve_sentence, ReadMode, Vocabularies};
use crate::decoder::{self, DecodeResult};
use crate::eval;
use crate::linalg;
use crate::model::{Hyper, ModelState};
use crate::morph::{Slot, TagStats, TagsetConfig};
use crate::pretrain::{self, RootEmbeddings, SkipgramOptions};
use crate::storage;
use crate::trainer::{self, TrainOptions};

#[derive(Debug, Parser)]
#[command(
    name = "ayirt",
    version,
    about = "Morphological disambiguation with a window-scoring neural net"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a disambiguation model on a labeled corpus
    Train(TrainArgs),
    /// Pick one analysis per token of an ambiguous corpus
    Disambiguate(DisambiguateArgs),
    /// Score a disambiguated corpus against a gold corpus
    Evaluate(EvaluateArgs),
    /// Pretrain root vectors with skip-gram over root sequences
    Pretrain(PretrainArgs),
    /// Summarize a model or embedding file
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled training corpus (gold analysis first)
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Labeled corpus for per-epoch accuracy and epoch selection
    #[arg(long, value_name = "FILE")]
    dev: Option<PathBuf>,
    /// Where to write the fitted model
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Builtin tagset name (tr, de, fr) or a tagset file path
    #[arg(
        long,
        value_name = "NAME|FILE",
        default_value = "tr",
        conflicts_with = "model"
    )]
    tagset: String,
    /// Warm-start from an existing model; its shape, vocabulary, and tagset
    /// replace the corresponding flags
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Pretrained root vectors to seed the root embedding with
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// With --model and --embeddings: confirm replacing the loaded model's
    /// root vectors while keeping its other parameters
    #[arg(long, requires = "model", requires = "embeddings")]
    keep_params: bool,
    /// Scoring window length in words [default: 5]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    window: Option<usize>,
    /// Root embedding width [default: 50]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    root_dim: Option<usize>,
    /// POS embedding width [default: 20]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    pos_dim: Option<usize>,
    /// Width of the remaining feature embeddings [default: 5]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    feat_dim: Option<usize>,
    /// Word-layer width [default: 30]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    h1: Option<usize>,
    /// Window-layer width [default: 40]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    h2: Option<usize>,
    /// Roots seen fewer times than this resolve to UNK [default: 2]
    #[arg(long, value_name = "N", conflicts_with = "model")]
    min_root_count: Option<u64>,
    /// AdaGrad learning rate [default: 0.05]
    #[arg(long, value_name = "X")]
    lr: Option<f64>,
    /// Training epochs
    #[arg(long, value_name = "N", default_value_t = 10)]
    epochs: usize,
    /// Most negative windows kept per position
    #[arg(long, value_name = "N", default_value_t = 20)]
    neg_cap: usize,
    /// Seed for initialization, shuffling, masking, and sampling
    #[arg(long, value_name = "N", default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DisambiguateArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Corpus to disambiguate
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output corpus (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Input is labeled gold-first: report ambiguous-token agreement on stderr
    #[arg(long)]
    gold_marker: bool,
    /// Sentences decoded in parallel (0 = all cores)
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("config").required(true).args(["model", "tagset"])))]
struct EvaluateArgs {
    /// Gold corpus (labeled, gold analysis first)
    #[arg(long, value_name = "FILE")]
    dev: PathBuf,
    /// Disambiguated corpus to score
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Read the tagset from a model file
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Builtin tagset name (tr, de, fr) or a tagset file path
    #[arg(long, value_name = "NAME|FILE")]
    tagset: Option<String>,
    /// Also write the metrics as JSON
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Corpus supplying root sequences (gold analysis first when labeled)
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Where to write the root vectors
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Builtin tagset name (tr, de, fr) or a tagset file path
    #[arg(long, value_name = "NAME|FILE", default_value = "tr")]
    tagset: String,
    /// Maximum context span
    #[arg(long, value_name = "N", default_value_t = 5)]
    window: usize,
    /// Vector width (match the model's --root-dim)
    #[arg(long, value_name = "N", default_value_t = 50)]
    root_dim: usize,
    /// Negative samples per pair
    #[arg(long, value_name = "N", default_value_t = 5)]
    neg_cap: usize,
    /// Drop roots seen fewer times than this
    #[arg(long, value_name = "N", default_value_t = 5)]
    min_root_count: u64,
    /// Starting learning rate
    #[arg(long, value_name = "X", default_value_t = 0.025)]
    lr: f64,
    /// Passes over the corpus
    #[arg(long, value_name = "N", default_value_t = 5)]
    epochs: usize,
    /// Seed for initialization and sampling
    #[arg(long, value_name = "N", default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "embeddings"])))]
struct InspectArgs {
    /// Model file to summarize
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Embedding file to summarize
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Root whose nearest neighbors (by cosine) to list
    #[arg(value_name = "ROOT")]
    query: Option<String>,
}

/// A post-parse usage error; exits with code 2 like clap's own.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses arguments, runs the subcommand, and reports errors on stderr.
/// Returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Disambiguate(a) => cmd_disambiguate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// `tr`, `de`, and `fr` name builtin tagsets; anything else is a file path.
fn load_tagset(spec: &str) -> Result<TagsetConfig> {
    match TagsetConfig::builtin(spec) {
        Some(cfg) => Ok(cfg),
        None => TagsetConfig::from_file(Path::new(spec))
            .with_context(|| format!("reading tagset {spec:?}")),
    }
}

fn read(path: &Path, mode: ReadMode, cfg: &TagsetConfig) -> Result<Vec<crate::corpus::Sentence>> {
    read_corpus(path, mode, cfg).with_context(|| format!("reading corpus {}", path.display()))
}

fn report_ignored(stats: &TagStats) {
    let total = stats.total_ignored();
    if total > 0 {
        eprintln!(
            "note: {total} tag occurrences across {} distinct tags are outside the tagset and were ignored",
            stats.ignored.len()
        );
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    if a.model.is_some() && a.embeddings.is_some() && !a.keep_params {
        return Err(UsageError(
            "--embeddings with --model replaces the loaded model's root vectors; \
             pass --keep-params to confirm keeping the rest"
                .into(),
        )
        .into());
    }

    let loaded = match &a.model {
        Some(p) => Some(
            storage::load_model::<f64>(p)
                .with_context(|| format!("loading model {}", p.display()))?,
        ),
        None => None,
    };
    let cfg = match &loaded {
        Some(l) => l.tagset.clone(),
        None => load_tagset(&a.tagset)?,
    };
    let train_sentences = read(&a.train, ReadMode::Train, &cfg)?;
    let mut stats = TagStats::default();
    let (mut state, vocab) = match loaded {
        Some(l) => (l.state, l.vocab),
        None => {
            let vocab = Vocabularies::build(
                &train_sentences,
                &cfg,
                a.min_root_count.unwrap_or(2),
                &mut stats,
            )?;
            let hyper = Hyper {
                window_len: a.window.unwrap_or(5),
                root_dim: a.root_dim.unwrap_or(50),
                pos_dim: a.pos_dim.unwrap_or(20),
                feat_dim: a.feat_dim.unwrap_or(5),
                h1: a.h1.unwrap_or(30),
                h2: a.h2.unwrap_or(40),
                learning_rate: a.lr.unwrap_or(0.05),
                seed: a.seed,
                ..Hyper::default()
            };
            (ModelState::init(hyper, &cfg, &vocab)?, vocab)
        }
    };
    if let Some(lr) = a.lr {
        state.set_learning_rate(lr)?;
    }

    if let Some(p) = &a.embeddings {
        let emb = RootEmbeddings::<f64>::read(p)
            .with_context(|| format!("reading embeddings {}", p.display()))?;
        let seeded = state.set_pretrained_roots(&vocab, emb.iter())?;
        eprintln!(
            "seeded {seeded} of {} root vectors",
            vocab.table(Slot::Root).len()
        );
    }

    let train_resolved: Vec<_> = train_sentences
        .iter()
        .map(|s| resolve_sentence(s, &cfg, &vocab, &mut stats))
        .collect();
    let dev_resolved = match &a.dev {
        Some(p) => Some(
            read(p, ReadMode::Eval, &cfg)?
                .iter()
                .map(|s| resolve_sentence(s, &cfg, &vocab, &mut stats))
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    report_ignored(&stats);

    let opts = TrainOptions {
        epochs: a.epochs,
        neg_cap: a.neg_cap,
        shuffle_seed: a.seed,
        ..TrainOptions::default()
    };
    let report = trainer::train(
        &mut state,
        &train_resolved,
        dev_resolved.as_deref(),
        &vocab,
        &opts,
    )?;
    print!("{}", report.lines());
    if let Some(best) = report.best_epoch {
        eprintln!("kept weights from epoch {best}");
    }

    let mut report_path = a.out.clone().into_os_string();
    report_path.push(".report.json");
    std::fs::write(
        PathBuf::from(report_path),
        serde_json::to_string_pretty(&report)?,
    )?;
    storage::save_model(&a.out, &state, &vocab, &cfg)
        .with_context(|| format!("writing model {}", a.out.display()))?;
    Ok(())
}

fn cmd_disambiguate(a: DisambiguateArgs) -> Result<()> {
    let loaded = storage::load_model::<f64>(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let mode = if a.gold_marker {
        ReadMode::Eval
    } else {
        ReadMode::Decode
    };
    let sentences = read(&a.input, mode, &loaded.tagset)?;
    let mut stats = TagStats::default();
    let resolved: Vec<_> = sentences
        .iter()
        .map(|s| resolve_sentence(s, &loaded.tagset, &loaded.vocab, &mut stats))
        .collect();
    report_ignored(&stats);

    let results: Vec<DecodeResult<f64>> = if a.jobs == 1 {
        resolved
            .iter()
            .map(|r| decoder::viterbi(r, &loaded.state))
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()?;
        pool.install(|| {
            resolved
                .par_iter()
                .map(|r| decoder::viterbi(r, &loaded.state))
                .collect::<Result<_, _>>()
        })?
    };

    let mut out = String::new();
    for (s, r) in sentences.iter().zip(&results) {
        out.push_str("<S>\n");
        for (t, &c) in s.tokens.iter().zip(&r.choices) {
            writeln!(out, "{}\t{}", t.surface, t.candidates[c].raw).unwrap();
        }
        out.push_str("</S>\n");
    }
    match &a.out {
        Some(p) => {
            std::fs::write(p, out).with_context(|| format!("writing output {}", p.display()))?
        }
        None => print!("{out}"),
    }

    if a.gold_marker {
        let (mut correct, mut total) = (0u64, 0u64);
        for (s, r) in sentences.iter().zip(&results) {
            for (i, t) in s.tokens.iter().enumerate() {
                if t.is_ambiguous() {
                    total += 1;
                    if Some(r.choices[i]) == t.gold_index {
                        correct += 1;
                    }
                }
            }
        }
        if total > 0 {
            eprintln!(
                "ambiguous agreement: {correct}/{total} = {:.4}",
                correct as f64 / total as f64
            );
        } else {
            eprintln!("ambiguous agreement: n/a (no ambiguous tokens)");
        }
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = match (&a.model, &a.tagset) {
        (Some(p), _) => {
            storage::load_model::<f64>(p)
                .with_context(|| format!("loading model {}", p.display()))?
                .tagset
        }
        (None, Some(spec)) => load_tagset(spec)?,
        (None, None) => unreachable!("clap enforces the config group"),
    };
    let gold = read(&a.dev, ReadMode::Eval, &cfg)?;
    let decoded = read(&a.input, ReadMode::Decode, &cfg)?;
    let metrics = eval::evaluate_files(&gold, &decoded, &cfg)?;
    print!("{}", metrics.render_table());
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&metrics.to_json())?)
            .with_context(|| format!("writing metrics {}", p.display()))?;
    }
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let cfg = load_tagset(&a.tagset)?;
    let sentences = read(&a.train, ReadMode::Train, &cfg)?;
    let streams = pretrain::extract_roots(&sentences);
    let opts = SkipgramOptions {
        dim: a.root_dim,
        context_window: a.window,
        negatives: a.neg_cap,
        epochs: a.epochs,
        start_lr: a.lr,
        min_count: a.min_root_count,
        seed: a.seed,
        ..SkipgramOptions::default()
    };
    let (emb, report) = pretrain::train_skipgram::<f64>(&streams, &opts)?;
    println!(
        "roots {} pairsPerEpoch {}",
        report.vocab_size, report.pairs_per_epoch
    );
    println!("initial loss {}", report.initial_loss);
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {} loss {}", i + 1, loss);
    }
    emb.write(&a.out)
        .with_context(|| format!("writing embeddings {}", a.out.display()))?;
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    if let Some(p) = &a.model {
        let l = storage::load_model::<f64>(p)
            .with_context(|| format!("loading model {}", p.display()))?;
        let hyper = l.state.hyper();
        println!("language {}", l.tagset.language);
        println!("boundary {}", l.tagset.boundary);
        println!("window {}", hyper.window_len);
        println!("inputDim {}", l.state.input_dim());
        println!("hidden {} {}", hyper.h1, hyper.h2);
        println!("learningRate {}", hyper.learning_rate);
        println!("parameters {}", l.state.num_params());
        println!("fingerprint {:08x}", l.state.vocab_fingerprint());
        for &slot in l.state.slots() {
            println!("vocab {} {}", slot, l.vocab.table(slot).len());
        }
        if let Some(query) = &a.query {
            let table = l.vocab.table(Slot::Root);
            let id = table
                .entries()
                .iter()
                .position(|e| &e.value == query)
                .ok_or_else(|| anyhow::anyhow!("root {query:?} is not in the vocabulary"))?;
            let emb = l
                .state
                .embedding(Slot::Root)
                .expect("root slot is always active");
            let qrow = emb.row(id);
            let mut scored: Vec<(&str, f64)> = table
                .entries()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != id)
                .map(|(i, e)| (e.value.as_str(), linalg::cosine(qrow, emb.row(i))))
                .collect();
            scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(y.0)));
            for (value, cos) in scored.into_iter().take(10) {
                println!("nn {value} {cos}");
            }
        }
    } else if let Some(p) = &a.embeddings {
        let emb = RootEmbeddings::<f64>::read(p)
            .with_context(|| format!("reading embeddings {}", p.display()))?;
        println!("roots {}", emb.len());
        println!("dim {}", emb.dim());
        if let Some(query) = &a.query {
            let nn = emb
                .nearest(query, 10)
                .ok_or_else(|| anyhow::anyhow!("root {query:?} is not in the embeddings"))?;
            for (value, cos) in nn {
                println!("nn {value} {cos}");
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_grammar_is_coherent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn builtin_tagsets_resolve_by_name() {
        assert_eq!(load_tagset("tr").unwrap().language, "tr");
        assert_eq!(load_tagset("de").unwrap().language, "de");
        assert_eq!(load_tagset("fr").unwrap().language, "fr");
        assert!(load_tagset("no-such-file.tagset").is_err());
    }
}
