//! Root-embedding pretraining: skip-gram with negative sampling over the
//! root sequence of each sentence.
//!
//! The classic recipe: dynamic context spans (uniform 1..=window per center
//! word), `count^0.75` unigram negative sampling, frequent-word
//! subsampling, a linearly decaying learning rate with a small floor, input
//! vectors initialized uniformly in `±0.5/dim`, output vectors at zero. The
//! input vectors are what gets exported.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Sentence;
use crate::linalg;
use crate::scalar::Scalar;

/// Learning-rate floor of the linear decay.
pub const LR_FLOOR: f64 = 1e-4;

/// Knobs of the skip-gram run.
#[derive(Debug, Clone)]
pub struct SkipgramOptions {
    pub dim: usize,
    /// Maximum context span; each center word draws a span in `1..=this`.
    pub context_window: usize,
    /// Negative samples per center-context pair.
    pub negatives: usize,
    pub epochs: usize,
    pub start_lr: f64,
    /// Frequent-word subsampling threshold; `0.0` disables subsampling.
    pub subsample_threshold: f64,
    /// Words seen fewer times than this are dropped from the stream.
    pub min_count: u64,
    pub seed: u64,
}

impl Default for SkipgramOptions {
    fn default() -> Self {
        SkipgramOptions {
            dim: 50,
            context_window: 5,
            negatives: 5,
            epochs: 5,
            start_lr: 0.025,
            subsample_threshold: 1e-4,
            min_count: 5,
            seed: 42,
        }
    }
}

impl SkipgramOptions {
    pub fn validate(&self) -> Result<(), PretrainError> {
        for (name, v) in [
            ("dim", self.dim),
            ("context_window", self.context_window),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(PretrainError::InvalidOptions(format!(
                    "{name} must be positive"
                )));
            }
        }
        if !(self.start_lr.is_finite() && self.start_lr > 0.0) {
            return Err(PretrainError::InvalidOptions(
                "start_lr must be positive".into(),
            ));
        }
        if !(self.subsample_threshold.is_finite() && self.subsample_threshold >= 0.0) {
            return Err(PretrainError::InvalidOptions(
                "subsample_threshold must be non-negative".into(),
            ));
        }
        if self.min_count == 0 {
            return Err(PretrainError::InvalidOptions(
                "min_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Errors from pretraining and embedding file handling.
#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("invalid pretraining option: {0}")]
    InvalidOptions(String),
    #[error("no sentences to pretrain on")]
    EmptyStream,
    #[error("no root occurs at least {min_count} times")]
    NoVocabulary { min_count: u64 },
    #[error("no co-occurrence pairs (every sentence reduced to one word or less)")]
    NoPairs,
    #[error("embedding file line {line}: {msg}")]
    MalformedFile { line: usize, msg: String },
    #[error("duplicate root {0:?} in embeddings")]
    DuplicateRoot(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn file_err(line: usize, msg: impl Into<String>) -> PretrainError {
    PretrainError::MalformedFile {
        line,
        msg: msg.into(),
    }
}

/// Pretrained vectors keyed by root string.
#[derive(Debug, Clone, PartialEq)]
pub struct RootEmbeddings<F> {
    dim: usize,
    pairs: Vec<(String, Vec<F>)>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> RootEmbeddings<F> {
    pub fn from_pairs(
        dim: usize,
        pairs: Vec<(String, Vec<F>)>,
    ) -> Result<RootEmbeddings<F>, PretrainError> {
        let mut index = HashMap::with_capacity(pairs.len());
        for (i, (root, v)) in pairs.iter().enumerate() {
            if v.len() != dim {
                return Err(PretrainError::DimMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if index.insert(root.clone(), i).is_some() {
                return Err(PretrainError::DuplicateRoot(root.clone()));
            }
        }
        Ok(RootEmbeddings { dim, pairs, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, root: &str) -> Option<&[F]> {
        self.index.get(root).map(|&i| self.pairs[i].1.as_slice())
    }

    /// `(root, vector)` pairs in vocabulary order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[F])> + Clone + '_ {
        self.pairs.iter().map(|(r, v)| (r.as_str(), v.as_slice()))
    }

    /// The `k` nearest roots to `root` by cosine similarity, best first.
    pub fn nearest(&self, root: &str, k: usize) -> Option<Vec<(&str, f64)>> {
        let query = self.get(root)?;
        let mut scored: Vec<(&str, f64)> = self
            .iter()
            .filter(|(r, _)| *r != root)
            .map(|(r, v)| (r, linalg::cosine(query, v).to_f64()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        scored.truncate(k);
        Some(scored)
    }

    /// Text form: a `<count> <dim>` header line, then one `<root> <v...>`
    /// line per root. Values round-trip exactly through this form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.pairs.len(), self.dim).unwrap();
        for (root, v) in &self.pairs {
            out.push_str(root);
            for &x in v {
                write!(out, " {}", x.to_f64()).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<RootEmbeddings<F>, PretrainError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| file_err(1, "missing header"))?;
        let mut h = header.split_whitespace();
        let count: usize = h
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| file_err(1, "header must be `<count> <dim>`"))?;
        let dim: usize = h
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| file_err(1, "header must be `<count> <dim>`"))?;
        if h.next().is_some() {
            return Err(file_err(1, "header must be `<count> <dim>`"));
        }
        let mut pairs = Vec::with_capacity(count);
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let root = fields.next().expect("non-blank line has a first field");
            let v: Vec<F> = fields
                .map(|s| {
                    s.parse::<f64>()
                        .map(F::from_f64)
                        .map_err(|_| file_err(lineno, format!("bad float {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            if v.len() != dim {
                return Err(file_err(
                    lineno,
                    format!("expected {dim} values, found {}", v.len()),
                ));
            }
            pairs.push((root.to_string(), v));
        }
        if pairs.len() != count {
            return Err(file_err(
                1,
                format!("header says {count} roots, found {}", pairs.len()),
            ));
        }
        RootEmbeddings::from_pairs(dim, pairs)
    }

    pub fn write(&self, path: &Path) -> Result<(), PretrainError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<RootEmbeddings<F>, PretrainError> {
        let text = std::fs::read_to_string(path)?;
        RootEmbeddings::parse(&text)
    }
}

/// Per-epoch mean losses, plus the same stream's loss under the untouched
/// initial vectors for comparison.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub vocab_size: usize,
    pub pairs_per_epoch: u64,
}

/// One root sequence per sentence: the gold candidate's root where labeled,
/// the first candidate's otherwise.
pub fn extract_roots(sentences: &[Sentence]) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| t.gold().unwrap_or(&t.candidates[0]).root.clone())
                .collect()
        })
        .collect()
}

struct Corpus {
    words: Vec<String>,
    counts: Vec<u64>,
    /// Streams with out-of-vocabulary words already dropped.
    streams: Vec<Vec<usize>>,
    /// Total in-vocabulary tokens (sum of `counts`).
    tokens: u64,
    /// Cumulative `count^0.75` mass for negative sampling.
    cumulative: Vec<f64>,
}

fn build_corpus(streams: &[Vec<String>], min_count: u64) -> Result<Corpus, PretrainError> {
    if streams.iter().all(|s| s.is_empty()) {
        return Err(PretrainError::EmptyStream);
    }
    let mut order: Vec<String> = Vec::new();
    let mut raw_counts: HashMap<&str, u64> = HashMap::new();
    for s in streams {
        for w in s {
            let c = raw_counts.entry(w).or_insert(0);
            if *c == 0 {
                order.push(w.clone());
            }
            *c += 1;
        }
    }
    let mut words = Vec::new();
    let mut counts = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for w in &order {
        let c = raw_counts[w.as_str()];
        if c >= min_count {
            index.insert(w, words.len());
            words.push(w.clone());
            counts.push(c);
        }
    }
    if words.is_empty() {
        return Err(PretrainError::NoVocabulary { min_count });
    }
    let kept: Vec<Vec<usize>> = streams
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|w| index.get(w.as_str()).copied())
                .collect()
        })
        .collect();
    let tokens = counts.iter().sum();
    let mut cumulative = Vec::with_capacity(counts.len());
    let mut mass = 0.0;
    for &c in &counts {
        mass += (c as f64).powf(0.75);
        cumulative.push(mass);
    }
    Ok(Corpus {
        words,
        counts,
        streams: kept,
        tokens,
        cumulative,
    })
}

fn sample_negative(cumulative: &[f64], rng: &mut impl Rng) -> usize {
    let mass = *cumulative.last().expect("non-empty vocabulary");
    let r = rng.gen::<f64>() * mass;
    cumulative
        .partition_point(|&c| c <= r)
        .min(cumulative.len() - 1)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs one epoch over the corpus. `update` selects between training and a
/// read-only loss measurement; both consume randomness identically, so the
/// measurement replays exactly the pair stream an update pass would see.
#[allow(clippy::too_many_arguments)]
fn run_epoch<F: Scalar>(
    corpus: &Corpus,
    opts: &SkipgramOptions,
    input: &mut [F],
    output: &mut [F],
    rng: &mut ChaCha8Rng,
    processed_before: u64,
    total_tokens: u64,
    update: bool,
) -> (f64, u64) {
    let dim = opts.dim;
    let mut loss_sum = 0.0f64;
    let mut pair_count = 0u64;
    let mut processed = processed_before;
    let mut neu1e = vec![F::zero(); dim];
    for stream in &corpus.streams {
        // Subsample frequent words; `0.0` keeps everything and draws nothing.
        let sen: Vec<usize> = if opts.subsample_threshold > 0.0 {
            stream
                .iter()
                .copied()
                .filter(|&w| {
                    let f_rel = corpus.counts[w] as f64 / corpus.tokens as f64;
                    let t = opts.subsample_threshold;
                    let keep = ((f_rel / t).sqrt() + 1.0) * t / f_rel;
                    rng.gen::<f64>() < keep
                })
                .collect()
        } else {
            stream.clone()
        };
        for c in 0..sen.len() {
            processed += 1;
            let lr = (opts.start_lr * (1.0 - processed as f64 / total_tokens as f64)).max(LR_FLOOR);
            let span = rng.gen_range(1..=opts.context_window);
            let lo = c.saturating_sub(span);
            let hi = (c + span).min(sen.len().saturating_sub(1));
            for j in lo..=hi {
                if j == c {
                    continue;
                }
                let center = sen[c];
                let context = sen[j];
                pair_count += 1;
                neu1e.iter_mut().for_each(|x| *x = F::zero());
                let v_off = center * dim;
                // Positive target plus sampled negatives; draws hitting the
                // true context are consumed but skipped.
                for d in 0..=opts.negatives {
                    let (target, label) = if d == 0 {
                        (context, 1.0f64)
                    } else {
                        let t = sample_negative(&corpus.cumulative, rng);
                        if t == context {
                            continue;
                        }
                        (t, 0.0f64)
                    };
                    let u_off = target * dim;
                    let mut dot = 0.0f64;
                    for k in 0..dim {
                        dot += input[v_off + k].to_f64() * output[u_off + k].to_f64();
                    }
                    let f = sigmoid(dot);
                    loss_sum -= if label == 1.0 { f.ln() } else { (1.0 - f).ln() };
                    if update {
                        let g = F::from_f64((label - f) * lr);
                        for k in 0..dim {
                            neu1e[k] += g * output[u_off + k];
                            output[u_off + k] += g * input[v_off + k];
                        }
                    }
                }
                if update {
                    for k in 0..dim {
                        input[v_off + k] += neu1e[k];
                    }
                }
            }
        }
    }
    (loss_sum / pair_count.max(1) as f64, pair_count)
}

/// Fits skip-gram vectors over root streams. Deterministic for a fixed
/// seed: initialization draws from `seed`, epoch `e` from `seed + e`.
pub fn train_skipgram<F: Scalar>(
    streams: &[Vec<String>],
    opts: &SkipgramOptions,
) -> Result<(RootEmbeddings<F>, PretrainReport), PretrainError> {
    opts.validate()?;
    let corpus = build_corpus(streams, opts.min_count)?;
    let dim = opts.dim;
    let vocab = corpus.words.len();

    let mut init_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut input: Vec<F> = (0..vocab * dim)
        .map(|_| F::from_f64((init_rng.gen::<f64>() - 0.5) / dim as f64))
        .collect();
    let mut output = vec![F::zero(); vocab * dim];

    let total_tokens = corpus.tokens * opts.epochs as u64;

    // Measure the starting loss on exactly the pair stream epoch 1 will see.
    let (initial_loss, pairs) = {
        let mut frozen_in = input.clone();
        let mut frozen_out = output.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
        run_epoch(
            &corpus,
            opts,
            &mut frozen_in,
            &mut frozen_out,
            &mut rng,
            0,
            total_tokens,
            false,
        )
    };
    if pairs == 0 {
        return Err(PretrainError::NoPairs);
    }

    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut processed = 0u64;
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(epoch as u64));
        let (loss, _) = run_epoch(
            &corpus,
            opts,
            &mut input,
            &mut output,
            &mut rng,
            processed,
            total_tokens,
            true,
        );
        processed += corpus.tokens;
        epoch_losses.push(loss);
    }

    let pairs_out: Vec<(String, Vec<F>)> = corpus
        .words
        .iter()
        .enumerate()
        .map(|(w, root)| (root.clone(), input[w * dim..(w + 1) * dim].to_vec()))
        .collect();
    let emb = RootEmbeddings::from_pairs(dim, pairs_out)?;
    Ok((
        emb,
        PretrainReport {
            initial_loss,
            epoch_losses,
            vocab_size: vocab,
            pairs_per_epoch: pairs,
        },
    ))
}
