//! Fitting loop: turns labeled sentences into scoring windows, applies
//! AdaGrad updates, and tracks dev-set accuracy across epochs.
//!
//! Window scheme, per position `t`: one window for every pair of a previous
//! candidate and a current candidate (the sentence start contributes a
//! single BOS pseudo-candidate), labeled positive exactly when both are
//! gold. Context positions before the pair carry the gold analysis, so each
//! position yields exactly one positive window. Negatives beyond `neg_cap`
//! are sampled uniformly without replacement.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{IdBundle, ResolvedSentence, Vocabularies, RESERVED_IDS, UNK_ID};
use crate::decoder::{self, DecodeError};
use crate::model::{ModelError, ModelState};
use crate::morph::Slot;
use crate::scalar::Scalar;

/// Knobs of the fitting loop (model shape and learning rate live in
/// [`crate::model::Hyper`]).
#[derive(Debug, Clone, Serialize)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Most negative windows kept per position.
    pub neg_cap: usize,
    /// Chance that a root seen exactly once in the vocabulary enters a
    /// window as UNK, so the UNK row gets trained.
    pub singleton_unk_prob: f64,
    /// Seeds the per-epoch order shuffle, negative sampling, and UNK masking.
    pub shuffle_seed: u64,
    /// Evaluate the dev set every this many epochs.
    pub dev_eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            neg_cap: 20,
            singleton_unk_prob: 0.5,
            shuffle_seed: 42,
            dev_eval_every: 1,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidOptions(
                "epochs must be at least 1".into(),
            ));
        }
        if self.dev_eval_every == 0 {
            return Err(TrainError::InvalidOptions(
                "dev_eval_every must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.singleton_unk_prob) {
            return Err(TrainError::InvalidOptions(
                "singleton_unk_prob must be within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Errors from training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training option: {0}")]
    InvalidOptions(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sentence {sentence}: token {position} has no gold analysis")]
    UnlabeledToken { sentence: String, position: usize },
    #[error("epoch {epoch}, sentence {sentence}: loss is not finite")]
    NonFiniteLoss { epoch: usize, sentence: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// One labeled scoring window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowInstance {
    /// Exactly `window_len` bundles, BOS-padded on the left.
    pub bundles: Vec<IdBundle>,
    pub positive: bool,
    /// Sentence position whose incoming transition this window scores.
    pub target_pos: usize,
}

fn gold_indices(resolved: &ResolvedSentence) -> Result<Vec<usize>, TrainError> {
    resolved
        .gold
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.ok_or_else(|| TrainError::UnlabeledToken {
                sentence: resolved.id.clone(),
                position: i,
            })
        })
        .collect()
}

/// All training windows of one sentence, in position order: per position the
/// positive window first, then the (possibly capped) negatives in pair order.
pub fn generate_windows(
    resolved: &ResolvedSentence,
    window_len: usize,
    neg_cap: usize,
    rng: &mut impl Rng,
) -> Result<Vec<WindowInstance>, TrainError> {
    let gold = gold_indices(resolved)?;
    let n = window_len;
    let mut out = Vec::new();
    for t in 0..resolved.candidates.len() {
        let prev_cands = if t == 0 {
            1
        } else {
            resolved.candidates[t - 1].len()
        };
        let cur_cands = resolved.candidates[t].len();
        let mut positive = None;
        let mut negatives = Vec::with_capacity(prev_cands * cur_cands - 1);
        for a in 0..prev_cands {
            for b in 0..cur_cands {
                let mut bundles = Vec::with_capacity(n);
                for offset in 0..n {
                    let p = t as isize - (n as isize - 1) + offset as isize;
                    bundles.push(if p < 0 {
                        IdBundle::bos()
                    } else if p as usize == t {
                        resolved.candidates[t][b]
                    } else if p as usize + 1 == t {
                        resolved.candidates[t - 1][a]
                    } else {
                        let p = p as usize;
                        resolved.candidates[p][gold[p]]
                    });
                }
                let is_positive = (t == 0 || a == gold[t - 1]) && b == gold[t];
                let w = WindowInstance {
                    bundles,
                    positive: is_positive,
                    target_pos: t,
                };
                if is_positive {
                    debug_assert!(positive.is_none(), "one positive pair per position");
                    positive = Some(w);
                } else {
                    negatives.push(w);
                }
            }
        }
        if negatives.len() > neg_cap {
            // Uniform cap without replacement: partial Fisher-Yates over the
            // indices, then restored to pair order.
            let mut idx: Vec<usize> = (0..negatives.len()).collect();
            for i in 0..neg_cap {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            let mut keep = idx[..neg_cap].to_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<WindowInstance>> = negatives.into_iter().map(Some).collect();
            negatives = keep
                .iter()
                .map(|&i| slots[i].take().expect("distinct"))
                .collect();
        }
        out.push(positive.expect("gold indices are in range"));
        out.extend(negatives);
    }
    Ok(out)
}

/// Root ids that occur exactly once, indexed by id.
fn singleton_roots(vocab: &Vocabularies) -> Vec<bool> {
    vocab
        .table(Slot::Root)
        .entries()
        .iter()
        .enumerate()
        .map(|(id, e)| id >= RESERVED_IDS as usize && e.count == 1)
        .collect()
}

/// Replaces singleton roots by UNK with probability `prob`, independently
/// per candidate occurrence. Sentences without singletons come back
/// borrowed and consume no randomness.
fn mask_singletons<'a>(
    resolved: &'a ResolvedSentence,
    singleton: &[bool],
    prob: f64,
    rng: &mut impl Rng,
) -> Cow<'a, ResolvedSentence> {
    let is_singleton = |b: &IdBundle| {
        singleton
            .get(b.get(Slot::Root) as usize)
            .copied()
            .unwrap_or(false)
    };
    if prob == 0.0
        || !resolved
            .candidates
            .iter()
            .any(|cands| cands.iter().any(is_singleton))
    {
        return Cow::Borrowed(resolved);
    }
    let mut masked = resolved.clone();
    for cands in &mut masked.candidates {
        for b in cands {
            if is_singleton(b) && rng.gen_bool(prob) {
                b.set(Slot::Root, UNK_ID);
            }
        }
    }
    Cow::Owned(masked)
}

/// Share of ambiguous tokens (two or more candidates) the decoder gets
/// right; `None` when the set has no ambiguous tokens.
pub fn ambiguous_accuracy<F: Scalar>(
    sentences: &[ResolvedSentence],
    state: &ModelState<F>,
) -> Result<Option<f64>, TrainError> {
    let mut correct = 0u64;
    let mut total = 0u64;
    for s in sentences {
        let decoded = decoder::viterbi(s, state)?;
        for (t, cands) in s.candidates.iter().enumerate() {
            if cands.len() < 2 {
                continue;
            }
            let gold = s.gold[t].ok_or_else(|| TrainError::UnlabeledToken {
                sentence: s.id.clone(),
                position: t,
            })?;
            total += 1;
            if decoded.choices[t] == gold {
                correct += 1;
            }
        }
    }
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

/// Per-epoch progress.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_amb_acc: Option<f64>,
    pub windows: usize,
}

/// Progress log plus which epoch's weights were kept.
#[derive(Debug, Clone, Serialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStat>,
    /// Epoch whose weights the model ended with; `None` means the final
    /// epoch (no dev accuracy was ever measured).
    pub best_epoch: Option<usize>,
}

impl TrainingReport {
    /// One line per epoch: `epoch <k> loss <float> devAmbAcc <float|n/a>`.
    pub fn lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            write!(out, "epoch {} loss {} devAmbAcc ", e.epoch, e.mean_loss).unwrap();
            match e.dev_amb_acc {
                Some(a) => writeln!(out, "{a}").unwrap(),
                None => writeln!(out, "n/a").unwrap(),
            }
        }
        out
    }
}

/// Fits `state` on `train_set`. When a dev set is given, the model is
/// restored to the epoch with the best dev ambiguous accuracy (earliest on
/// ties) before returning; otherwise the final epoch's weights stand.
///
/// Deterministic: epoch `e` draws everything from a fresh generator seeded
/// with `shuffle_seed + e` — sentence order first, then per sentence the
/// singleton masks and negative samples.
pub fn train<F: Scalar>(
    state: &mut ModelState<F>,
    train_set: &[ResolvedSentence],
    dev_set: Option<&[ResolvedSentence]>,
    vocab: &Vocabularies,
    opts: &TrainOptions,
) -> Result<TrainingReport, TrainError> {
    opts.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let singleton = singleton_roots(vocab);
    let mut best: Option<(f64, usize, ModelState<F>)> = None;
    let mut report = TrainingReport {
        epochs: Vec::new(),
        best_epoch: None,
    };
    for epoch in 1..=opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed.wrapping_add(epoch as u64));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut windows = 0usize;
        for &si in &order {
            let sentence = &train_set[si];
            let masked = mask_singletons(sentence, &singleton, opts.singleton_unk_prob, &mut rng);
            for w in generate_windows(&masked, state.window_len(), opts.neg_cap, &mut rng)? {
                let (loss, grads) = state.backward(&w.bundles, w.positive)?;
                let loss = loss.to_f64();
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        sentence: sentence.id.clone(),
                    });
                }
                state.adagrad_step(&grads);
                loss_sum += loss;
                windows += 1;
            }
        }

        let dev_amb_acc = match dev_set {
            Some(dev) if epoch % opts.dev_eval_every == 0 => ambiguous_accuracy(dev, state)?,
            _ => None,
        };
        if let Some(acc) = dev_amb_acc {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, state.clone()));
            }
        }
        report.epochs.push(EpochStat {
            epoch,
            mean_loss: loss_sum / windows as f64,
            dev_amb_acc,
            windows,
        });
    }
    if let Some((_, epoch, snapshot)) = best {
        *state = snapshot;
        report.best_epoch = Some(epoch);
    }
    Ok(report)
}
