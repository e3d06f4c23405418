//! The window-scoring network.
//!
//! Each word in a window is an id bundle; its slot embeddings are concatenated
//! and passed through a shared tanh layer to give a word vector. The window's
//! word vectors are concatenated and passed through a second tanh layer and a
//! two-way softmax, yielding the probability that the window's last two words
//! both carry correct analyses. Gradients are computed by hand (the layers are
//! small and the softmax/cross-entropy pair simplifies to `p - onehot`), and
//! updates are AdaGrad with per-parameter accumulators.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{IdBundle, Vocabularies};
use crate::linalg::{tanh_inplace, Mat};
use crate::morph::{Slot, TagsetConfig};
use crate::scalar::Scalar;

/// Hyperparameters. Dimensions are per slot kind: roots get `root_dim`,
/// main/minor POS get `pos_dim`, every other feature gets `feat_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub window_len: usize,
    pub root_dim: usize,
    pub pos_dim: usize,
    pub feat_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            window_len: 5,
            root_dim: 50,
            pos_dim: 20,
            feat_dim: 5,
            h1: 30,
            h2: 40,
            learning_rate: 0.05,
            adagrad_epsilon: 1e-8,
            seed: 42,
        }
    }
}

impl Hyper {
    pub fn slot_dim(&self, slot: Slot) -> usize {
        match slot {
            Slot::Root => self.root_dim,
            Slot::MainPos | Slot::MinorPos => self.pos_dim,
            _ => self.feat_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.window_len < 2 {
            return Err(ModelError::InvalidHyper(
                "window_len must be at least 2".into(),
            ));
        }
        for (name, v) in [
            ("root_dim", self.root_dim),
            ("pos_dim", self.pos_dim),
            ("feat_dim", self.feat_dim),
            ("h1", self.h1),
            ("h2", self.h2),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidHyper(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidHyper(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Errors from model construction and scoring.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("window length mismatch: model expects {expected}, got {got}")]
    WindowLenMismatch { expected: usize, got: usize },
    #[error("embedding dimension mismatch for {word:?}: expected {expected}, got {got}")]
    DimMismatch {
        word: String,
        expected: usize,
        got: usize,
    },
}

/// All learned matrices; also reused for the AdaGrad accumulators, which
/// mirror the parameters shape for shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    /// Per active slot: vocab-size × slot-dim embedding matrix.
    pub emb: Vec<Mat<F>>,
    pub w1: Mat<F>,
    pub b1: Vec<F>,
    pub w2: Mat<F>,
    pub b2: Vec<F>,
    pub w3: Mat<F>,
    pub b3: Vec<F>,
}

impl<F: Scalar> Params<F> {
    fn zeros_like(other: &Params<F>) -> Params<F> {
        Params {
            emb: other
                .emb
                .iter()
                .map(|m| Mat::zeros(m.rows(), m.cols()))
                .collect(),
            w1: Mat::zeros(other.w1.rows(), other.w1.cols()),
            b1: vec![F::zero(); other.b1.len()],
            w2: Mat::zeros(other.w2.rows(), other.w2.cols()),
            b2: vec![F::zero(); other.b2.len()],
            w3: Mat::zeros(other.w3.rows(), other.w3.cols()),
            b3: vec![F::zero(); other.b3.len()],
        }
    }
}

/// Model state: hyperparameters, the active slot layout, parameters, and
/// AdaGrad accumulators. The vocabulary itself lives beside the model (and
/// inside the model file); only its fingerprint is kept here so that a state
/// and a vocabulary can be checked for agreement.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<F> {
    hyper: Hyper,
    slots: Vec<Slot>,
    slot_dims: Vec<usize>,
    params: Params<F>,
    acc: Params<F>,
    vocab_fingerprint: u32,
}

/// One word's forward pass: the concatenated embedding input, the first-layer
/// pre-activation, and the tanh word vector.
#[derive(Debug, Clone)]
pub struct WordVec<F> {
    pub input: Vec<F>,
    pub pre: Vec<F>,
    pub hidden: Vec<F>,
}

/// Gradients of one window's loss. Dense for the shared layers; sparse (by
/// row id, per active slot) for embeddings, since a window touches at most
/// `window_len` rows per slot.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub emb: Vec<BTreeMap<u32, Vec<F>>>,
    pub w1: Mat<F>,
    pub b1: Vec<F>,
    pub w2: Mat<F>,
    pub b2: Vec<F>,
    pub w3: Mat<F>,
    pub b3: Vec<F>,
}

fn uniform<F: Scalar>(rng: &mut ChaCha8Rng, r: f64) -> F {
    F::from_f64(rng.gen_range(-r..=r))
}

impl<F: Scalar> ModelState<F> {
    /// Initializes parameters from the seed in `hyper`.
    ///
    /// Embedding entries are uniform on [-0.1, 0.1]; the dense layers use
    /// fan-based uniform bounds `r = sqrt(6 / (fan_in + fan_out))`; biases
    /// start at zero, as do the AdaGrad accumulators. Draw order is fixed
    /// (embeddings in slot order, then W1, W2, W3), so a seed fully
    /// determines the state.
    pub fn init(
        hyper: Hyper,
        cfg: &TagsetConfig,
        vocab: &Vocabularies,
    ) -> Result<Self, ModelError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let slots: Vec<Slot> = cfg.active_slots().to_vec();
        let slot_dims: Vec<usize> = slots.iter().map(|&s| hyper.slot_dim(s)).collect();
        let input_dim: usize = slot_dims.iter().sum();

        let emb: Vec<Mat<F>> = slots
            .iter()
            .zip(&slot_dims)
            .map(|(&slot, &dim)| {
                Mat::from_fn(vocab.table(slot).len(), dim, || uniform(&mut rng, 0.1))
            })
            .collect();
        let glorot = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let r = (6.0 / (rows + cols) as f64).sqrt();
            Mat::from_fn(rows, cols, || uniform(rng, r))
        };
        let w1 = glorot(&mut rng, hyper.h1, input_dim);
        let w2 = glorot(&mut rng, hyper.h2, hyper.window_len * hyper.h1);
        let w3 = glorot(&mut rng, 2, hyper.h2);
        let params = Params {
            emb,
            b1: vec![F::zero(); hyper.h1],
            b2: vec![F::zero(); hyper.h2],
            b3: vec![F::zero(); 2],
            w1,
            w2,
            w3,
        };
        let acc = Params::zeros_like(&params);
        Ok(ModelState {
            hyper,
            slots,
            slot_dims,
            params,
            acc,
            vocab_fingerprint: vocab.fingerprint(),
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Changes the learning rate mid-life (e.g. when resuming training).
    /// The only hyperparameter that may change after initialization; the
    /// rest pin matrix shapes.
    pub fn set_learning_rate(&mut self, lr: f64) -> Result<(), ModelError> {
        let mut hyper = self.hyper.clone();
        hyper.learning_rate = lr;
        hyper.validate()?;
        self.hyper = hyper;
        Ok(())
    }

    /// Active slots in concatenation order.
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot_dims(&self) -> &[usize] {
        &self.slot_dims
    }

    /// Width of the concatenated embedding input of one word.
    pub fn input_dim(&self) -> usize {
        self.slot_dims.iter().sum()
    }

    pub fn window_len(&self) -> usize {
        self.hyper.window_len
    }

    pub fn params(&self) -> &Params<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<F> {
        &mut self.params
    }

    pub fn accumulators(&self) -> &Params<F> {
        &self.acc
    }

    pub fn accumulators_mut(&mut self) -> &mut Params<F> {
        &mut self.acc
    }

    pub fn vocab_fingerprint(&self) -> u32 {
        self.vocab_fingerprint
    }

    /// Used by storage when reassembling a state from a file.
    pub fn from_parts(
        hyper: Hyper,
        slots: Vec<Slot>,
        slot_dims: Vec<usize>,
        params: Params<F>,
        acc: Params<F>,
        vocab_fingerprint: u32,
    ) -> Self {
        ModelState {
            hyper,
            slots,
            slot_dims,
            params,
            acc,
            vocab_fingerprint,
        }
    }

    /// Embedding matrix of `slot`, if that slot is active.
    pub fn embedding(&self, slot: Slot) -> Option<&Mat<F>> {
        self.slots
            .iter()
            .position(|&s| s == slot)
            .map(|i| &self.params.emb[i])
    }

    /// Concatenated embedding row lookup for one word.
    fn gather_input(&self, ids: &IdBundle) -> Vec<F> {
        let mut x = Vec::with_capacity(self.input_dim());
        for (i, &slot) in self.slots.iter().enumerate() {
            let id = ids.get(slot);
            debug_assert!(
                (id as usize) < self.params.emb[i].rows(),
                "id in range for {slot}"
            );
            x.extend_from_slice(self.params.emb[i].row(id as usize));
        }
        x
    }

    /// First layer: word vector `tanh(W1 · x + b1)` over the concatenated
    /// slot embeddings.
    pub fn forward_word(&self, ids: &IdBundle) -> WordVec<F> {
        let input = self.gather_input(ids);
        let mut pre = Vec::new();
        self.params
            .w1
            .mul_vec_add(&input, &self.params.b1, &mut pre);
        let mut hidden = pre.clone();
        tanh_inplace(&mut hidden);
        WordVec { input, pre, hidden }
    }

    fn forward_cache(&self, window: &[IdBundle]) -> Result<WindowCache<F>, ModelError> {
        if window.len() != self.hyper.window_len {
            return Err(ModelError::WindowLenMismatch {
                expected: self.hyper.window_len,
                got: window.len(),
            });
        }
        let words: Vec<WordVec<F>> = window.iter().map(|w| self.forward_word(w)).collect();
        let mut z = Vec::with_capacity(self.hyper.window_len * self.hyper.h1);
        for w in &words {
            z.extend_from_slice(&w.hidden);
        }
        let mut g = Vec::new();
        self.params.w2.mul_vec_add(&z, &self.params.b2, &mut g);
        tanh_inplace(&mut g);
        let mut logits = Vec::new();
        self.params.w3.mul_vec_add(&g, &self.params.b3, &mut logits);
        // Numerically stable two-way softmax: subtract the max logit.
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let sum = e0 + e1;
        Ok(WindowCache {
            words,
            z,
            g,
            probs: [e0 / sum, e1 / sum],
        })
    }

    /// Full window pass; returns `(p_incorrect, p_correct)`.
    pub fn forward_window(&self, window: &[IdBundle]) -> Result<(F, F), ModelError> {
        let cache = self.forward_cache(window)?;
        Ok((cache.probs[0], cache.probs[1]))
    }

    /// Hidden activations of a window pass: the concatenated first-layer
    /// word vectors and the second-layer vector. Both pass through `tanh`,
    /// so every entry lies strictly inside (-1, 1). Exposed for diagnostics.
    pub fn hidden_activations(&self, window: &[IdBundle]) -> Result<(Vec<F>, Vec<F>), ModelError> {
        let cache = self.forward_cache(window)?;
        Ok((cache.z, cache.g))
    }

    /// Cross-entropy loss and exact gradients for one labeled window.
    /// `positive` marks a window whose last two analyses are both gold.
    pub fn backward(
        &self,
        window: &[IdBundle],
        positive: bool,
    ) -> Result<(F, Gradients<F>), ModelError> {
        let cache = self.forward_cache(window)?;
        let label = usize::from(positive);
        let loss = -cache.probs[label].ln();

        // Softmax + cross-entropy: d logits = p - onehot(label).
        let mut dlogits = [cache.probs[0], cache.probs[1]];
        dlogits[label] -= F::one();

        let mut grads = Gradients {
            emb: self.slots.iter().map(|_| BTreeMap::new()).collect(),
            w1: Mat::zeros(self.params.w1.rows(), self.params.w1.cols()),
            b1: vec![F::zero(); self.params.b1.len()],
            w2: Mat::zeros(self.params.w2.rows(), self.params.w2.cols()),
            b2: vec![F::zero(); self.params.b2.len()],
            w3: Mat::zeros(self.params.w3.rows(), self.params.w3.cols()),
            b3: vec![F::zero(); self.params.b3.len()],
        };

        grads.w3.add_outer(&dlogits, &cache.g);
        grads.b3.copy_from_slice(&dlogits);

        let mut dg = Vec::new();
        self.params.w3.tmul_vec(&dlogits, &mut dg);
        // tanh' through the second layer: da2 = dg ∘ (1 - g²).
        for (d, g) in dg.iter_mut().zip(&cache.g) {
            *d *= F::one() - *g * *g;
        }
        grads.w2.add_outer(&dg, &cache.z);
        grads.b2.copy_from_slice(&dg);

        let mut dz = Vec::new();
        self.params.w2.tmul_vec(&dg, &mut dz);
        let h1 = self.hyper.h1;
        let mut dx = Vec::new();
        for (k, word) in cache.words.iter().enumerate() {
            let mut dh = dz[k * h1..(k + 1) * h1].to_vec();
            for (d, h) in dh.iter_mut().zip(&word.hidden) {
                *d *= F::one() - *h * *h;
            }
            // W1 is shared across window positions: accumulate.
            grads.w1.add_outer(&dh, &word.input);
            for (b, d) in grads.b1.iter_mut().zip(&dh) {
                *b += *d;
            }
            self.params.w1.tmul_vec(&dh, &mut dx);
            // Route the input gradient back to the embedding rows, slot by slot.
            let mut offset = 0;
            for (i, (&slot, &dim)) in self.slots.iter().zip(&self.slot_dims).enumerate() {
                let id = window[k].get(slot);
                let seg = &dx[offset..offset + dim];
                let row = grads.emb[i]
                    .entry(id)
                    .or_insert_with(|| vec![F::zero(); dim]);
                for (r, d) in row.iter_mut().zip(seg) {
                    *r += *d;
                }
                offset += dim;
            }
        }
        Ok((loss, grads))
    }

    /// AdaGrad: `G += g²; θ -= η · g / (√G + ε)`. Touches only the rows that
    /// appear in `grads.emb`; the dense layers update in full.
    pub fn adagrad_step(&mut self, grads: &Gradients<F>) {
        let lr = F::from_f64(self.hyper.learning_rate);
        let eps = F::from_f64(self.hyper.adagrad_epsilon);
        for (i, rows) in grads.emb.iter().enumerate() {
            for (&id, grad_row) in rows {
                adagrad_update(
                    self.params.emb[i].row_mut(id as usize),
                    self.acc.emb[i].row_mut(id as usize),
                    grad_row,
                    lr,
                    eps,
                );
            }
        }
        adagrad_update(
            self.params.w1.as_mut_slice(),
            self.acc.w1.as_mut_slice(),
            grads.w1.as_slice(),
            lr,
            eps,
        );
        adagrad_update(&mut self.params.b1, &mut self.acc.b1, &grads.b1, lr, eps);
        adagrad_update(
            self.params.w2.as_mut_slice(),
            self.acc.w2.as_mut_slice(),
            grads.w2.as_slice(),
            lr,
            eps,
        );
        adagrad_update(&mut self.params.b2, &mut self.acc.b2, &grads.b2, lr, eps);
        adagrad_update(
            self.params.w3.as_mut_slice(),
            self.acc.w3.as_mut_slice(),
            grads.w3.as_slice(),
            lr,
            eps,
        );
        adagrad_update(&mut self.params.b3, &mut self.acc.b3, &grads.b3, lr, eps);
    }

    /// Overwrites root embedding rows with externally trained vectors and
    /// zeroes their AdaGrad history. Roots absent from the vocabulary (and
    /// the reserved rows) are untouched. Returns how many rows were set.
    ///
    /// All vector lengths are validated before anything is written, so a
    /// failed call leaves the state unchanged.
    pub fn set_pretrained_roots<'a>(
        &mut self,
        vocab: &Vocabularies,
        pairs: impl IntoIterator<Item = (&'a str, &'a [F])> + Clone,
    ) -> Result<usize, ModelError> {
        let dim = self.hyper.root_dim;
        for (word, vec) in pairs.clone() {
            if vec.len() != dim {
                return Err(ModelError::DimMismatch {
                    word: word.to_string(),
                    expected: dim,
                    got: vec.len(),
                });
            }
        }
        let root_idx = self
            .slots
            .iter()
            .position(|&s| s == Slot::Root)
            .expect("root slot is always active");
        let table = vocab.table(Slot::Root);
        let mut set = 0;
        for (word, vec) in pairs {
            let id = table.id_of(word);
            if id == crate::corpus::UNK_ID {
                continue;
            }
            self.params.emb[root_idx]
                .row_mut(id as usize)
                .copy_from_slice(vec);
            for a in self.acc.emb[root_idx].row_mut(id as usize) {
                *a = F::zero();
            }
            set += 1;
        }
        Ok(set)
    }

    /// Number of learnable parameters (accumulators excluded).
    pub fn num_params(&self) -> usize {
        self.flat_segments().map(|(_, len)| len).sum::<usize>()
    }

    fn flat_segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        // (start, len) of each matrix in the canonical flat order:
        // embeddings in slot order, then W1, b1, W2, b2, W3, b3.
        let sizes = self.params.emb.iter().map(|m| m.rows() * m.cols()).chain([
            self.params.w1.rows() * self.params.w1.cols(),
            self.params.b1.len(),
            self.params.w2.rows() * self.params.w2.cols(),
            self.params.b2.len(),
            self.params.w3.rows() * self.params.w3.cols(),
            self.params.b3.len(),
        ]);
        sizes.scan(0usize, |start, len| {
            let s = *start;
            *start += len;
            Some((s, len))
        })
    }

    /// Parameters in the canonical flat order (see [`Self::num_params`]).
    pub fn flatten_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in &self.params.emb {
            out.extend_from_slice(m.as_slice());
        }
        out.extend_from_slice(self.params.w1.as_slice());
        out.extend_from_slice(&self.params.b1);
        out.extend_from_slice(self.params.w2.as_slice());
        out.extend_from_slice(&self.params.b2);
        out.extend_from_slice(self.params.w3.as_slice());
        out.extend_from_slice(&self.params.b3);
        out
    }

    /// Writes one parameter by flat index. Used by gradient checking.
    pub fn set_flat_param(&mut self, index: usize, value: F) {
        let mut i = index;
        for m in &mut self.params.emb {
            let n = m.rows() * m.cols();
            if i < n {
                m.as_mut_slice()[i] = value;
                return;
            }
            i -= n;
        }
        for slice in [
            self.params.w1.as_mut_slice(),
            &mut self.params.b1,
            self.params.w2.as_mut_slice(),
            &mut self.params.b2,
            self.params.w3.as_mut_slice(),
            &mut self.params.b3,
        ] {
            if i < slice.len() {
                slice[i] = value;
                return;
            }
            i -= slice.len();
        }
        panic!("flat parameter index {index} out of range");
    }
}

impl<F: Scalar> Gradients<F> {
    /// Dense view in the same flat order as [`ModelState::flatten_params`];
    /// embedding rows that were not touched flatten to zeros.
    pub fn flatten(&self, state: &ModelState<F>) -> Vec<F> {
        let mut out = Vec::with_capacity(state.num_params());
        for (i, m) in state.params.emb.iter().enumerate() {
            let cols = m.cols();
            let mut dense = vec![F::zero(); m.rows() * cols];
            for (&id, row) in &self.emb[i] {
                dense[id as usize * cols..(id as usize + 1) * cols].copy_from_slice(row);
            }
            out.extend_from_slice(&dense);
        }
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(self.w3.as_slice());
        out.extend_from_slice(&self.b3);
        out
    }
}

struct WindowCache<F> {
    words: Vec<WordVec<F>>,
    z: Vec<F>,
    g: Vec<F>,
    probs: [F; 2],
}

fn adagrad_update<F: Scalar>(theta: &mut [F], acc: &mut [F], grad: &[F], lr: F, eps: F) {
    debug_assert_eq!(theta.len(), grad.len());
    for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        *a += g * g;
        *t -= lr * g / (a.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus_str, ReadMode, UNK_ID};
    use crate::morph::{extract_features, parse_analysis, TagStats};

    fn tiny_cfg() -> TagsetConfig {
        "lang t\nmap N mainPos\nmap V mainPos\n"
            .parse::<TagsetConfig>()
            .unwrap()
    }

    fn tiny_hyper() -> Hyper {
        Hyper {
            window_len: 2,
            root_dim: 2,
            pos_dim: 1,
            feat_dim: 1,
            h1: 2,
            h2: 2,
            ..Hyper::default()
        }
    }

    /// Corpus with roots a, b and POS N, V; ids: a=3, b=4, N=3, V=4.
    fn tiny_vocab(cfg: &TagsetConfig) -> Vocabularies {
        let text = "<S>\nw\ta+N\tb+V\n</S>\n";
        let ss = read_corpus_str(text, ReadMode::Train, cfg).unwrap();
        Vocabularies::build(&ss, cfg, 1, &mut TagStats::default()).unwrap()
    }

    fn ids_of(raw: &str, cfg: &TagsetConfig, vocab: &Vocabularies) -> IdBundle {
        let a = parse_analysis(raw, cfg).unwrap();
        vocab.bundle_to_ids(&extract_features(&a, cfg, &mut TagStats::default()))
    }

    fn tiny_model(seed: u64) -> (TagsetConfig, Vocabularies, ModelState<f64>) {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab(&cfg);
        let hyper = Hyper {
            seed,
            ..tiny_hyper()
        };
        let model = ModelState::<f64>::init(hyper, &cfg, &vocab).unwrap();
        (cfg, vocab, model)
    }

    #[test]
    fn default_shapes_match_turkish_layout() {
        let cfg = TagsetConfig::builtin("tr").unwrap();
        let text = "<S>\nevi\tev+Noun+3sg+Pnon+Accusative\tev+Noun+3sg+P3sg+Nominative\n</S>\n";
        let ss = read_corpus_str(text, ReadMode::Train, &cfg).unwrap();
        let vocab = Vocabularies::build(&ss, &cfg, 1, &mut TagStats::default()).unwrap();
        let m = ModelState::<f64>::init(Hyper::default(), &cfg, &vocab).unwrap();
        // 50 (root) + 2·20 (POS) + 7·5 (features incl. prevTags) = 125.
        assert_eq!(m.input_dim(), 125);
        assert_eq!(m.params().w1.rows(), 30);
        assert_eq!(m.params().w1.cols(), 125);
        assert_eq!(m.params().w2.rows(), 40);
        assert_eq!(m.params().w2.cols(), 150);
        assert_eq!(m.params().w3.rows(), 2);
        assert_eq!(m.params().w3.cols(), 40);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let (_, _, m1) = tiny_model(9);
        let (_, _, m2) = tiny_model(9);
        let (_, _, m3) = tiny_model(10);
        assert_eq!(m1.flatten_params(), m2.flatten_params());
        assert_ne!(m1.flatten_params(), m3.flatten_params());
        for mat in &m1.params().emb {
            assert!(mat.as_slice().iter().all(|v| v.abs() <= 0.1));
        }
        let r1 = (6.0 / (m1.params().w1.rows() + m1.params().w1.cols()) as f64).sqrt();
        assert!(m1.params().w1.as_slice().iter().all(|v| v.abs() <= r1));
        assert!(m1.params().b1.iter().all(|v| *v == 0.0));
        assert!(m1.accumulators().w1.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_word_matches_hand_computation() {
        let (cfg, vocab, mut m) = tiny_model(1);
        // Overwrite the parameters the lookup touches with fixed values.
        m.params_mut().emb[0]
            .row_mut(3)
            .copy_from_slice(&[0.5, -0.5]); // root a
        m.params_mut().emb[1].row_mut(3).copy_from_slice(&[0.25]); // mainPos N
        m.params_mut()
            .w1
            .as_mut_slice()
            .copy_from_slice(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        m.params_mut().b1.copy_from_slice(&[0.01, 0.02]);
        let w = m.forward_word(&ids_of("a+N", &cfg, &vocab));
        assert_eq!(w.input, vec![0.5, -0.5, 0.25]);
        // Same accumulation order as the matvec: bias first, then row terms.
        let pre0 = ((0.01 + 0.1 * 0.5) + 0.2 * (-0.5)) + 0.3 * 0.25;
        let pre1 = ((0.02 + 0.4 * 0.5) + 0.5 * (-0.5)) + 0.6 * 0.25;
        assert_eq!(w.pre, vec![pre0, pre1]);
        assert_eq!(w.hidden, vec![pre0.tanh(), pre1.tanh()]);
        assert!(w.hidden.iter().all(|h| h.abs() < 1.0));
    }

    #[test]
    fn zero_output_layer_gives_exactly_half() {
        let (cfg, vocab, mut m) = tiny_model(2);
        for v in m.params_mut().w3.as_mut_slice() {
            *v = 0.0;
        }
        m.params_mut().b3.fill(0.0);
        let window = [ids_of("a+N", &cfg, &vocab), ids_of("b+V", &cfg, &vocab)];
        let (p0, p1) = m.forward_window(&window).unwrap();
        assert_eq!(p0, 0.5);
        assert_eq!(p1, 0.5);
        let (loss, grads) = m.backward(&window, true).unwrap();
        assert_eq!(loss, std::f64::consts::LN_2);
        // d logits = p - onehot(1) = (0.5, -0.5).
        assert_eq!(grads.b3, vec![0.5, -0.5]);
    }

    #[test]
    fn window_length_is_enforced() {
        let (cfg, vocab, m) = tiny_model(3);
        let w = ids_of("a+N", &cfg, &vocab);
        match m.forward_window(&[w]) {
            Err(ModelError::WindowLenMismatch {
                expected: 2,
                got: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(m.backward(&[w, w, w], false).is_err());
    }

    #[test]
    fn probabilities_are_normalized_under_extreme_logits() {
        let (cfg, vocab, mut m) = tiny_model(4);
        m.params_mut().b3.copy_from_slice(&[1000.0, -1000.0]);
        let window = [IdBundle::bos(), ids_of("a+N", &cfg, &vocab)];
        let (p0, p1) = m.forward_window(&window).unwrap();
        assert!(p0.is_finite() && p1.is_finite());
        assert!((p0 + p1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences_on_a_seeded_model() {
        let (cfg, vocab, m) = tiny_model(5);
        let window = [ids_of("a+N", &cfg, &vocab), ids_of("b+V", &cfg, &vocab)];
        for positive in [false, true] {
            let (_, grads) = m.backward(&window, positive).unwrap();
            let analytic = grads.flatten(&m);
            let base = m.flatten_params();
            let h = 1e-4;
            for i in 0..base.len() {
                let mut plus = m.clone();
                plus.set_flat_param(i, base[i] + h);
                let mut minus = m.clone();
                minus.set_flat_param(i, base[i] - h);
                let lp = plus.backward(&window, positive).unwrap().0;
                let lm = minus.backward(&window, positive).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let denom = analytic[i].abs().max(fd.abs()).max(1e-3);
                assert!(
                    (analytic[i] - fd).abs() / denom < 1e-4,
                    "param {i}: analytic {} vs fd {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn adagrad_first_step_approaches_learning_rate() {
        let (_, _, mut m) = tiny_model(6);
        let zero = Gradients {
            emb: m.params().emb.iter().map(|_| BTreeMap::new()).collect(),
            w1: Mat::zeros(2, 3),
            b1: vec![0.0; 2],
            w2: Mat::zeros(2, 4),
            b2: vec![0.0; 2],
            w3: Mat::zeros(2, 2),
            b3: vec![0.0; 2],
        };
        let mut grads = zero.clone();
        grads.b3[0] = 3.0;
        let before = m.params().b3[0];
        m.adagrad_step(&grads);
        let after = m.params().b3[0];
        // θ -= 0.05 · 3 / (√9 + 1e-8)
        let expected = 0.05 * 3.0 / (3.0 + 1e-8);
        assert!(((before - after) - expected).abs() < 1e-12);
        assert!((m.accumulators().b3[0] - 9.0).abs() < 1e-15);
        // A second identical step must shrink: the accumulator has grown.
        let mid = m.params().b3[0];
        m.adagrad_step(&grads);
        let second = mid - m.params().b3[0];
        assert!(second > 0.0 && second < expected);
        // Zero gradient moves nothing, and other entries never moved.
        let snapshot = m.flatten_params();
        m.adagrad_step(&zero);
        assert_eq!(m.flatten_params(), snapshot);
        assert_eq!(m.params().b3[1], 0.0);
    }

    #[test]
    fn embedding_updates_touch_only_window_rows() {
        let (cfg, vocab, mut m) = tiny_model(7);
        let window = [ids_of("a+N", &cfg, &vocab), ids_of("a+N", &cfg, &vocab)];
        let (_, grads) = m.backward(&window, true).unwrap();
        // Only root id 3 and mainPos id 3 appear in the window.
        assert_eq!(grads.emb[0].keys().copied().collect::<Vec<_>>(), vec![3]);
        assert_eq!(grads.emb[1].keys().copied().collect::<Vec<_>>(), vec![3]);
        let before_b = m.params().emb[0].row(4).to_vec();
        m.adagrad_step(&grads);
        assert_eq!(m.params().emb[0].row(4), &before_b[..]);
        assert!(m.accumulators().emb[0].row(4).iter().all(|v| *v == 0.0));
        assert!(m.accumulators().emb[0].row(3).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn shared_first_layer_accumulates_across_positions() {
        // With the same word at both positions, dW1 must be the sum of both
        // positions' contributions: recompute with a window function that
        // sees the word once and check it differs.
        let (cfg, vocab, m) = tiny_model(8);
        let w = ids_of("a+N", &cfg, &vocab);
        let (_, grads) = m.backward(&[w, w], true).unwrap();
        let flat = grads.flatten(&m);
        assert!(
            flat.iter().any(|g| g.abs() > 1e-12),
            "gradient must be nonzero"
        );
    }

    #[test]
    fn pretrained_roots_overwrite_matching_rows_only() {
        let (_, vocab, mut m) = tiny_model(11);
        // Make root AdaGrad history nonzero first.
        for v in m.accumulators_mut().emb[0].as_mut_slice() {
            *v = 7.0;
        }
        let va: Vec<f64> = vec![1.5, -2.5];
        let before = m.params().emb[0].row(4).to_vec(); // root b untouched
        let n = m
            .set_pretrained_roots(&vocab, [("a", va.as_slice()), ("zzz", va.as_slice())])
            .unwrap();
        assert_eq!(n, 1);
        assert_eq!(m.params().emb[0].row(3), &[1.5, -2.5]);
        assert_eq!(m.params().emb[0].row(4), &before[..]);
        assert!(m.accumulators().emb[0].row(3).iter().all(|v| *v == 0.0));
        assert!(m.accumulators().emb[0].row(4).iter().all(|v| *v == 7.0));
        // Reserved rows never match.
        assert_eq!(vocab.table(Slot::Root).id_of("UNK"), UNK_ID);
    }

    #[test]
    fn pretrained_dim_mismatch_leaves_state_unchanged() {
        let (_, vocab, mut m) = tiny_model(12);
        let before = m.flatten_params();
        let good: Vec<f64> = vec![0.0, 0.0];
        let bad: Vec<f64> = vec![1.0, 2.0, 3.0];
        let err = m
            .set_pretrained_roots(&vocab, [("a", good.as_slice()), ("b", bad.as_slice())])
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::DimMismatch {
                expected: 2,
                got: 3,
                ..
            }
        ));
        assert_eq!(m.flatten_params(), before);
    }

    #[test]
    fn empty_pretrained_table_is_a_no_op() {
        let (_, vocab, mut m) = tiny_model(13);
        let before = m.flatten_params();
        let n = m
            .set_pretrained_roots(&vocab, std::iter::empty::<(&str, &[f64])>())
            .unwrap();
        assert_eq!(n, 0);
        assert_eq!(m.flatten_params(), before);
    }

    #[test]
    fn flat_parameter_access_round_trips() {
        let (_, _, mut m) = tiny_model(14);
        let flat = m.flatten_params();
        assert_eq!(flat.len(), m.num_params());
        // Perturb the last parameter and a middle one; flatten must reflect it.
        m.set_flat_param(flat.len() - 1, 123.5);
        m.set_flat_param(7, -9.25);
        let flat2 = m.flatten_params();
        assert_eq!(flat2[flat.len() - 1], 123.5);
        assert_eq!(flat2[7], -9.25);
        assert_eq!(m.params().b3[1], 123.5);
    }

    #[test]
    fn invalid_hyper_is_rejected() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab(&cfg);
        let bad = Hyper {
            window_len: 1,
            ..tiny_hyper()
        };
        assert!(matches!(
            ModelState::<f64>::init(bad, &cfg, &vocab),
            Err(ModelError::InvalidHyper(_))
        ));
        let bad = Hyper {
            h1: 0,
            ..tiny_hyper()
        };
        assert!(ModelState::<f64>::init(bad, &cfg, &vocab).is_err());
    }
}
