//! Accuracy metrics for decoded output against a gold standard.
//!
//! Three views of the same choices: full-analysis accuracy over ambiguous
//! tokens (raw string equality; the interesting number, since unambiguous
//! tokens are free), main-POS accuracy and root accuracy over all tokens
//! (absent POS compares equal to absent POS).

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::corpus::{Sentence, Token};
use crate::morph::{extract_features, MorphAnalysis, Slot, TagStats, TagsetConfig};

/// Errors from aligning decoded output with the gold standard.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sentence count mismatch: gold has {gold}, decoded has {decoded}")]
    SentenceCount { gold: usize, decoded: usize },
    #[error("sentence {sentence}: token count mismatch: gold has {gold}, decoded has {decoded}")]
    TokenCount {
        sentence: String,
        gold: usize,
        decoded: usize,
    },
    #[error(
        "sentence {sentence}, token {position}: surface {decoded:?} does not match gold {gold:?}"
    )]
    SurfaceMismatch {
        sentence: String,
        position: usize,
        gold: String,
        decoded: String,
    },
    #[error("sentence {sentence}, token {position}: choice {choice} out of range ({candidates} candidates)")]
    ChoiceOutOfRange {
        sentence: String,
        position: usize,
        choice: usize,
        candidates: usize,
    },
    #[error("sentence {sentence}, token {position}: gold file has no gold analysis")]
    UnlabeledGold { sentence: String, position: usize },
}

/// Aggregated counts; accuracies are derived views.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub tokens: u64,
    pub ambiguous_tokens: u64,
    pub ambiguous_correct: u64,
    pub pos_correct: u64,
    pub lemma_correct: u64,
}

impl Metrics {
    /// Full-analysis accuracy over ambiguous tokens; `None` when the gold
    /// set has no ambiguous tokens.
    pub fn ambiguous_accuracy(&self) -> Option<f64> {
        (self.ambiguous_tokens > 0)
            .then(|| self.ambiguous_correct as f64 / self.ambiguous_tokens as f64)
    }

    /// Main-POS accuracy over all tokens.
    pub fn pos_accuracy(&self) -> f64 {
        self.pos_correct as f64 / self.tokens.max(1) as f64
    }

    /// Root accuracy over all tokens.
    pub fn lemma_accuracy(&self) -> f64 {
        self.lemma_correct as f64 / self.tokens.max(1) as f64
    }

    fn score(
        &mut self,
        gold_token: &Token,
        gold: &MorphAnalysis,
        chosen: &MorphAnalysis,
        cfg: &TagsetConfig,
    ) {
        self.tokens += 1;
        if gold_token.is_ambiguous() {
            self.ambiguous_tokens += 1;
            if chosen.raw == gold.raw {
                self.ambiguous_correct += 1;
            }
        }
        let mut stats = TagStats::default();
        let g = extract_features(gold, cfg, &mut stats);
        let c = extract_features(chosen, cfg, &mut stats);
        if g.get(Slot::MainPos) == c.get(Slot::MainPos) {
            self.pos_correct += 1;
        }
        if gold.root == chosen.root {
            self.lemma_correct += 1;
        }
    }

    /// Human-readable summary, one `name value` line per metric.
    pub fn render_table(&self) -> String {
        let amb = match self.ambiguous_accuracy() {
            Some(a) => format!("{a:.4}"),
            None => "n/a".to_string(),
        };
        format!(
            "tokens            {}\n\
             ambiguousTokens   {}\n\
             ambiguousAccuracy {}\n\
             posAccuracy       {:.4}\n\
             lemmaAccuracy     {:.4}\n",
            self.tokens,
            self.ambiguous_tokens,
            amb,
            self.pos_accuracy(),
            self.lemma_accuracy(),
        )
    }

    /// Machine-readable summary: the counts plus the derived accuracies.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "tokens": self.tokens,
            "ambiguousTokens": self.ambiguous_tokens,
            "ambiguousCorrect": self.ambiguous_correct,
            "ambiguousAccuracy": self.ambiguous_accuracy(),
            "posCorrect": self.pos_correct,
            "posAccuracy": self.pos_accuracy(),
            "lemmaCorrect": self.lemma_correct,
            "lemmaAccuracy": self.lemma_accuracy(),
        })
    }
}

fn gold_analysis(s: &Sentence, position: usize) -> Result<&MorphAnalysis, EvalError> {
    s.tokens[position]
        .gold()
        .ok_or_else(|| EvalError::UnlabeledGold {
            sentence: s.id.clone(),
            position,
        })
}

/// Scores per-token candidate choices (as produced by the decoder) against
/// the gold sentences they were decoded from.
pub fn evaluate(
    gold: &[Sentence],
    choices: &[Vec<usize>],
    cfg: &TagsetConfig,
) -> Result<Metrics, EvalError> {
    if gold.len() != choices.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.len(),
            decoded: choices.len(),
        });
    }
    let mut m = Metrics::default();
    for (s, sentence_choices) in gold.iter().zip(choices) {
        if s.tokens.len() != sentence_choices.len() {
            return Err(EvalError::TokenCount {
                sentence: s.id.clone(),
                gold: s.tokens.len(),
                decoded: sentence_choices.len(),
            });
        }
        for (position, (t, &choice)) in s.tokens.iter().zip(sentence_choices).enumerate() {
            let chosen = t
                .candidates
                .get(choice)
                .ok_or_else(|| EvalError::ChoiceOutOfRange {
                    sentence: s.id.clone(),
                    position,
                    choice,
                    candidates: t.candidates.len(),
                })?;
            m.score(t, gold_analysis(s, position)?, chosen, cfg);
        }
    }
    Ok(m)
}

/// Scores a decoded corpus file against a gold corpus file. Sentences must
/// align one to one with matching surfaces; each decoded token's first
/// analysis counts as the choice.
pub fn evaluate_files(
    gold: &[Sentence],
    decoded: &[Sentence],
    cfg: &TagsetConfig,
) -> Result<Metrics, EvalError> {
    if gold.len() != decoded.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.len(),
            decoded: decoded.len(),
        });
    }
    let mut m = Metrics::default();
    for (g, d) in gold.iter().zip(decoded) {
        if g.tokens.len() != d.tokens.len() {
            return Err(EvalError::TokenCount {
                sentence: g.id.clone(),
                gold: g.tokens.len(),
                decoded: d.tokens.len(),
            });
        }
        for (position, (gt, dt)) in g.tokens.iter().zip(&d.tokens).enumerate() {
            if gt.surface != dt.surface {
                return Err(EvalError::SurfaceMismatch {
                    sentence: g.id.clone(),
                    position,
                    gold: gt.surface.clone(),
                    decoded: dt.surface.clone(),
                });
            }
            m.score(gt, gold_analysis(g, position)?, &dt.candidates[0], cfg);
        }
    }
    Ok(m)
}
