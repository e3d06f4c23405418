//! Lattice decoding: picks one candidate analysis per token by maximizing
//! the summed log-probability of positive transitions.
//!
//! The lattice state at position `t` is the *pair* of choices at `t-1` and
//! `t`, so every window position the net looks at — target, previous, and
//! the one before that — is pinned by the transition `(i,j) -> (j,k)`. With
//! a window of two or three words the search is therefore exact. Wider
//! windows also need choices at `t-3` and earlier; those are read off the
//! best path into `(i,j)` via backpointers, which is a beam-like
//! approximation (the returned score is always the true score of the
//! returned path).

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{IdBundle, ResolvedSentence};
use crate::model::{ModelError, ModelState};
use crate::scalar::Scalar;

/// Errors from decoding.
#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("sentence {sentence}: token {position} has no candidates")]
    EmptyCandidates { sentence: String, position: usize },
    #[error("sentence {sentence}: {paths} candidate paths exceed the exhaustive-search limit")]
    TooLarge { sentence: String, paths: u128 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One decoded sentence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult<F> {
    /// Chosen candidate index per token.
    pub choices: Vec<usize>,
    /// Sum of `step_scores`.
    pub score: F,
    /// Per token, the log-probability of the chosen transition into it.
    pub step_scores: Vec<F>,
}

fn check_candidates(resolved: &ResolvedSentence) -> Result<(), DecodeError> {
    for (t, c) in resolved.candidates.iter().enumerate() {
        if c.is_empty() {
            return Err(DecodeError::EmptyCandidates {
                sentence: resolved.id.clone(),
                position: t,
            });
        }
    }
    Ok(())
}

/// Log-probability that the transition into position `t` is positive, given
/// a full assignment of candidate choices. `choice(p)` is consulted only for
/// `p` in `0..=t`; positions before the sentence enter as BOS.
fn transition_score<F: Scalar>(
    state: &ModelState<F>,
    resolved: &ResolvedSentence,
    t: usize,
    choice: impl Fn(usize) -> usize,
) -> Result<F, DecodeError> {
    let n = state.window_len();
    let mut window = Vec::with_capacity(n);
    for k in 0..n {
        let p = t as isize - (n as isize - 1) + k as isize;
        window.push(if p < 0 {
            IdBundle::bos()
        } else {
            let p = p as usize;
            resolved.candidates[p][choice(p)]
        });
    }
    let (_, p_pos) = state.forward_window(&window)?;
    Ok(p_pos.ln())
}

/// Scores one complete assignment: per-position transition log-probabilities
/// and their sum. This is the objective both decoders maximize.
pub fn score_path<F: Scalar>(
    resolved: &ResolvedSentence,
    choices: &[usize],
    state: &ModelState<F>,
) -> Result<(F, Vec<F>), DecodeError> {
    assert_eq!(
        choices.len(),
        resolved.candidates.len(),
        "one choice per token"
    );
    let mut steps = Vec::with_capacity(choices.len());
    let mut total = F::zero();
    for t in 0..choices.len() {
        let s = transition_score(state, resolved, t, |p| choices[p])?;
        steps.push(s);
        total += s;
    }
    Ok((total, steps))
}

/// Pair-state Viterbi search. Exact for window lengths up to three; see the
/// module docs for wider windows. Ties resolve toward the lowest candidate
/// indices, matching exhaustive enumeration order.
pub fn viterbi<F: Scalar>(
    resolved: &ResolvedSentence,
    state: &ModelState<F>,
) -> Result<DecodeResult<F>, DecodeError> {
    check_candidates(resolved)?;
    let t_len = resolved.candidates.len();
    if t_len == 0 {
        return Ok(DecodeResult {
            choices: vec![],
            score: F::zero(),
            step_scores: vec![],
        });
    }
    let counts: Vec<usize> = resolved.candidates.iter().map(|c| c.len()).collect();
    // prev-dimension size of the pair state at time t (a virtual slot at t=0).
    let prev_count = |t: usize| if t == 0 { 1 } else { counts[t - 1] };

    // delta[t][j * counts[t] + k]: best score of any path whose choices at
    // (t-1, t) are (j, k). bp holds the arg-max choice at t-2.
    let mut delta: Vec<Vec<F>> = Vec::with_capacity(t_len);
    let mut bp: Vec<Vec<usize>> = Vec::with_capacity(t_len);

    // Reads the choice at `pos` off the best path into state (a, b) at `time`,
    // walking backpointers. Positions before the sentence are BOS (None).
    let deeper_choice = |bp: &[Vec<usize>],
                         mut time: usize,
                         mut a: usize,
                         mut b: usize,
                         pos: isize|
     -> Option<usize> {
        if pos < 0 {
            return None;
        }
        // Invariant: (a, b) are the best-path choices at (time-1, time).
        loop {
            let p = pos as usize;
            if p == time {
                return Some(b);
            }
            if p + 1 == time {
                return Some(a);
            }
            let back = bp[time][a * counts[time] + b];
            time -= 1;
            b = a;
            a = back;
        }
    };

    for t in 0..t_len {
        let pc = prev_count(t);
        let cc = counts[t];
        let mut d_t = vec![F::neg_infinity(); pc * cc];
        let mut b_t = vec![0usize; pc * cc];
        for j in 0..pc {
            for k in 0..cc {
                let (mut best, mut best_i) = (F::neg_infinity(), 0usize);
                for i in 0..prev_count(t.saturating_sub(1)) {
                    let base = if t == 0 {
                        F::zero()
                    } else {
                        delta[t - 1][i * counts[t - 1] + j]
                    };
                    if base == F::neg_infinity() {
                        continue;
                    }
                    let step = transition_score(state, resolved, t, |p| {
                        if p == t {
                            k
                        } else if p + 1 == t {
                            j
                        } else if p + 2 == t {
                            i
                        } else {
                            // Deeper context: follow the best path into (i, j).
                            deeper_choice(&bp, t - 1, i, j, p as isize).unwrap_or(0)
                        }
                    })?;
                    let total = base + step;
                    if total > best {
                        best = total;
                        best_i = i;
                    }
                }
                d_t[j * cc + k] = best;
                b_t[j * cc + k] = best_i;
            }
        }
        delta.push(d_t);
        bp.push(b_t);
    }

    // Best final pair state, lowest indices on ties.
    let last = t_len - 1;
    let (mut best, mut best_jk) = (F::neg_infinity(), (0usize, 0usize));
    for j in 0..prev_count(last) {
        for k in 0..counts[last] {
            let v = delta[last][j * counts[last] + k];
            if v > best {
                best = v;
                best_jk = (j, k);
            }
        }
    }

    // Reconstruct choices right to left.
    let mut choices = vec![0usize; t_len];
    choices[last] = best_jk.1;
    if t_len >= 2 {
        choices[last - 1] = best_jk.0;
        for p in (0..t_len - 2).rev() {
            let t = p + 2;
            choices[p] = bp[t][choices[t - 1] * counts[t] + choices[t]];
        }
    }

    // Report the true score of the returned path (identical to `best` for
    // window lengths up to three).
    let (score, step_scores) = score_path(resolved, &choices, state)?;
    Ok(DecodeResult {
        choices,
        score,
        step_scores,
    })
}

/// Exhaustive-search limit for [`brute_force_decode`].
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Scores every candidate assignment and returns the best (lowest indices on
/// ties). Refuses sentences with more than [`BRUTE_FORCE_LIMIT`] paths.
pub fn brute_force_decode<F: Scalar>(
    resolved: &ResolvedSentence,
    state: &ModelState<F>,
) -> Result<DecodeResult<F>, DecodeError> {
    check_candidates(resolved)?;
    let t_len = resolved.candidates.len();
    if t_len == 0 {
        return Ok(DecodeResult {
            choices: vec![],
            score: F::zero(),
            step_scores: vec![],
        });
    }
    let counts: Vec<usize> = resolved.candidates.iter().map(|c| c.len()).collect();
    let paths = counts.iter().try_fold(1u128, |acc, &c| {
        acc.checked_mul(c as u128)
            .filter(|&p| p <= BRUTE_FORCE_LIMIT)
    });
    let Some(_) = paths else {
        let paths = counts
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
        return Err(DecodeError::TooLarge {
            sentence: resolved.id.clone(),
            paths,
        });
    };

    let mut assignment = vec![0usize; t_len];
    let mut best: Option<DecodeResult<F>> = None;
    loop {
        let (score, steps) = score_path(resolved, &assignment, state)?;
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(DecodeResult {
                choices: assignment.clone(),
                score,
                step_scores: steps,
            });
        }
        // Odometer increment, last position fastest: lexicographic order.
        let mut pos = t_len;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one path scored"));
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < counts[pos] {
                break;
            }
            assignment[pos] = 0;
        }
    }
}
