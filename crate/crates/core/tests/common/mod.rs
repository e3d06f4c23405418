//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use rand::Rng;

/// Roots per POS pool in [`rule_corpus`].
pub const POOL_SIZE: usize = 15;

/// Synthetic corpus in block format whose gold analyses follow a
/// deterministic first-order rule: the gold main POS of every token is a
/// function of the previous token's gold main POS (Noun after Verb or after
/// the sentence start, Verb after Noun). Every token carries exactly two
/// candidates — the gold one first, per the labeled format — that differ in
/// both root and POS, so every token is ambiguous.
pub fn rule_corpus(rng: &mut impl Rng, sentences: usize) -> String {
    const CASES: [&str; 3] = ["Nominative", "Accusative", "Dative"];
    const PERSONS: [&str; 2] = ["3sg", "3pl"];
    let mut out = String::new();
    for _ in 0..sentences {
        let len = rng.gen_range(4..=9);
        out.push_str("<S>\n");
        let mut prev_is_noun = false; // sentence start behaves like a verb
        for _ in 0..len {
            let gold_is_noun = !prev_is_noun;
            let noun = format!(
                "n{:02}+Noun+3sg+Pnon+{}",
                rng.gen_range(0..POOL_SIZE),
                CASES[rng.gen_range(0..CASES.len())],
            );
            let verb = format!(
                "v{:02}+Verb+Positive+Aorist+{}",
                rng.gen_range(0..POOL_SIZE),
                PERSONS[rng.gen_range(0..PERSONS.len())],
            );
            let (gold, other) = if gold_is_noun {
                (noun, verb)
            } else {
                (verb, noun)
            };
            let surface = gold.split('+').next().expect("root").to_string();
            out.push_str(&surface);
            out.push('\t');
            out.push_str(&gold);
            out.push('\t');
            out.push_str(&other);
            out.push('\n');
            prev_is_noun = gold_is_noun;
        }
        out.push_str("</S>\n");
    }
    out
}
