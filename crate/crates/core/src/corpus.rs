//! Corpus file format, vocabularies, and id resolution.
//!
//! A corpus file is a sequence of sentence blocks:
//!
//! ```text
//! <S>
//! surface<TAB>analysis1<TAB>analysis2...
//! </S>
//! ```
//!
//! Lines starting with `#` are comments; blank lines are skipped. In labeled
//! files (training and evaluation data) the first analysis of every token is
//! the gold one; decoder input carries no label and decoder output carries
//! exactly one analysis per token.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morph::{
    extract_features, parse_analysis, FeatureBundle, MorphAnalysis, Slot, TagStats, TagsetConfig,
    NUM_SLOTS,
};

/// Reserved id for the absent value in every slot table.
pub const NULL_ID: u32 = 0;
/// Reserved id for out-of-vocabulary values in every slot table.
pub const UNK_ID: u32 = 1;
/// Reserved id for the sentence-start filler in every slot table.
pub const BOS_ID: u32 = 2;
/// First id available to real values.
pub const RESERVED_IDS: u32 = 3;

/// One token: surface form plus candidate analyses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub candidates: Vec<MorphAnalysis>,
    /// Index of the gold candidate; `Some(0)` in labeled files, `None` in
    /// decoder input.
    pub gold_index: Option<usize>,
}

impl Token {
    /// A token is ambiguous when more than one candidate survives analysis.
    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() >= 2
    }

    pub fn gold(&self) -> Option<&MorphAnalysis> {
        self.gold_index.map(|i| &self.candidates[i])
    }
}

/// One sentence; never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Synthesized as `s1`, `s2`, ... in file order (the format carries no ids).
    pub id: String,
    pub tokens: Vec<Token>,
}

/// How a corpus file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Labeled, gold-first; used for fitting.
    Train,
    /// Labeled, gold-first; used for scoring against.
    Eval,
    /// Unlabeled candidate lists for decoding.
    Decode,
}

impl ReadMode {
    fn labeled(self) -> bool {
        !matches!(self, ReadMode::Decode)
    }
}

/// Errors from corpus reading and vocabulary construction.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("corpus line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: crate::morph::MorphError,
    },
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Format {
        line,
        msg: msg.into(),
    }
}

/// Parses corpus text. See the module docs for the format.
pub fn read_corpus_str(
    text: &str,
    mode: ReadMode,
    cfg: &TagsetConfig,
) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences = Vec::new();
    let mut open: Option<(usize, Vec<Token>)> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "<S>" {
            if open.is_some() {
                return Err(format_err(lineno, "nested <S>"));
            }
            open = Some((lineno, Vec::new()));
            continue;
        }
        if line == "</S>" {
            let (_, tokens) = open
                .take()
                .ok_or_else(|| format_err(lineno, "</S> without matching <S>"))?;
            if tokens.is_empty() {
                return Err(format_err(lineno, "empty sentence block"));
            }
            sentences.push(Sentence {
                id: format!("s{}", sentences.len() + 1),
                tokens,
            });
            continue;
        }
        let Some((_, tokens)) = open.as_mut() else {
            return Err(format_err(lineno, "token line outside <S>...</S>"));
        };
        let mut fields = line.split('\t');
        let surface = fields.next().unwrap_or("");
        if surface.is_empty() {
            return Err(format_err(lineno, "empty surface form"));
        }
        let mut candidates: Vec<MorphAnalysis> = Vec::new();
        for field in fields {
            if field.is_empty() {
                return Err(format_err(lineno, "empty analysis field"));
            }
            let a = parse_analysis(field, cfg).map_err(|source| CorpusError::Malformed {
                line: lineno,
                source,
            })?;
            if candidates.iter().any(|c| c.raw == a.raw) {
                return Err(format_err(
                    lineno,
                    format!("duplicate candidate {:?}", a.raw),
                ));
            }
            candidates.push(a);
        }
        if candidates.is_empty() {
            return Err(format_err(lineno, "token has no analyses"));
        }
        let gold_index = mode.labeled().then_some(0);
        tokens.push(Token {
            surface: surface.to_string(),
            candidates,
            gold_index,
        });
    }
    if let Some((line, _)) = open {
        return Err(format_err(line, "unterminated sentence block"));
    }
    Ok(sentences)
}

pub fn read_corpus(
    path: &Path,
    mode: ReadMode,
    cfg: &TagsetConfig,
) -> Result<Vec<Sentence>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    read_corpus_str(&text, mode, cfg)
}

/// Serializes sentences in the canonical form: no comments, no blank lines,
/// `\n` endings. `read_corpus_str(write_corpus_string(s)) == s` and writing
/// what was read from a canonical file reproduces it byte for byte.
pub fn write_corpus_string(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str("<S>\n");
        for t in &s.tokens {
            out.push_str(&t.surface);
            for c in &t.candidates {
                out.push('\t');
                out.push_str(&c.raw);
            }
            out.push('\n');
        }
        out.push_str("</S>\n");
    }
    out
}

pub fn write_corpus(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(write_corpus_string(sentences).as_bytes())?;
    Ok(())
}

/// One entry of a slot's id table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub value: String,
    pub count: u64,
}

/// Id table for one slot. Ids are dense and frozen at construction; 0, 1, 2
/// are the reserved NULL/UNK/BOS entries and real values start at 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTable {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
}

impl SlotTable {
    fn new() -> Self {
        let entries = ["NULL", "UNK", "BOS"]
            .into_iter()
            .map(|v| VocabEntry {
                value: v.to_string(),
                count: 0,
            })
            .collect();
        SlotTable {
            entries,
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    /// Id for a present value; `UNK_ID` when out of vocabulary.
    pub fn id_of(&self, value: &str) -> u32 {
        self.index.get(value).copied().unwrap_or(UNK_ID)
    }

    pub fn entry(&self, id: u32) -> &VocabEntry {
        &self.entries[id as usize]
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    fn push(&mut self, value: String, count: u64) {
        let id = self.entries.len() as u32;
        self.index.insert(value.clone(), id);
        self.entries.push(VocabEntry { value, count });
    }
}

/// Frozen id tables, one per slot (inactive slots keep only the reserved
/// entries). Ids are assigned in first-occurrence order over sentences,
/// tokens, candidates, and slots, so construction is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    tables: Vec<SlotTable>,
    min_root_count: u64,
}

/// One id per slot; inactive or absent slots hold `NULL_ID`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdBundle(pub [u32; NUM_SLOTS]);

impl IdBundle {
    /// The sentence-start filler: BOS in every slot.
    pub fn bos() -> IdBundle {
        IdBundle([BOS_ID; NUM_SLOTS])
    }

    pub fn get(&self, slot: Slot) -> u32 {
        self.0[slot.index()]
    }

    pub fn set(&mut self, slot: Slot, id: u32) {
        self.0[slot.index()] = id;
    }
}

impl Vocabularies {
    /// Builds id tables over every candidate (not only gold) of `sentences`.
    /// Roots occurring fewer than `min_root_count` times are left out and
    /// resolve to UNK; their occurrence mass is recorded on the UNK entry.
    pub fn build(
        sentences: &[Sentence],
        cfg: &TagsetConfig,
        min_root_count: u64,
        stats: &mut TagStats,
    ) -> Result<Vocabularies, CorpusError> {
        if sentences.iter().all(|s| s.tokens.is_empty()) {
            return Err(CorpusError::EmptyCorpus);
        }
        // First-occurrence order and counts per slot.
        let mut order: Vec<Vec<String>> = vec![Vec::new(); NUM_SLOTS];
        let mut counts: Vec<HashMap<String, u64>> = vec![HashMap::new(); NUM_SLOTS];
        let mut null_counts = [0u64; NUM_SLOTS];
        for s in sentences {
            for t in &s.tokens {
                for cand in &t.candidates {
                    let bundle = extract_features(cand, cfg, stats);
                    for &slot in cfg.active_slots() {
                        match bundle.get(slot) {
                            Some(v) => {
                                let cs = &mut counts[slot.index()];
                                if let Some(c) = cs.get_mut(v) {
                                    *c += 1;
                                } else {
                                    cs.insert(v.to_string(), 1);
                                    order[slot.index()].push(v.to_string());
                                }
                            }
                            None => null_counts[slot.index()] += 1,
                        }
                    }
                }
            }
        }
        let mut tables: Vec<SlotTable> = (0..NUM_SLOTS).map(|_| SlotTable::new()).collect();
        for slot in Slot::ALL {
            let i = slot.index();
            let table = &mut tables[i];
            table.entries[NULL_ID as usize].count = null_counts[i];
            for value in order[i].drain(..) {
                let count = counts[i][&value];
                if slot == Slot::Root && count < min_root_count {
                    table.entries[UNK_ID as usize].count += count;
                } else {
                    table.push(value, count);
                }
            }
        }
        Ok(Vocabularies {
            tables,
            min_root_count,
        })
    }

    pub fn table(&self, slot: Slot) -> &SlotTable {
        &self.tables[slot.index()]
    }

    pub fn min_root_count(&self) -> u64 {
        self.min_root_count
    }

    /// Maps a bundle to ids: NULL for absent slots, UNK for unseen values.
    pub fn bundle_to_ids(&self, b: &FeatureBundle) -> IdBundle {
        let mut ids = [NULL_ID; NUM_SLOTS];
        for slot in Slot::ALL {
            if let Some(v) = b.get(slot) {
                ids[slot.index()] = self.tables[slot.index()].id_of(v);
            }
        }
        IdBundle(ids)
    }

    /// Dump format: one `<slot> <id> <count> <value>` line per entry.
    pub fn write_dump(&self, out: &mut impl Write) -> std::io::Result<()> {
        for slot in Slot::ALL {
            for (id, e) in self.tables[slot.index()].entries.iter().enumerate() {
                writeln!(out, "{} {} {} {}", slot.name(), id, e.count, e.value)?;
            }
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("string write cannot fail");
        String::from_utf8(buf).expect("dump is UTF-8")
    }

    /// Stable fingerprint of the table contents (CRC-32C of the dump).
    pub fn fingerprint(&self) -> u32 {
        crate::storage::crc32c(self.dump_string().as_bytes())
    }

    /// Serializable view: per slot, the non-reserved entries in id order plus
    /// the NULL and UNK counts.
    pub fn to_parts(&self) -> VocabParts {
        VocabParts {
            min_root_count: self.min_root_count,
            slots: Slot::ALL
                .iter()
                .map(|&slot| {
                    let t = self.table(slot);
                    SlotParts {
                        slot,
                        null_count: t.entries[NULL_ID as usize].count,
                        unk_count: t.entries[UNK_ID as usize].count,
                        entries: t.entries[RESERVED_IDS as usize..].to_vec(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_parts(parts: VocabParts) -> Vocabularies {
        let mut tables: Vec<SlotTable> = (0..NUM_SLOTS).map(|_| SlotTable::new()).collect();
        for sp in parts.slots {
            let table = &mut tables[sp.slot.index()];
            table.entries[NULL_ID as usize].count = sp.null_count;
            table.entries[UNK_ID as usize].count = sp.unk_count;
            for e in sp.entries {
                table.push(e.value, e.count);
            }
        }
        Vocabularies {
            tables,
            min_root_count: parts.min_root_count,
        }
    }
}

/// Serialized form of [`Vocabularies`] used inside the model file header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabParts {
    pub min_root_count: u64,
    pub slots: Vec<SlotParts>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotParts {
    pub slot: Slot,
    pub null_count: u64,
    pub unk_count: u64,
    pub entries: Vec<VocabEntry>,
}

/// A sentence with candidate bundles resolved to ids, ready for scoring.
#[derive(Debug, Clone)]
pub struct ResolvedSentence {
    pub id: String,
    /// Per token: the id bundle of each candidate, aligned with `Token::candidates`.
    pub candidates: Vec<Vec<IdBundle>>,
    /// Gold candidate index per token, when the source was labeled.
    pub gold: Vec<Option<usize>>,
}

/// Featurizes and id-resolves every candidate of every token.
pub fn resolve_sentence(
    s: &Sentence,
    cfg: &TagsetConfig,
    vocab: &Vocabularies,
    stats: &mut TagStats,
) -> ResolvedSentence {
    ResolvedSentence {
        id: s.id.clone(),
        candidates: s
            .tokens
            .iter()
            .map(|t| {
                t.candidates
                    .iter()
                    .map(|c| vocab.bundle_to_ids(&extract_features(c, cfg, stats)))
                    .collect()
            })
            .collect(),
        gold: s.tokens.iter().map(|t| t.gold_index).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> TagsetConfig {
        TagsetConfig::builtin("tr").unwrap()
    }

    const FIXTURE: &str = "<S>\n\
        Ankara\tankara+Noun+3sg+Pnon+Nominative\n\
        dolar\tdolar+Noun+3sg+Pnon+Nominative\tdola+Verb+Pos+Aorist+3sg\tdol+Verb+Pos+Aorist+3sg\n\
        </S>\n\
        <S>\n\
        evi\tev+Noun+3sg+Pnon+Accusative\tev+Noun+3sg+P3sg+Nominative\n\
        gitti\tgit+Verb+Pos+Aorist+3sg\n\
        dolar\tdolar+Noun+3sg+Pnon+Nominative\tdola+Verb+Pos+Aorist+3sg\n\
        </S>\n";

    #[test]
    fn reads_hand_counted_fixture() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        assert_eq!(ss.len(), 2);
        assert_eq!(ss[0].id, "s1");
        assert_eq!(ss[1].id, "s2");
        let n_tokens: usize = ss.iter().map(|s| s.tokens.len()).sum();
        assert_eq!(n_tokens, 5);
        let n_ambiguous: usize = ss
            .iter()
            .flat_map(|s| &s.tokens)
            .filter(|t| t.is_ambiguous())
            .count();
        assert_eq!(n_ambiguous, 3);
        let n_candidates: usize = ss
            .iter()
            .flat_map(|s| &s.tokens)
            .map(|t| t.candidates.len())
            .sum();
        assert_eq!(n_candidates, 9);
        assert!(ss
            .iter()
            .flat_map(|s| &s.tokens)
            .all(|t| t.gold_index == Some(0)));
    }

    #[test]
    fn decode_mode_has_no_gold() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Decode, &tr()).unwrap();
        assert!(ss
            .iter()
            .flat_map(|s| &s.tokens)
            .all(|t| t.gold_index.is_none()));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header comment\n\n<S>\n# inside\nev\tev+Noun+3sg+Pnon+Nominative\n\n</S>\n";
        let ss = read_corpus_str(text, ReadMode::Train, &tr()).unwrap();
        assert_eq!(ss.len(), 1);
        assert_eq!(ss[0].tokens.len(), 1);
    }

    #[test]
    fn round_trip_is_byte_exact_on_canonical_files() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        assert_eq!(write_corpus_string(&ss), FIXTURE);
    }

    #[test]
    fn structural_errors_carry_line_numbers() {
        let cases: &[(&str, usize)] = &[
            ("ev\tev+Noun+3sg+Pnon+Nominative\n", 1), // outside block
            ("<S>\n<S>\n", 2),                        // nested
            ("</S>\n", 1),                            // unmatched close
            ("<S>\n</S>\n", 2),                       // empty sentence
            ("<S>\nev\n</S>\n", 2),                   // no analyses
            ("<S>\n\tev+Noun+3sg+Pnon+Nominative\n</S>\n", 2), // empty surface
            ("<S>\nev\tev+Noun\tev+Noun\n</S>\n", 2), // duplicate candidate
            ("<S>\nev\tev+Noun\n", 1),                // unterminated
        ];
        for (text, want_line) in cases {
            match read_corpus_str(text, ReadMode::Train, &tr()) {
                Err(CorpusError::Format { line, .. }) => assert_eq!(line, *want_line, "{text:?}"),
                other => panic!("expected format error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_analysis_is_located() {
        let text = "<S>\nev\tnotananalysis\n</S>\n";
        match read_corpus_str(text, ReadMode::Train, &tr()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn vocab_reserves_fixed_ids_and_assigns_densely() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 1, &mut stats).unwrap();
        let roots = v.table(Slot::Root);
        assert_eq!(roots.entry(0).value, "NULL");
        assert_eq!(roots.entry(1).value, "UNK");
        assert_eq!(roots.entry(2).value, "BOS");
        // First-occurrence order: ankara, dolar, dola, dol, ev, git.
        assert_eq!(roots.entry(3).value, "ankara");
        assert_eq!(roots.entry(4).value, "dolar");
        assert_eq!(roots.entry(5).value, "dola");
        assert_eq!(roots.entry(6).value, "dol");
        assert_eq!(roots.entry(7).value, "ev");
        assert_eq!(roots.entry(8).value, "git");
        assert_eq!(roots.len(), 9);
        // dolar appears twice (once per sentence), dola twice, ev twice.
        assert_eq!(roots.entry(4).count, 2);
        assert_eq!(roots.entry(5).count, 2);
        assert_eq!(roots.entry(7).count, 2);
        // All candidates count, not only gold: mainPos Verb appears 4 times.
        let pos = v.table(Slot::MainPos);
        assert_eq!(pos.id_of("Verb"), 4);
        assert_eq!(pos.entry(4).count, 4);
        assert_eq!(pos.entry(3).value, "Noun");
        assert_eq!(pos.entry(3).count, 5);
    }

    #[test]
    fn root_cutoff_diverts_to_unk() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 2, &mut stats).unwrap();
        let roots = v.table(Slot::Root);
        // Singletons ankara, dol, git fall below the cutoff.
        assert_eq!(roots.id_of("ankara"), UNK_ID);
        assert_eq!(roots.id_of("dol"), UNK_ID);
        assert_eq!(roots.id_of("git"), UNK_ID);
        assert_eq!(roots.entry(UNK_ID).count, 3);
        assert_eq!(roots.id_of("dolar"), 3);
        assert_eq!(roots.len(), 6); // 3 reserved + dolar, dola, ev
    }

    #[test]
    fn no_unk_when_cutoff_is_one() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 1, &mut stats).unwrap();
        for s in &ss {
            for t in &s.tokens {
                for c in &t.candidates {
                    let ids = v.bundle_to_ids(&extract_features(c, &tr(), &mut stats));
                    for slot in Slot::ALL {
                        assert_ne!(ids.get(slot), UNK_ID, "{} of {}", slot, c.raw);
                    }
                }
            }
        }
    }

    #[test]
    fn id_string_round_trip() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 1, &mut stats).unwrap();
        for slot in Slot::ALL {
            let t = v.table(slot);
            for id in RESERVED_IDS..t.len() as u32 {
                assert_eq!(t.id_of(&t.entry(id).value), id);
            }
        }
    }

    #[test]
    fn bundle_to_ids_maps_null_and_unseen() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 1, &mut stats).unwrap();
        let a = parse_analysis("zzz+Noun", &tr()).unwrap();
        let ids = v.bundle_to_ids(&extract_features(&a, &tr(), &mut stats));
        assert_eq!(ids.get(Slot::Root), UNK_ID);
        assert_ne!(ids.get(Slot::MainPos), UNK_ID);
        assert_eq!(ids.get(Slot::Tense), NULL_ID);
        assert_eq!(ids.get(Slot::Gender), NULL_ID); // inactive slot
        assert_eq!(IdBundle::bos().get(Slot::Root), BOS_ID);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let mut stats = TagStats::default();
        match Vocabularies::build(&[], &tr(), 1, &mut stats) {
            Err(CorpusError::EmptyCorpus) => {}
            other => panic!("expected EmptyCorpus, got {other:?}"),
        }
    }

    #[test]
    fn dump_lists_every_entry_in_order() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 1, &mut stats).unwrap();
        let dump = v.dump_string();
        let first: Vec<&str> = dump.lines().take(4).collect();
        assert_eq!(first[0], "root 0 0 NULL");
        assert_eq!(first[1], "root 1 0 UNK");
        assert_eq!(first[2], "root 2 0 BOS");
        assert_eq!(first[3], "root 3 1 ankara");
        let total: usize = Slot::ALL.iter().map(|&s| v.table(s).len()).sum();
        assert_eq!(dump.lines().count(), total);
    }

    #[test]
    fn parts_round_trip_preserves_tables_and_fingerprint() {
        let ss = read_corpus_str(FIXTURE, ReadMode::Train, &tr()).unwrap();
        let mut stats = TagStats::default();
        let v = Vocabularies::build(&ss, &tr(), 2, &mut stats).unwrap();
        let back = Vocabularies::from_parts(v.to_parts());
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn write_read_round_trip(
                sentences in proptest::collection::vec(
                    proptest::collection::vec(
                        proptest::collection::vec("[a-z]{1,6}\\+Noun|[a-z]{1,6}\\+Verb\\+Aorist", 1..3),
                        1..4),
                    1..4)
            ) {
                let cfg = tr();
                let mut text = String::new();
                for s in &sentences {
                    text.push_str("<S>\n");
                    for (i, cands) in s.iter().enumerate() {
                        // Dedupe candidates; the format rejects duplicates.
                        let mut seen = std::collections::HashSet::new();
                        let uniq: Vec<&String> =
                            cands.iter().filter(|c| seen.insert(c.as_str())).collect();
                        text.push_str(&format!("w{i}"));
                        for c in uniq {
                            text.push('\t');
                            text.push_str(c);
                        }
                        text.push('\n');
                    }
                    text.push_str("</S>\n");
                }
                let parsed = read_corpus_str(&text, ReadMode::Train, &cfg).unwrap();
                prop_assert_eq!(write_corpus_string(&parsed), text);
            }
        }
    }
}
