//! Morphological analyses and their reduction to fixed feature bundles.
//!
//! An analysis string is `root+Tag+Tag...` with derivational boundaries
//! (`^DB` by default) splitting the tags into inflectional groups:
//! `yürü+Verb+Pos^DB+Noun+Inf` is root `yürü` with groups `[Verb, Pos]` and
//! `[Noun, Inf]`. Feature extraction looks only at the last group — the one
//! that determines the word's final syntactic behavior — and folds every
//! earlier group into the single `prevTags` feature.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feature slots of a bundle, in the order their embeddings are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Slot {
    Root,
    MainPos,
    MinorPos,
    Person,
    Plurality,
    Gender,
    Possessive,
    CaseMarker,
    Polarity,
    Tense,
    PrevTags,
}

/// Number of slots in a bundle.
pub const NUM_SLOTS: usize = 11;

impl Slot {
    /// All slots in concatenation order.
    pub const ALL: [Slot; NUM_SLOTS] = [
        Slot::Root,
        Slot::MainPos,
        Slot::MinorPos,
        Slot::Person,
        Slot::Plurality,
        Slot::Gender,
        Slot::Possessive,
        Slot::CaseMarker,
        Slot::Polarity,
        Slot::Tense,
        Slot::PrevTags,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Name used in tagset config files and dumps.
    pub fn name(self) -> &'static str {
        match self {
            Slot::Root => "root",
            Slot::MainPos => "mainPos",
            Slot::MinorPos => "minorPos",
            Slot::Person => "person",
            Slot::Plurality => "plurality",
            Slot::Gender => "gender",
            Slot::Possessive => "possessive",
            Slot::CaseMarker => "caseMarker",
            Slot::Polarity => "polarity",
            Slot::Tense => "tense",
            Slot::PrevTags => "prevTags",
        }
    }

    pub fn from_name(name: &str) -> Option<Slot> {
        Slot::ALL.iter().copied().find(|s| s.name() == name)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One inflectional group: the tags between two derivational boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InflectionalGroup {
    pub tags: Vec<String>,
}

/// A parsed candidate analysis.
///
/// `raw` is kept verbatim: corpus round-trips and full-analysis accuracy are
/// defined over the original string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphAnalysis {
    pub raw: String,
    pub root: String,
    pub groups: Vec<InflectionalGroup>,
}

impl MorphAnalysis {
    /// Last inflectional group; parse guarantees at least one.
    pub fn last_group(&self) -> &InflectionalGroup {
        self.groups.last().expect("analysis has at least one group")
    }

    /// Reassembles the analysis string from its parts. Inverse of
    /// [`parse_analysis`]: equals `raw` for any successfully parsed input.
    pub fn reassemble(&self, boundary: &str) -> String {
        let mut out = self.root.clone();
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                out.push_str(boundary);
            }
            for t in &g.tags {
                out.push('+');
                out.push_str(t);
            }
        }
        out
    }
}

/// The feature bundle: one value per slot, `None` for absent (NULL).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureBundle {
    slots: [Option<String>; NUM_SLOTS],
}

impl FeatureBundle {
    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.slots[slot.index()].as_deref()
    }

    pub fn set(&mut self, slot: Slot, value: impl Into<String>) {
        self.slots[slot.index()] = Some(value.into());
    }

    pub fn clear(&mut self, slot: Slot) {
        self.slots[slot.index()] = None;
    }
}

impl fmt::Display for FeatureBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for slot in Slot::ALL {
            if let Some(v) = self.get(slot) {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{}={}", slot.name(), v)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Errors from analysis parsing.
#[derive(Debug, Error)]
pub enum MorphError {
    #[error("malformed analysis {raw:?}: {reason}")]
    MalformedAnalysis { raw: String, reason: String },
}

fn malformed(raw: &str, reason: impl Into<String>) -> MorphError {
    MorphError::MalformedAnalysis {
        raw: raw.to_string(),
        reason: reason.into(),
    }
}

/// Parses `root+Tag+...^DB+Tag+...` into root and inflectional groups.
///
/// Well-formed input has a non-empty root before the first `+`, at least one
/// tag, no empty tags, and every group after a boundary marker introduced by
/// `+`. [`MorphAnalysis::reassemble`] reproduces the input exactly.
pub fn parse_analysis(raw: &str, cfg: &TagsetConfig) -> Result<MorphAnalysis, MorphError> {
    let segments: Vec<&str> = raw.split(cfg.boundary.as_str()).collect();
    let first = segments[0];
    let plus = first
        .find('+')
        .ok_or_else(|| malformed(raw, "no '+' between root and tags"))?;
    if plus == 0 {
        return Err(malformed(raw, "empty root"));
    }
    let root = &first[..plus];
    let mut groups = Vec::with_capacity(segments.len());
    for (i, segment) in segments.iter().enumerate() {
        let body = if i == 0 { &first[plus..] } else { *segment };
        if !body.starts_with('+') {
            return Err(malformed(raw, "inflectional group does not start with '+'"));
        }
        let tags: Vec<String> = body[1..].split('+').map(str::to_string).collect();
        if tags.iter().any(String::is_empty) {
            return Err(malformed(raw, "empty tag"));
        }
        groups.push(InflectionalGroup { tags });
    }
    Ok(MorphAnalysis {
        raw: raw.to_string(),
        root: root.to_string(),
        groups,
    })
}

/// Counters for feature-extraction anomalies.
///
/// `ignored`: tags with no mapping in the tagset, or whose slot is inactive
/// for the language. `collisions`: a second tag mapped to an already-filled
/// slot (the later tag wins).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStats {
    pub ignored: BTreeMap<String, u64>,
    pub collisions: u64,
}

impl TagStats {
    pub fn total_ignored(&self) -> u64 {
        self.ignored.values().sum()
    }
}

/// Reduces an analysis to its feature bundle under `cfg`.
///
/// Only the last inflectional group contributes mapped features; when the
/// analysis has more than one group and `prevTags` is active, the tags of all
/// earlier groups are joined with `+` into the `prevTags` value. Unmapped or
/// inactive-slot tags are counted in `stats` and otherwise ignored; when two
/// tags fill the same slot the last one wins and a collision is counted.
pub fn extract_features(
    a: &MorphAnalysis,
    cfg: &TagsetConfig,
    stats: &mut TagStats,
) -> FeatureBundle {
    let mut bundle = FeatureBundle::default();
    bundle.set(Slot::Root, a.root.clone());
    for tag in &a.last_group().tags {
        match cfg.mapping(tag) {
            Some((slot, value)) if cfg.is_active(slot) => {
                if bundle.get(slot).is_some() {
                    stats.collisions += 1;
                }
                bundle.set(slot, value.to_string());
            }
            _ => {
                *stats.ignored.entry(tag.clone()).or_insert(0) += 1;
            }
        }
    }
    if a.groups.len() > 1 && cfg.is_active(Slot::PrevTags) {
        let joined: Vec<&str> = a.groups[..a.groups.len() - 1]
            .iter()
            .flat_map(|g| g.tags.iter().map(String::as_str))
            .collect();
        bundle.set(Slot::PrevTags, joined.join("+"));
    }
    bundle
}

/// Errors from tagset config files.
#[derive(Debug, Error)]
pub enum TagsetError {
    #[error("tagset line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("failed to read tagset file: {0}")]
    Io(#[from] std::io::Error),
}

fn cfg_err(line: usize, msg: impl Into<String>) -> TagsetError {
    TagsetError::Config {
        line,
        msg: msg.into(),
    }
}

/// Per-language tagset: which slots are active and how tags map to slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagsetConfig {
    pub language: String,
    /// Derivational boundary marker inside analysis strings.
    pub boundary: String,
    active: Vec<Slot>,
    /// tag -> (slot, normalized value). `BTreeMap` keeps serialization stable.
    map: BTreeMap<String, (Slot, String)>,
}

impl TagsetConfig {
    /// Active slots, in concatenation order. Always contains root and mainPos.
    pub fn active_slots(&self) -> &[Slot] {
        &self.active
    }

    pub fn is_active(&self, slot: Slot) -> bool {
        self.active.contains(&slot)
    }

    pub fn mapping(&self, tag: &str) -> Option<(Slot, &str)> {
        self.map.get(tag).map(|(s, v)| (*s, v.as_str()))
    }

    /// Tags that map to the main POS slot.
    pub fn main_pos_set(&self) -> HashSet<&str> {
        self.map
            .iter()
            .filter(|(_, (s, _))| *s == Slot::MainPos)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<TagsetConfig, TagsetError> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Bundled configs: `tr`, `de`, `fr` (see `configs/`).
    pub fn builtin(lang: &str) -> Option<TagsetConfig> {
        let text = match lang {
            "tr" => include_str!("../configs/tr.tagset"),
            "de" => include_str!("../configs/de.tagset"),
            "fr" => include_str!("../configs/fr.tagset"),
            _ => return None,
        };
        Some(text.parse().expect("bundled tagset must parse"))
    }
}

/// Parses the directive format:
///
/// ```text
/// lang tr
/// boundary ^DB
/// active root mainPos person ...
/// map Noun mainPos
/// map Pos polarity Positive
/// ```
///
/// `#` starts a comment; blank lines are skipped. `root` and `mainPos`
/// are implicitly active. `map` values default to the tag itself.
impl std::str::FromStr for TagsetConfig {
    type Err = TagsetError;

    fn from_str(text: &str) -> Result<TagsetConfig, TagsetError> {
        let mut language = None;
        let mut boundary = None;
        let mut active: HashSet<Slot> = [Slot::Root, Slot::MainPos].into_iter().collect();
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let directive = fields.next().unwrap();
            match directive {
                "lang" => {
                    let v = fields
                        .next()
                        .ok_or_else(|| cfg_err(lineno, "lang needs a value"))?;
                    if language.replace(v.to_string()).is_some() {
                        return Err(cfg_err(lineno, "duplicate lang directive"));
                    }
                }
                "boundary" => {
                    let v = fields
                        .next()
                        .ok_or_else(|| cfg_err(lineno, "boundary needs a value"))?;
                    if boundary.replace(v.to_string()).is_some() {
                        return Err(cfg_err(lineno, "duplicate boundary directive"));
                    }
                }
                "active" => {
                    for name in fields.by_ref() {
                        let slot = Slot::from_name(name)
                            .ok_or_else(|| cfg_err(lineno, format!("unknown slot {name:?}")))?;
                        active.insert(slot);
                    }
                }
                "map" => {
                    let tag = fields
                        .next()
                        .ok_or_else(|| cfg_err(lineno, "map needs a tag"))?;
                    let slot_name = fields
                        .next()
                        .ok_or_else(|| cfg_err(lineno, "map needs a slot"))?;
                    let slot = Slot::from_name(slot_name)
                        .ok_or_else(|| cfg_err(lineno, format!("unknown slot {slot_name:?}")))?;
                    if matches!(slot, Slot::Root | Slot::PrevTags) {
                        return Err(cfg_err(lineno, format!("tags cannot map to {slot}")));
                    }
                    let value = fields.next().unwrap_or(tag);
                    if tag.contains('+') {
                        return Err(cfg_err(lineno, "tags cannot contain '+'"));
                    }
                    if map
                        .insert(tag.to_string(), (slot, value.to_string()))
                        .is_some()
                    {
                        return Err(cfg_err(lineno, format!("tag {tag:?} mapped twice")));
                    }
                }
                other => return Err(cfg_err(lineno, format!("unknown directive {other:?}"))),
            }
            if let Some(extra) = fields.next() {
                return Err(cfg_err(
                    lineno,
                    format!("unexpected trailing field {extra:?}"),
                ));
            }
        }
        let active: Vec<Slot> = Slot::ALL
            .into_iter()
            .filter(|s| active.contains(s))
            .collect();
        Ok(TagsetConfig {
            language: language.unwrap_or_else(|| "und".to_string()),
            boundary: boundary.unwrap_or_else(|| "^DB".to_string()),
            active,
            map,
        })
    }
}
