//! Supportive / conflictive / neutral labels for narrative signals.
//!
//! Two labelers share one output type: a context-free verb-family lexicon
//! ([`label_cfd`]) and a prompted chat-completion model ([`llm`]).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::RelationInstance;

pub mod llm;
mod prompt;

pub use prompt::{build_prompt, PROMPT_TEMPLATE};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("frame {frame:?} listed in both {first} and {second}")]
    DuplicateFrame { frame: String, first: String, second: String },
    #[error("empty prompt argument: {0}")]
    EmptyArgument(&'static str),
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no labels to compare")]
    NoLabels,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationType {
    Supportive,
    Conflictive,
    Neutral,
}

impl RelationType {
    pub const ALL: [RelationType; 3] = [RelationType::Supportive, RelationType::Conflictive, RelationType::Neutral];

    pub fn value(self) -> f64 {
        match self {
            RelationType::Supportive => 1.0,
            RelationType::Conflictive => -1.0,
            RelationType::Neutral => 0.0,
        }
    }

    /// Swaps supportive and conflictive; neutral is unchanged.
    pub fn negate(self) -> RelationType {
        match self {
            RelationType::Supportive => RelationType::Conflictive,
            RelationType::Conflictive => RelationType::Supportive,
            RelationType::Neutral => RelationType::Neutral,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Supportive => "supportive",
            RelationType::Conflictive => "conflictive",
            RelationType::Neutral => "neutral",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supportive" => Ok(RelationType::Supportive),
            "conflictive" => Ok(RelationType::Conflictive),
            "neutral" => Ok(RelationType::Neutral),
            other => Err(format!("unknown relation type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LabelSource {
    Cfd,
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRelation {
    pub instance_id: String,
    pub relation_type: RelationType,
    pub description: String,
    pub source: LabelSource,
    pub fallback_used: bool,
    /// Set by the lexicon labeler when the frame is in no family.
    #[serde(default)]
    pub unknown_frame: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    families: BTreeMap<String, FamilyEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyEntry {
    category: RelationType,
    frames: Vec<String>,
}

/// Verb families with a fixed relation category, indexed by frame.
#[derive(Debug, Clone, Default)]
pub struct VerbLexicon {
    families: BTreeMap<String, RelationType>,
    frame_family: BTreeMap<String, String>,
}

const BUILTIN_LEXICON: &str = include_str!("../../data/verb_lexicon.toml");

impl VerbLexicon {
    /// Parses the TOML lexicon format (`[families.NAME] category, frames`).
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let file: LexiconFile = toml::from_str(text).map_err(|e| LabelError::Lexicon(e.to_string()))?;
        let mut lex = VerbLexicon::default();
        for (family, entry) in file.families {
            for frame in entry.frames {
                let frame = frame.trim().to_lowercase();
                if let Some(first) = lex.frame_family.get(&frame) {
                    return Err(LabelError::DuplicateFrame { frame, first: first.clone(), second: family });
                }
                lex.frame_family.insert(frame, family.clone());
            }
            lex.families.insert(family, entry.category);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LabelError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON).expect("bundled lexicon parses")
    }

    /// Family of a frame: exact match first, then the bare lemma with its
    /// sense suffix (`-01`) removed.
    pub fn family(&self, frame: &str) -> Option<&str> {
        let frame = frame.trim().to_lowercase();
        self.frame_family.get(&frame).or_else(|| self.frame_family.get(lemma(&frame))).map(String::as_str)
    }

    pub fn category(&self, frame: &str) -> Option<RelationType> {
        self.family(frame).and_then(|f| self.families.get(f).copied())
    }
}

fn lemma(frame: &str) -> &str {
    match frame.rsplit_once('-') {
        Some((head, sense)) if !head.is_empty() && sense.chars().all(|c| c.is_ascii_digit()) => head,
        _ => frame,
    }
}

/// Lexicon label of the instance frame; negated instances swap supportive
/// and conflictive. Unknown frames are neutral and flagged.
pub fn label_cfd(instance: &RelationInstance, lexicon: &VerbLexicon) -> LabeledRelation {
    let category = lexicon.category(&instance.frame);
    let mut relation_type = category.unwrap_or(RelationType::Neutral);
    if instance.negated {
        relation_type = relation_type.negate();
    }
    let mut description = lemma(&instance.frame).replace('-', " ");
    if instance.negated {
        description = format!("not {description}");
    }
    LabeledRelation {
        instance_id: instance.instance_id.clone(),
        relation_type,
        description,
        source: LabelSource::Cfd,
        fallback_used: false,
        unknown_frame: category.is_none(),
    }
}

/// Fraction of positions where both label vectors agree.
pub fn agreement(a: &[RelationType], b: &[RelationType]) -> Result<f64, LabelError> {
    if a.len() != b.len() {
        return Err(LabelError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(LabelError::NoLabels);
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Reads `instance_id<TAB>relation_type` annotation lines.
pub fn parse_annotations(text: &str) -> Result<BTreeMap<String, RelationType>, LabelError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (id, label) = t
            .split_once('\t')
            .ok_or(LabelError::Malformed { line: idx + 1, message: "expected instance_id<TAB>relation_type".into() })?;
        let label = label.parse().map_err(|message| LabelError::Malformed { line: idx + 1, message })?;
        out.insert(id.trim().to_string(), label);
    }
    Ok(out)
}

/// Agreement of `labels` with human annotations over the instance ids both
/// share, with the number of compared items.
pub fn agreement_with_annotations(
    labels: &[LabeledRelation],
    human: &BTreeMap<String, RelationType>,
) -> Result<(f64, usize), LabelError> {
    let mut ours = Vec::new();
    let mut theirs = Vec::new();
    for l in labels {
        if let Some(h) = human.get(&l.instance_id) {
            ours.push(l.relation_type);
            theirs.push(*h);
        }
    }
    Ok((agreement(&ours, &theirs)?, ours.len()))
}
