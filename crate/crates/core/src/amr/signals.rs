use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AmrGraph, SentenceMeta, Target};

/// One agent -> patient narrative signal from a single sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub instance_id: String,
    pub tweet_id: String,
    pub sentence_index: u32,
    pub agent: String,
    pub patient: String,
    pub frame: String,
    pub negated: bool,
    pub agent_raw: String,
    pub patient_raw: String,
}

#[derive(Debug, Error)]
pub enum AliasError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected surface<TAB>canonical")]
    Malformed { line: usize },
    #[error("canonical label {canonical:?} is itself an alias of {target:?}")]
    NotClosed { canonical: String, target: String },
}

/// Case-insensitive surface form -> canonical actant label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    map: BTreeMap<String, String>,
}

impl AliasMap {
    /// Keys and values are normalized on insert. Fails when a canonical label
    /// is a key mapping elsewhere, since lookups would then not be idempotent.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, AliasError> {
        let map: BTreeMap<String, String> = pairs
            .into_iter()
            .map(|(k, v)| (clean_label(k), clean_label(v)))
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .collect();
        for canonical in map.values() {
            if let Some(target) = map.get(canonical) {
                if target != canonical {
                    return Err(AliasError::NotClosed { canonical: canonical.clone(), target: target.clone() });
                }
            }
        }
        Ok(AliasMap { map })
    }

    /// Tab-separated `surface<TAB>canonical` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, AliasError> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with("# ") || t == "#" {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or(AliasError::Malformed { line: idx + 1 })?;
            pairs.push((k, v));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, AliasError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| AliasError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn lookup(&self, cleaned: String) -> String {
        match self.map.get(&cleaned) {
            Some(v) => v.clone(),
            None => cleaned,
        }
    }
}

fn clean_label(label: &str) -> String {
    let lower = label.to_lowercase();
    let stripped = lower.trim_start_matches(|c: char| c == '#' || c == '@' || c.is_whitespace());
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercases, strips leading `#`/`@`, collapses whitespace, then applies the
/// alias map once.
pub fn normalize_actant(label: &str, aliases: &AliasMap) -> String {
    aliases.lookup(clean_label(label))
}

fn unquote(c: &str) -> &str {
    c.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(c)
}

/// Surface label of an argument: joined `:opN` constants of its `:name`
/// child if there is one, else its concept.
fn argument_label(graph: &AmrGraph, target: &Target) -> String {
    let var = match target {
        Target::Const(c) => return unquote(c).to_string(),
        Target::Var(v) => v,
    };
    let name_var = graph.children(var).into_iter().find_map(|e| match (&e.role[..], &e.target) {
        ("name", Target::Var(n)) => Some(n.clone()),
        _ => None,
    });
    if let Some(n) = name_var {
        let mut ops: Vec<(u32, &str)> = graph
            .children(&n)
            .into_iter()
            .filter_map(|e| {
                let idx = e.role.strip_prefix("op")?.parse().ok()?;
                match &e.target {
                    Target::Const(c) => Some((idx, unquote(c))),
                    Target::Var(_) => None,
                }
            })
            .collect();
        ops.sort_by_key(|(i, _)| *i);
        if !ops.is_empty() {
            return ops.iter().map(|(_, s)| *s).collect::<Vec<_>>().join(" ");
        }
    }
    let concept = graph.concept(var).unwrap_or_default();
    strip_sense(concept).to_string()
}

/// `protect-01` -> `protect`. Only `-0N` and `-91` count as senses, so
/// labels such as `covid-19` are kept.
fn strip_sense(concept: &str) -> &str {
    match concept.rsplit_once('-') {
        Some((stem, sense)) if !stem.is_empty() && matches!(sense.as_bytes(), [b'0', b'1'..=b'9'] | b"91") => stem,
        _ => concept,
    }
}

/// One instance per node carrying both `:ARG0` and `:ARG1`, in canonical
/// depth-first order. Instances whose normalized agent or patient is empty
/// are skipped.
pub fn extract_signals(graph: &AmrGraph, meta: &SentenceMeta, aliases: &AliasMap) -> Vec<RelationInstance> {
    let mut out = Vec::new();
    for var in graph.dfs_order() {
        let children = graph.children(var);
        let arg = |role: &str| children.iter().find(|e| e.role == role).map(|e| &e.target);
        let (Some(a0), Some(a1)) = (arg("ARG0"), arg("ARG1")) else { continue };
        let negated = children.iter().any(|e| e.role == "polarity" && e.target == Target::Const("-".into()));
        let agent_raw = argument_label(graph, a0);
        let patient_raw = argument_label(graph, a1);
        let agent = normalize_actant(&agent_raw, aliases);
        let patient = normalize_actant(&patient_raw, aliases);
        let frame = graph.concept(var).unwrap_or_default().to_string();
        if agent.is_empty() || patient.is_empty() || frame.is_empty() {
            continue;
        }
        out.push(RelationInstance {
            instance_id: format!("{}.{}.{}", meta.tweet_id, meta.sentence_index, out.len()),
            tweet_id: meta.tweet_id.clone(),
            sentence_index: meta.sentence_index,
            agent,
            patient,
            frame,
            negated,
            agent_raw,
            patient_raw,
        });
    }
    out
}
