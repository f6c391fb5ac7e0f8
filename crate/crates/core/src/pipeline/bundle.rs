use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{PipelineConfig, PipelineOutput};
use crate::actantial::{
    close_reading, ActantEdge, ActantialNetwork, ConflictEdge, ConflictMode, CrossIssueReport, RecurringActant,
};
use crate::corpus::{write_user_camps, CampLabel, Corpus, TweetRecord};
use crate::export::GraphDocument;
use crate::opinion::export_partitions;

pub const BUNDLE_FORMAT: &str = "actnet-bundle/1";
const MANIFEST: &str = "manifest.json";
const ANNOTATIONS: &str = "annotations.jsonl";
/// Present while a bundle is being written; a directory holding it is partial
/// output and not authoritative.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("bundle in {0} is incomplete (an earlier write did not finish)")]
    Incomplete(String),
    #[error("unsupported bundle format {0:?}")]
    Format(String),
    #[error("bundle file {0} is listed in the manifest but missing")]
    Missing(String),
    #[error("bundle file {0} does not match its manifest digest")]
    Corrupt(String),
    #[error("edge {edge_id} cites tweet {tweet_id}, which is not in the bundle")]
    DanglingTweet { edge_id: String, tweet_id: String },
    #[error("unknown issue {0:?}")]
    UnknownIssue(String),
    #[error("unknown network kind {0:?}")]
    UnknownKind(String),
    #[error("unknown edge {0:?}")]
    UnknownEdge(String),
    #[error("annotation rejected: {0}")]
    BadAnnotation(String),
    #[error(transparent)]
    Actantial(#[from] crate::actantial::ActantialError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config_digest: String,
    /// Relative path -> sha256 of the file content.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueEntry {
    pub issue: String,
    pub slug: String,
    pub trends: Vec<String>,
    pub tweets: usize,
    pub identity_min_weight: f64,
    pub conflict_min_weight: f64,
    pub conflict_mode: ConflictMode,
    /// Centrality-filtered node set used for the conflict network.
    pub central_nodes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NetworkKind {
    Identity,
    Conflict,
    FullLeft,
    FullRight,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 4] =
        [NetworkKind::Identity, NetworkKind::Conflict, NetworkKind::FullLeft, NetworkKind::FullRight];

    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Identity => "identity",
            NetworkKind::Conflict => "conflict",
            NetworkKind::FullLeft => "full-left",
            NetworkKind::FullRight => "full-right",
        }
    }
}

impl FromStr for NetworkKind {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NetworkKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| BundleError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub edge_id: String,
    pub note: String,
    pub author: String,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("bundle values serialize");
    s.push('\n');
    s
}

fn jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("bundle values serialize"));
        s.push('\n');
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Settings as recorded in the bundle: the digest input, without locations.
pub(super) fn recorded_config(config: &PipelineConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
        if let Some(llm) = obj.get_mut("llm").and_then(|l| l.as_object_mut()) {
            llm.remove("base_url");
            llm.remove("cache_dir");
            llm.remove("max_in_flight");
            llm.remove("timeout_secs");
        }
    }
    v
}

pub(super) fn write_bundle(out: &PipelineOutput, config: &PipelineConfig, dir: &Path) -> Result<(), BundleError> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    files.insert("config.json".into(), json(&recorded_config(config)));
    files.insert("camps.tsv".into(), write_user_camps(&out.camps));
    let mut tc = String::from("tweet_id\tcamp\tleft_retweeters\tright_retweeters\n");
    for (id, camp) in &out.tweet_camps.labels {
        let (l, r) = out.tweet_camps.provenance.get(id).copied().unwrap_or_default();
        tc.push_str(&format!("{id}\t{camp}\t{l}\t{r}\n"));
    }
    files.insert("tweet_camps.tsv".into(), tc);
    files.insert("partitions.tsv".into(), export_partitions(&out.partitions));
    files.insert("alignment.tsv".into(), out.alignment.export());
    files.insert("issue_alignment.tsv".into(), out.issue_alignment.export());
    files.insert("prominent_users.json".into(), json(&out.prominent));
    files.insert("signals.jsonl".into(), jsonl(out.instances.values()));
    files.insert("labels.jsonl".into(), jsonl(&out.labels));
    files.insert("tweets.jsonl".into(), jsonl(out.corpus.tweets()));
    files.insert("issues.json".into(), json(&out.issues.iter().map(|r| &r.entry).collect::<Vec<_>>()));
    files.insert("cross_issue.json".into(), json(&out.cross_issue));
    files.insert("close_reading.json".into(), json(&out.close_reading));
    for r in &out.issues {
        let base = format!("networks/{}", r.entry.slug);
        files.insert(format!("{base}/left.json"), json(&r.left));
        files.insert(format!("{base}/right.json"), json(&r.right));
        files.insert(format!("{base}/full-left.json"), GraphDocument::from_network(&r.left, "full-left").to_json());
        files.insert(format!("{base}/full-right.json"), GraphDocument::from_network(&r.right, "full-right").to_json());
        files.insert(format!("{base}/identity.json"), r.identity.to_json());
        files.insert(format!("{base}/conflict.json"), r.conflict.to_json());
        files.insert(format!("{base}/conflict_edges.json"), json(&r.conflict_edges));
    }

    fs::create_dir_all(dir).map_err(io(dir))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "partial output, not authoritative\n").map_err(io(&marker))?;
    let old_manifest = dir.join(MANIFEST);
    if old_manifest.exists() {
        fs::remove_file(&old_manifest).map_err(io(&old_manifest))?;
    }
    let networks = dir.join("networks");
    if networks.exists() {
        fs::remove_dir_all(&networks).map_err(io(&networks))?;
    }
    let mut manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: out.config_digest.clone(),
        files: BTreeMap::new(),
    };
    for (name, body) in &files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, body).map_err(io(&path))?;
        manifest.files.insert(name.clone(), sha256_hex(body.as_bytes()));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, json(&manifest)).map_err(io(&path))?;
    fs::remove_file(&marker).map_err(io(&marker))
}

fn read(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(io(path))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, BundleError> {
    serde_json::from_str(text)
        .map_err(|e| BundleError::Parse { path: path.display().to_string(), message: e.to_string() })
}

/// A verified bundle loaded for read-only analysis.
#[derive(Debug)]
pub struct AnalysisBundle {
    dir: PathBuf,
    pub manifest: Manifest,
    pub issues: Vec<IssueEntry>,
    pub networks: BTreeMap<(String, CampLabel), ActantialNetwork>,
    pub documents: BTreeMap<(String, NetworkKind), GraphDocument>,
    pub conflicts: BTreeMap<String, Vec<ConflictEdge>>,
    pub cross_issue: CrossIssueReport,
    pub corpus: Corpus,
    edge_index: BTreeMap<String, (String, CampLabel, String, String)>,
}

impl AnalysisBundle {
    /// Reads `dir`, checking every manifest digest and that every tweet cited
    /// by an edge is present.
    pub fn load(dir: &Path) -> Result<AnalysisBundle, BundleError> {
        if dir.join(INCOMPLETE_MARKER).exists() {
            return Err(BundleError::Incomplete(dir.display().to_string()));
        }
        let mpath = dir.join(MANIFEST);
        let manifest: Manifest = parse_json(&mpath, &read(&mpath)?)?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(BundleError::Format(manifest.format));
        }
        let mut texts: BTreeMap<&str, String> = BTreeMap::new();
        for (name, digest) in &manifest.files {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => BundleError::Missing(name.clone()),
                _ => BundleError::Io { path: path.display().to_string(), source: e },
            })?;
            if &sha256_hex(&bytes) != digest {
                return Err(BundleError::Corrupt(name.clone()));
            }
            let text = String::from_utf8(bytes).map_err(|_| BundleError::Corrupt(name.clone()))?;
            texts.insert(name.as_str(), text);
        }
        let get = |name: &str| -> Result<(&str, PathBuf), BundleError> {
            let t = texts.get(name).ok_or_else(|| BundleError::Missing(name.to_string()))?;
            Ok((t.as_str(), dir.join(name)))
        };

        let (t, p) = get("issues.json")?;
        let issues: Vec<IssueEntry> = parse_json(&p, t)?;
        let (t, p) = get("cross_issue.json")?;
        let cross_issue: CrossIssueReport = parse_json(&p, t)?;
        let (t, p) = get("tweets.jsonl")?;
        let mut records = Vec::new();
        for line in t.lines().filter(|l| !l.trim().is_empty()) {
            records.push(parse_json::<TweetRecord>(&p, line)?);
        }
        let corpus = Corpus::from_records(records, None)
            .map_err(|e| BundleError::Parse { path: p.display().to_string(), message: e.to_string() })?;

        let mut networks = BTreeMap::new();
        let mut documents = BTreeMap::new();
        let mut conflicts = BTreeMap::new();
        let mut edge_index = BTreeMap::new();
        for entry in &issues {
            let base = format!("networks/{}", entry.slug);
            for (camp, file) in [(CampLabel::Left, "left.json"), (CampLabel::Right, "right.json")] {
                let (t, p) = get(&format!("{base}/{file}"))?;
                let net: ActantialNetwork = parse_json(&p, t)?;
                for e in net.edges() {
                    for id in e.tweet_ids() {
                        if corpus.get(id).is_none() {
                            return Err(BundleError::DanglingTweet { edge_id: e.id.clone(), tweet_id: id.to_string() });
                        }
                    }
                    edge_index.insert(e.id.clone(), (entry.issue.clone(), camp, e.source.clone(), e.target.clone()));
                }
                networks.insert((entry.issue.clone(), camp), net);
            }
            for kind in NetworkKind::ALL {
                let (t, p) = get(&format!("{base}/{}.json", kind.as_str()))?;
                documents.insert((entry.issue.clone(), kind), parse_json(&p, t)?);
            }
            let (t, p) = get(&format!("{base}/conflict_edges.json"))?;
            conflicts.insert(entry.issue.clone(), parse_json(&p, t)?);
        }
        Ok(AnalysisBundle {
            dir: dir.to_path_buf(),
            manifest,
            issues,
            networks,
            documents,
            conflicts,
            cross_issue,
            corpus,
            edge_index,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Looks an issue up by its label or slug.
    pub fn issue(&self, name: &str) -> Result<&IssueEntry, BundleError> {
        self.issues
            .iter()
            .find(|e| e.issue == name || e.slug == name)
            .ok_or_else(|| BundleError::UnknownIssue(name.to_string()))
    }

    pub fn document(&self, issue: &str, kind: NetworkKind) -> Result<&GraphDocument, BundleError> {
        let entry = self.issue(issue)?;
        self.documents.get(&(entry.issue.clone(), kind)).ok_or_else(|| BundleError::UnknownIssue(issue.to_string()))
    }

    pub fn edge(&self, edge_id: &str) -> Result<&ActantEdge, BundleError> {
        let (issue, camp, s, t) =
            self.edge_index.get(edge_id).ok_or_else(|| BundleError::UnknownEdge(edge_id.to_string()))?;
        self.networks
            .get(&(issue.clone(), *camp))
            .and_then(|n| n.edge(s, t))
            .ok_or_else(|| BundleError::UnknownEdge(edge_id.to_string()))
    }

    pub fn edge_tweets(&self, edge_id: &str, k: usize) -> Result<Vec<&TweetRecord>, BundleError> {
        Ok(close_reading(self.edge(edge_id)?, &self.corpus, k)?)
    }

    /// Recurring-actant entries for `label` in every camp where it recurs.
    pub fn cross_issue_for(&self, label: &str) -> BTreeMap<CampLabel, &RecurringActant> {
        self.cross_issue
            .camps
            .iter()
            .filter_map(|(camp, list)| list.iter().find(|a| a.actant == label).map(|a| (*camp, a)))
            .collect()
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.dir.join(ANNOTATIONS)
    }

    /// Appends one annotation line. The edge must exist.
    pub fn append_annotation(&self, annotation: &Annotation) -> Result<(), BundleError> {
        self.edge(&annotation.edge_id)?;
        if annotation.note.trim().is_empty() {
            return Err(BundleError::BadAnnotation("note is empty".into()));
        }
        let path = self.annotations_path();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
        let mut line = serde_json::to_string(annotation).expect("annotation serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io(&path))
    }

    /// Stored annotations in insertion order, optionally for one edge only.
    pub fn annotations(&self, edge_id: Option<&str>) -> Result<Vec<Annotation>, BundleError> {
        let path = self.annotations_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(BundleError::Io { path: path.display().to_string(), source: e }),
        };
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let a: Annotation = parse_json(&path, line)?;
            if edge_id.is_none_or(|id| a.edge_id == id) {
                out.push(a);
            }
        }
        Ok(out)
    }
}
