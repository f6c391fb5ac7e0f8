//! End-to-end driver: corpus -> opinion camps -> signals -> labels ->
//! actantial networks, written as a self-describing bundle directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actantial::{
    build_network, centrality_rank, close_reading, conflict_networks, cross_issue_actants, ego_network,
    merge_identity_networks, ActantialError, ActantialNetwork, ConflictEdge, ConflictMode, ContributionRule,
    CrossIssueReport, Curation, ThresholdPreset,
};
use crate::amr::{extract_signals, index_by_id, parse_amr_file, AliasError, AliasMap, AmrError, RelationInstance};
use crate::corpus::{
    assign_tweet_camps, load_trends, load_user_camps, merge_trends_with_map, parse_corpus, CampLabel, Corpus,
    CorpusError, CorpusPartition, TrendRecord,
};
use crate::export::GraphDocument;
use crate::labeling::llm::{ChatTransport, HttpTransport, LlmEndpointConfig, LlmError, LlmLabeler};
use crate::labeling::{label_cfd, LabelError, LabeledRelation, VerbLexicon};
use crate::opinion::modularity::SearchParams;
use crate::opinion::{
    build_retweet_network, global_camps, issue_alignment, issue_stances, prominent_users, user_alignment,
    AlignmentMatrix, Bipartitioner, IssueAlignmentMatrix, ModularityBipartitioner, OpinionError, ProminentUsers,
    RetweetNetwork, TrendPartition, DEFAULT_MIN_COOCCUR,
};

mod bundle;

pub use bundle::{
    AnalysisBundle, Annotation, BundleError, IssueEntry, Manifest, NetworkKind, BUNDLE_FORMAT, INCOMPLETE_MARKER,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown issue {0:?}")]
    UnknownIssue(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Opinion(#[from] OpinionError),
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error(transparent)]
    Alias(#[from] AliasError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Actantial(#[from] ActantialError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("tweet {tweet_id} references AMR graph {amr_ref:?}, which is not in the side files")]
    MissingAmr { tweet_id: String, amr_ref: String },
    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Name of the stage that failed, when known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The error underneath any stage wrapper.
    pub fn cause(&self) -> &PipelineError {
        match self {
            PipelineError::Stage { source, .. } => source.cause(),
            other => other,
        }
    }
}

fn at(stage: &'static str) -> impl FnOnce(PipelineError) -> PipelineError {
    move |e| match e {
        e @ PipelineError::Stage { .. } => e,
        e => PipelineError::Stage { stage, source: Box::new(e) },
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelerKind {
    #[default]
    Cfd,
    Llm,
}

impl std::str::FromStr for LabelerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cfd" => Ok(LabelerKind::Cfd),
            "llm" => Ok(LabelerKind::Llm),
            other => Err(format!("unknown labeler {other:?}")),
        }
    }
}

/// Everything a pipeline run depends on. Relative paths resolve against
/// `base_dir` (the directory of the config file when loaded from disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub trends: PathBuf,
    pub amr: Vec<PathBuf>,
    pub aliases: Option<PathBuf>,
    /// `user<TAB>left|right` lines naming the two camps.
    pub camp_seeds: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Issues to analyse; empty means every issue in the trend table.
    pub issues: Vec<String>,
    pub seed: u64,
    pub trend_merge_window_days: Option<i64>,
    /// Trends whose retweet network has fewer nodes are not clustered.
    pub min_trend_nodes: usize,
    pub min_cooccur: u32,
    pub restarts: usize,
    pub prominent_k: usize,
    pub contribution_offset: u64,
    pub identity_node: String,
    /// Overrides the per-issue preset when set.
    pub identity_min_weight: Option<f64>,
    /// Overrides the per-issue preset when set.
    pub conflict_min_weight: Option<f64>,
    pub conflict_mode: ConflictMode,
    pub centrality_k: usize,
    pub curation: Curation,
    pub close_reading_k: usize,
    pub cross_issue_min: usize,
    pub labeler: LabelerKind,
    pub llm: LlmEndpointConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: "tweets.jsonl".into(),
            trends: "trends.jsonl".into(),
            amr: vec!["amr.txt".into()],
            aliases: None,
            camp_seeds: "camp_seeds.tsv".into(),
            lexicon: None,
            output_dir: "bundle".into(),
            issues: Vec::new(),
            seed: 1,
            trend_merge_window_days: None,
            min_trend_nodes: 50,
            min_cooccur: DEFAULT_MIN_COOCCUR,
            restarts: SearchParams::default().restarts,
            prominent_k: 10,
            contribution_offset: 1,
            identity_node: "we".into(),
            identity_min_weight: None,
            conflict_min_weight: None,
            conflict_mode: ConflictMode::Literal,
            centrality_k: 100,
            curation: Curation::default(),
            close_reading_k: 5,
            cross_issue_min: 2,
            labeler: LabelerKind::Cfd,
            llm: LlmEndpointConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| PipelineError::Config { path: base_dir.display().to_string(), message: e.to_string() })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        Self::parse(&text, &base).map_err(|e| match e {
            PipelineError::Config { message, .. } => {
                PipelineError::Config { path: path.display().to_string(), message }
            }
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Digest of every setting that can change bundle content. Output and
    /// cache locations are excluded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&bundle::recorded_config(self)).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Invalid(m.to_string()));
        if self.min_cooccur == 0 {
            return bad("min_cooccur must be at least 1");
        }
        if self.centrality_k == 0 {
            return bad("centrality_k must be at least 1");
        }
        if self.contribution_offset > 1 {
            return bad("contribution_offset must be 0 or 1");
        }
        if self.identity_node.trim().is_empty() {
            return bad("identity_node is empty");
        }
        for w in [self.identity_min_weight, self.conflict_min_weight].into_iter().flatten() {
            if !(w >= 0.0) {
                return bad("weight thresholds must be non-negative");
            }
        }
        if let Some(d) = self.trend_merge_window_days {
            if d < 0 {
                return bad("trend_merge_window_days must be non-negative");
            }
        }
        if self.labeler == LabelerKind::Llm {
            self.llm.validate()?;
        }
        Ok(())
    }

    fn thresholds(&self, issue: &str) -> ThresholdPreset {
        let preset = ThresholdPreset::for_issue(issue);
        ThresholdPreset {
            identity_min_weight: self.identity_min_weight.unwrap_or(preset.identity_min_weight),
            conflict_min_weight: self.conflict_min_weight.unwrap_or(preset.conflict_min_weight),
        }
    }
}

/// Lowercase ASCII slug used for per-issue directory names.
pub fn issue_slug(issue: &str) -> String {
    let mut out = String::new();
    for c in issue.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn trend_seed(seed: u64, trend_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(trend_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Everything computed by a run, before it is written out.
pub struct PipelineOutput {
    pub config_digest: String,
    pub corpus: Corpus,
    pub camps: BTreeMap<String, CampLabel>,
    pub tweet_camps: CorpusPartition,
    pub partitions: Vec<TrendPartition>,
    pub alignment: AlignmentMatrix,
    pub issue_alignment: IssueAlignmentMatrix,
    pub prominent: ProminentUsers,
    pub instances: BTreeMap<String, RelationInstance>,
    pub labels: Vec<LabeledRelation>,
    pub issues: Vec<IssueResult>,
    pub cross_issue: CrossIssueReport,
    pub close_reading: BTreeMap<String, Vec<String>>,
}

pub struct IssueResult {
    pub entry: IssueEntry,
    pub left: ActantialNetwork,
    pub right: ActantialNetwork,
    pub identity: GraphDocument,
    pub conflict: GraphDocument,
    pub conflict_edges: Vec<ConflictEdge>,
}

/// Inputs after loading, with the issue selection resolved.
pub struct Inputs {
    pub corpus: Corpus,
    pub issues: Vec<String>,
    pub seeds: BTreeMap<String, CampLabel>,
}

/// Loads inputs and checks the issue selection; no analysis runs here.
pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs, PipelineError> {
    (|| {
        config.validate()?;
        let mut trends: Vec<TrendRecord> = load_trends(&config.resolve(&config.trends))?;
        let known: BTreeSet<String> = trends.iter().filter_map(|t| t.issue_label.clone()).collect();
        for issue in &config.issues {
            if !known.contains(issue) {
                return Err(PipelineError::UnknownIssue(issue.clone()));
            }
        }
        let issues: Vec<String> = if config.issues.is_empty() {
            known.into_iter().collect()
        } else {
            config.issues.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
        };
        let path = config.resolve(&config.corpus);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut corpus = parse_corpus(&text, Some(&trends))?;
        if let Some(window) = config.trend_merge_window_days {
            let merged = merge_trends_with_map(&trends, window)?;
            trends = merged.trends;
            corpus.remap_trends(&merged.mapping, trends);
        }
        let seeds = load_user_camps(&config.resolve(&config.camp_seeds))?;
        Ok(Inputs { corpus, issues, seeds })
    })()
    .map_err(at("ingest"))
}

pub struct OpinionOutput {
    pub networks: Vec<RetweetNetwork>,
    pub partitions: Vec<TrendPartition>,
    pub alignment: AlignmentMatrix,
    pub camps: BTreeMap<String, CampLabel>,
    pub issue_alignment: IssueAlignmentMatrix,
    pub prominent: ProminentUsers,
    pub tweet_camps: CorpusPartition,
}

/// Bipartitions every trend large enough to cluster. Trends run in parallel,
/// each with its own seed derived from `config.seed`.
pub fn cluster_trends(
    config: &PipelineConfig,
    corpus: &Corpus,
) -> Result<(Vec<RetweetNetwork>, Vec<TrendPartition>), PipelineError> {
    (|| {
        let networks: Vec<RetweetNetwork> =
            corpus.by_trend().values().map(|tweets| build_retweet_network(tweets)).collect::<Result<_, _>>()?;
        let clusterer = ModularityBipartitioner {
            params: SearchParams { restarts: config.restarts.max(1), ..SearchParams::default() },
        };
        let partitions: Vec<TrendPartition> = networks
            .par_iter()
            .filter(|n| n.nodes().len() >= config.min_trend_nodes.max(2) && n.edge_count() > 0)
            .map(|n| clusterer.bipartition(n, trend_seed(config.seed, &n.trend_id)))
            .collect::<Result<_, _>>()?;
        Ok((networks, partitions))
    })()
    .map_err(at("opinion"))
}

pub fn opinion_stage(config: &PipelineConfig, inputs: &Inputs) -> Result<OpinionOutput, PipelineError> {
    let (networks, partitions) = cluster_trends(config, &inputs.corpus)?;
    (|| {
        let corpus = &inputs.corpus;
        let alignment = user_alignment(&partitions, config.min_cooccur)?;
        let camps = global_camps(&alignment, config.seed, &inputs.seeds)?;
        let trend_table = corpus.trends();
        let mut stances = Vec::new();
        for issue in corpus.issues() {
            let dated: Vec<_> = partitions
                .iter()
                .filter_map(|p| {
                    let t = trend_table.get(&p.trend_id)?;
                    (t.issue_label.as_deref() == Some(issue.as_str())).then_some((t.first_seen, p))
                })
                .collect();
            if !dated.is_empty() {
                stances.push(issue_stances(&issue, &dated).orient_towards(&camps));
            }
        }
        let issue_alignment = issue_alignment(&stances);
        let prominent = prominent_users(&networks, config.prominent_k);
        let tweet_camps = assign_tweet_camps(corpus, &camps);
        Ok(OpinionOutput { networks, partitions, alignment, camps, issue_alignment, prominent, tweet_camps })
    })()
    .map_err(at("opinion"))
}

/// Narrative signals of every sentence graph referenced by a tweet.
pub fn signals_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
) -> Result<BTreeMap<String, RelationInstance>, PipelineError> {
    (|| {
        let aliases = match &config.aliases {
            Some(p) => AliasMap::load(&config.resolve(p))?,
            None => AliasMap::default(),
        };
        let mut graphs = Vec::new();
        for p in &config.amr {
            let path = config.resolve(p);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            graphs.extend(parse_amr_file(&text)?);
        }
        let graphs = index_by_id(graphs);
        let mut instances = BTreeMap::new();
        for tweet in corpus.tweets() {
            for r in &tweet.amr_refs {
                let g = graphs.get(r).ok_or_else(|| PipelineError::MissingAmr {
                    tweet_id: tweet.tweet_id.clone(),
                    amr_ref: r.clone(),
                })?;
                let meta = g.sentence_meta.as_ref().expect("indexed graphs carry metadata");
                for inst in extract_signals(g, meta, &aliases) {
                    instances.insert(inst.instance_id.clone(), inst);
                }
            }
        }
        Ok(instances)
    })()
    .map_err(at("signals"))
}

/// Labels every instance with the configured labeler. `transport` is used
/// when the LLM labeler is selected; when it is `None` an HTTP transport for
/// `config.llm` is created.
pub fn labels_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
    instances: &BTreeMap<String, RelationInstance>,
    transport: Option<&dyn ChatTransport>,
) -> Result<Vec<LabeledRelation>, PipelineError> {
    (|| {
        let lexicon = match &config.lexicon {
            Some(p) => VerbLexicon::load(&config.resolve(p))?,
            None => VerbLexicon::builtin(),
        };
        Ok(match config.labeler {
            LabelerKind::Cfd => instances.values().map(|i| label_cfd(i, &lexicon)).collect(),
            LabelerKind::Llm => {
                let http;
                let transport = match transport {
                    Some(t) => t,
                    None => {
                        http = HttpTransport::new(&config.llm);
                        &http as &dyn ChatTransport
                    }
                };
                let mut llm = config.llm.clone();
                llm.cache_dir = llm.cache_dir.map(|d| config.resolve(&d));
                let labeler = LlmLabeler::new(llm, transport, &lexicon)?;
                let refs: Vec<&RelationInstance> = instances.values().collect();
                labeler.label_all(&refs, |id| corpus.get(id))?
            }
        })
    })()
    .map_err(at("labels"))
}

pub struct ActantialOutput {
    pub issues: Vec<IssueResult>,
    pub cross_issue: CrossIssueReport,
    pub close_reading: BTreeMap<String, Vec<String>>,
}

/// Per-issue camp networks, identity and conflict views, and the
/// cross-issue summary.
pub fn actantial_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
    issues: &[String],
    tweet_camps: &CorpusPartition,
    instances: &BTreeMap<String, RelationInstance>,
    labels: &[LabeledRelation],
) -> Result<ActantialOutput, PipelineError> {
    (|| {
        let trend_table = corpus.trends();
        let rule = ContributionRule { offset: config.contribution_offset };
        let issue_of_tweet = |tweet_id: &str| -> Option<&str> {
            let t = corpus.get(tweet_id)?;
            trend_table.get(&t.trend_id)?.issue_label.as_deref()
        };
        let mut results = Vec::new();
        let mut full: BTreeMap<(String, CampLabel), ActantialNetwork> = BTreeMap::new();
        let mut close = BTreeMap::new();
        for issue in issues {
            let mut per_camp = BTreeMap::new();
            for camp in [CampLabel::Left, CampLabel::Right] {
                let selected: Vec<LabeledRelation> = labels
                    .iter()
                    .filter(|l| {
                        let Some(inst) = instances.get(&l.instance_id) else { return true };
                        issue_of_tweet(&inst.tweet_id) == Some(issue.as_str())
                            && tweet_camps.label(&inst.tweet_id) == camp
                    })
                    .cloned()
                    .collect();
                let net = build_network(camp, issue, &selected, instances, corpus, rule)?;
                for e in net.edges() {
                    let top = close_reading(e, corpus, config.close_reading_k)?;
                    close.insert(e.id.clone(), top.iter().map(|t| t.tweet_id.clone()).collect::<Vec<_>>());
                }
                per_camp.insert(camp, net);
            }
            let left = per_camp.remove(&CampLabel::Left).expect("left built");
            let right = per_camp.remove(&CampLabel::Right).expect("right built");
            let thresholds = config.thresholds(issue);
            let merged = merge_identity_networks(
                &identity_ego(&left, &config.identity_node, thresholds.identity_min_weight)?,
                &identity_ego(&right, &config.identity_node, thresholds.identity_min_weight)?,
            )?;
            let nodes = conflict_nodes(&left, &right, config.centrality_k, &config.curation);
            let conflict_edges =
                conflict_networks(&left, &right, &nodes, thresholds.conflict_min_weight, config.conflict_mode);
            let entry = IssueEntry {
                issue: issue.clone(),
                slug: issue_slug(issue),
                trends: trend_table
                    .values()
                    .filter(|t| t.issue_label.as_deref() == Some(issue.as_str()))
                    .map(|t| t.trend_id.clone())
                    .collect(),
                tweets: corpus.tweets().filter(|t| issue_of_tweet(&t.tweet_id) == Some(issue.as_str())).count(),
                identity_min_weight: thresholds.identity_min_weight,
                conflict_min_weight: thresholds.conflict_min_weight,
                conflict_mode: config.conflict_mode,
                central_nodes: nodes,
            };
            results.push(IssueResult {
                identity: GraphDocument::from_identity(&merged),
                conflict: GraphDocument::from_conflict(&left, &right, &conflict_edges),
                entry,
                conflict_edges,
                left: left.clone(),
                right: right.clone(),
            });
            full.insert((issue.clone(), CampLabel::Left), left);
            full.insert((issue.clone(), CampLabel::Right), right);
        }
        Ok(ActantialOutput {
            issues: results,
            cross_issue: cross_issue_actants(&full, config.cross_issue_min),
            close_reading: close,
        })
    })()
    .map_err(at("actantial"))
}

/// Ego network of `node`, or an empty network centred on it when the camp
/// never mentions it.
pub fn identity_ego(net: &ActantialNetwork, node: &str, min_weight: f64) -> Result<ActantialNetwork, ActantialError> {
    if net.contains(node) {
        ego_network(net, node, min_weight)
    } else {
        let mut empty = ActantialNetwork::new(net.camp, net.issue.clone());
        empty.ego = Some(node.to_string());
        Ok(empty)
    }
}

/// Union of both camps' central nodes, left camp first.
pub fn conflict_nodes(left: &ActantialNetwork, right: &ActantialNetwork, k: usize, curation: &Curation) -> Vec<String> {
    let mut nodes: Vec<String> = centrality_rank(left, k, curation);
    for n in centrality_rank(right, k, curation) {
        if !nodes.contains(&n) {
            nodes.push(n);
        }
    }
    nodes
}

/// Runs every stage in dependency order.
pub fn analyse(
    config: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> Result<PipelineOutput, PipelineError> {
    let inputs = load_inputs(config)?;
    let opinion = opinion_stage(config, &inputs)?;
    let instances = signals_stage(config, &inputs.corpus)?;
    let labels = labels_stage(config, &inputs.corpus, &instances, transport)?;
    let act = actantial_stage(config, &inputs.corpus, &inputs.issues, &opinion.tweet_camps, &instances, &labels)?;
    Ok(PipelineOutput {
        config_digest: config.digest(),
        corpus: inputs.corpus,
        camps: opinion.camps,
        tweet_camps: opinion.tweet_camps,
        partitions: opinion.partitions,
        alignment: opinion.alignment,
        issue_alignment: opinion.issue_alignment,
        prominent: opinion.prominent,
        instances,
        labels,
        issues: act.issues,
        cross_issue: act.cross_issue,
        close_reading: act.close_reading,
    })
}

/// Runs the pipeline and writes the bundle to `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<AnalysisBundle, PipelineError> {
    run_pipeline_with(config, None)
}

pub fn run_pipeline_with(
    config: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> Result<AnalysisBundle, PipelineError> {
    let out = analyse(config, transport)?;
    let dir = config.output_path();
    bundle::write_bundle(&out, config, &dir).map_err(|e| at("bundle")(e.into()))?;
    AnalysisBundle::load(&dir).map_err(|e| at("bundle")(e.into()))
}
