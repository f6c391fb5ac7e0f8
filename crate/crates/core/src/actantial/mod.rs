//! Per-camp actantial networks and the analyses run on them: identity (ego)
//! networks, centrality filtering, cross-camp conflict edges, close reading
//! and recurring actants across issues.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::amr::RelationInstance;
use crate::corpus::{CampLabel, Corpus, TweetRecord};
use crate::labeling::{LabeledRelation, RelationType};

mod centrality;
mod conflict;

pub use centrality::{betweenness, centrality_rank, Curation};
pub use conflict::{
    close_reading, conflict_networks, cross_issue_actants, ConflictEdge, ConflictMode, CrossIssueReport, IssuePolarity,
    RecurringActant,
};

#[derive(Debug, Error, PartialEq)]
pub enum ActantialError {
    #[error("label for unknown instance {0:?}")]
    DanglingInstance(String),
    #[error("instance {instance_id:?} references tweet {tweet_id:?} missing from the corpus")]
    DanglingTweet { instance_id: String, tweet_id: String },
    #[error("node {0:?} is not in the network")]
    UnknownNode(String),
    #[error("ego networks centre on different nodes ({0:?} vs {1:?})")]
    EgoMismatch(Option<String>, Option<String>),
    #[error("edge {0} has no provenance")]
    EmptyProvenance(String),
    #[error("tweet {0:?} from edge provenance is missing from the corpus")]
    MissingTweet(String),
}

/// How much one tweet adds to an edge weight: `offset + retweet_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionRule {
    pub offset: u64,
}

impl Default for ContributionRule {
    fn default() -> Self {
        ContributionRule { offset: 1 }
    }
}

impl ContributionRule {
    pub fn contribution(&self, tweet: &TweetRecord) -> f64 {
        (self.offset + tweet.retweet_count) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tweet_id: String,
    pub contribution: f64,
    pub relation_type: RelationType,
    pub instance_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActantEdge {
    pub id: String,
    pub source: String,
    pub target: String,
    pub weight: f64,
    pub score: f64,
    pub provenance: Vec<Provenance>,
}

impl ActantEdge {
    /// Distinct provenance tweet ids, in provenance order.
    pub fn tweet_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.provenance.iter().filter(|p| seen.insert(p.tweet_id.as_str())).map(|p| p.tweet_id.as_str()).collect()
    }
}

/// `(w, σ)` of a provenance list: `w = Σ c`, `σ = Σ c·value / w` (0 when
/// `w = 0`).
pub fn aggregate(provenance: &[Provenance]) -> (f64, f64) {
    let mut weight = 0.0;
    let mut signed = 0.0;
    for p in provenance {
        weight += p.contribution;
        signed += p.contribution * p.relation_type.value();
    }
    let score = if weight > 0.0 { (signed / weight).clamp(-1.0, 1.0) } else { 0.0 };
    (weight, score)
}

/// Stable identifier of the edge `source -> target` in one camp's network of
/// one issue.
pub fn edge_id(issue: &str, camp: CampLabel, source: &str, target: &str) -> String {
    let mut h = Sha256::new();
    for part in [issue, camp.as_str(), source, target] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActantialNetwork {
    pub camp: CampLabel,
    pub issue: String,
    /// Centre node when this is an ego network.
    pub ego: Option<String>,
    nodes: BTreeSet<String>,
    #[serde(with = "edge_list")]
    edges: BTreeMap<(String, String), ActantEdge>,
}

/// Edges travel as a list; the (source, target) keys are rebuilt on load.
mod edge_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use super::ActantEdge;

    pub fn serialize<S: Serializer>(map: &BTreeMap<(String, String), ActantEdge>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(String, String), ActantEdge>, D::Error> {
        let list = Vec::<ActantEdge>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for e in list {
            let key = (e.source.clone(), e.target.clone());
            if map.insert(key, e).is_some() {
                return Err(serde::de::Error::custom("duplicate edge"));
            }
        }
        Ok(map)
    }
}

impl ActantialNetwork {
    pub fn new(camp: CampLabel, issue: impl Into<String>) -> Self {
        ActantialNetwork { camp, issue: issue.into(), ego: None, nodes: BTreeSet::new(), edges: BTreeMap::new() }
    }

    /// Adds one provenance entry to `source -> target` and re-aggregates it.
    pub fn add_contribution(&mut self, source: &str, target: &str, entry: Provenance) {
        self.nodes.insert(source.to_string());
        self.nodes.insert(target.to_string());
        let (issue, camp) = (self.issue.clone(), self.camp);
        let edge = self.edges.entry((source.to_string(), target.to_string())).or_insert_with(|| ActantEdge {
            id: edge_id(&issue, camp, source, target),
            source: source.to_string(),
            target: target.to_string(),
            weight: 0.0,
            score: 0.0,
            provenance: Vec::new(),
        });
        edge.provenance.push(entry);
        (edge.weight, edge.score) = aggregate(&edge.provenance);
    }

    pub fn add_node(&mut self, node: &str) {
        self.nodes.insert(node.to_string());
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    /// Edges ordered by (source, target).
    pub fn edges(&self) -> impl Iterator<Item = &ActantEdge> {
        self.edges.values()
    }

    pub fn edge(&self, source: &str, target: &str) -> Option<&ActantEdge> {
        self.edges.get(&(source.to_string(), target.to_string()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    fn insert_edge(&mut self, edge: ActantEdge) {
        self.nodes.insert(edge.source.clone());
        self.nodes.insert(edge.target.clone());
        self.edges.insert((edge.source.clone(), edge.target.clone()), edge);
    }
}

/// Aggregates labeled relations into one network. Labels are processed in
/// instance-id order; a tweet contributes to an edge once, and any further
/// instance of the same edge from that tweet is kept in the provenance with
/// contribution 0.
pub fn build_network(
    camp: CampLabel,
    issue: &str,
    labels: &[LabeledRelation],
    instances: &BTreeMap<String, RelationInstance>,
    corpus: &Corpus,
    rule: ContributionRule,
) -> Result<ActantialNetwork, ActantialError> {
    let mut ordered: Vec<&LabeledRelation> = labels.iter().collect();
    ordered.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut net = ActantialNetwork::new(camp, issue);
    let mut counted: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
    for label in ordered {
        let inst = instances
            .get(&label.instance_id)
            .ok_or_else(|| ActantialError::DanglingInstance(label.instance_id.clone()))?;
        let tweet = corpus.get(&inst.tweet_id).ok_or_else(|| ActantialError::DanglingTweet {
            instance_id: inst.instance_id.clone(),
            tweet_id: inst.tweet_id.clone(),
        })?;
        let first = counted.insert((inst.agent.as_str(), inst.patient.as_str(), inst.tweet_id.as_str()));
        let contribution = if first { rule.contribution(tweet) } else { 0.0 };
        net.add_contribution(
            &inst.agent,
            &inst.patient,
            Provenance {
                tweet_id: inst.tweet_id.clone(),
                contribution,
                relation_type: label.relation_type,
                instance_id: inst.instance_id.clone(),
            },
        );
    }
    Ok(net)
}

/// Out-edges of `node` with weight at least `min_weight`, plus their
/// endpoints. The centre node is always present.
pub fn ego_network(
    network: &ActantialNetwork,
    node: &str,
    min_weight: f64,
) -> Result<ActantialNetwork, ActantialError> {
    if !network.contains(node) {
        return Err(ActantialError::UnknownNode(node.to_string()));
    }
    let mut ego = ActantialNetwork::new(network.camp, network.issue.clone());
    ego.ego = Some(node.to_string());
    ego.add_node(node);
    for e in network.edges().filter(|e| e.source == node && e.weight >= min_weight) {
        ego.insert_edge(e.clone());
    }
    Ok(ego)
}

/// Per-issue weight thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPreset {
    pub identity_min_weight: f64,
    pub conflict_min_weight: f64,
}

impl ThresholdPreset {
    /// Ukraine and Covid use 500, climate change 250; other issues have no
    /// threshold.
    pub fn for_issue(issue: &str) -> ThresholdPreset {
        let lower = issue.to_lowercase();
        let w = if lower.contains("ukrain") || lower.contains("covid") {
            500.0
        } else if lower.contains("climate") {
            250.0
        } else {
            0.0
        };
        ThresholdPreset { identity_min_weight: w, conflict_min_weight: w }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedNode {
    pub id: String,
    pub camp_incidence: Vec<CampLabel>,
}

/// Union of the two camps' ego networks with one ego node per camp
/// (`<ego>@left`, `<ego>@right`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedIdentityNetwork {
    pub issue: String,
    pub ego: String,
    pub nodes: Vec<MergedNode>,
    /// Edges with the ego source renamed, left camp first.
    pub edges: Vec<(CampLabel, ActantEdge)>,
}

pub fn ego_node_id(ego: &str, camp: CampLabel) -> String {
    format!("{ego}@{camp}")
}

pub fn merge_identity_networks(
    left: &ActantialNetwork,
    right: &ActantialNetwork,
) -> Result<MergedIdentityNetwork, ActantialError> {
    let ego = match (&left.ego, &right.ego) {
        (Some(a), Some(b)) if a == b => a.clone(),
        (a, b) => return Err(ActantialError::EgoMismatch(a.clone(), b.clone())),
    };
    let mut incidence: BTreeMap<String, BTreeSet<CampLabel>> = BTreeMap::new();
    let mut edges = Vec::new();
    for (camp, net) in [(CampLabel::Left, left), (CampLabel::Right, right)] {
        let centre = ego_node_id(&ego, camp);
        incidence.entry(centre.clone()).or_default().insert(camp);
        for e in net.edges() {
            let target = if e.target == ego { centre.clone() } else { e.target.clone() };
            incidence.entry(target.clone()).or_default().insert(camp);
            edges.push((camp, ActantEdge { source: centre.clone(), target, ..e.clone() }));
        }
    }
    Ok(MergedIdentityNetwork {
        issue: left.issue.clone(),
        ego,
        nodes: incidence
            .into_iter()
            .map(|(id, camps)| MergedNode { id, camp_incidence: camps.into_iter().collect() })
            .collect(),
        edges,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn prov(tweet: &str, c: f64, t: RelationType) -> Provenance {
        Provenance { tweet_id: tweet.into(), contribution: c, relation_type: t, instance_id: format!("{tweet}.0.0") }
    }

    /// Network with one provenance entry per `(source, target, weight, type)`.
    pub fn network(camp: CampLabel, edges: &[(&str, &str, f64, RelationType)]) -> ActantialNetwork {
        let mut net = ActantialNetwork::new(camp, "issue");
        for (k, (s, t, w, ty)) in edges.iter().enumerate() {
            net.add_contribution(s, t, prov(&format!("tw{k}"), *w, *ty));
        }
        net
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::labeling::LabelSource;
    use RelationType::*;

    fn tweet(id: &str, rt: u64) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            author_id: "a".into(),
            created_at: "2022-03-01T00:00:00Z".parse().unwrap(),
            text_original: "x".into(),
            text_translated: None,
            retweet_count: rt,
            retweeted_tweet_id: None,
            retweeted_author_id: None,
            trend_id: "t".into(),
            amr_refs: vec![],
        }
    }

    fn inst(id: &str, tweet: &str, agent: &str, patient: &str) -> RelationInstance {
        RelationInstance {
            instance_id: id.into(),
            tweet_id: tweet.into(),
            sentence_index: 0,
            agent: agent.into(),
            patient: patient.into(),
            frame: "f-01".into(),
            negated: false,
            agent_raw: agent.into(),
            patient_raw: patient.into(),
        }
    }

    fn label(id: &str, t: RelationType) -> LabeledRelation {
        LabeledRelation {
            instance_id: id.into(),
            relation_type: t,
            description: String::new(),
            source: LabelSource::Human,
            fallback_used: false,
            unknown_frame: false,
        }
    }

    fn fixture(
        specs: &[(&str, u64, RelationType)],
    ) -> (Vec<LabeledRelation>, BTreeMap<String, RelationInstance>, Corpus) {
        let mut labels = Vec::new();
        let mut insts = BTreeMap::new();
        let mut tweets = Vec::new();
        for (tid, rt, ty) in specs {
            let iid = format!("{tid}.0.0");
            tweets.push(tweet(tid, *rt));
            insts.insert(iid.clone(), inst(&iid, tid, "we", "peace"));
            labels.push(label(&iid, *ty));
        }
        (labels, insts, Corpus::from_records(tweets, None).unwrap())
    }

    #[test]
    fn single_supportive_tweet() {
        let (l, i, c) = fixture(&[("1", 0, Supportive)]);
        let net = build_network(CampLabel::Left, "x", &l, &i, &c, ContributionRule::default()).unwrap();
        let e = net.edge("we", "peace").unwrap();
        assert_eq!((e.weight, e.score), (1.0, 1.0));
    }

    #[test]
    fn mixed_contributions() {
        let (l, i, c) = fixture(&[("1", 3, Supportive), ("2", 1, Conflictive)]);
        let net = build_network(CampLabel::Left, "x", &l, &i, &c, ContributionRule::default()).unwrap();
        let e = net.edge("we", "peace").unwrap();
        assert_eq!(e.weight, 6.0);
        assert!((e.score - 1.0 / 3.0).abs() < 1e-15);
        let (l, i, c) = fixture(&[("1", 4, Neutral), ("2", 9, Neutral)]);
        let net = build_network(CampLabel::Left, "x", &l, &i, &c, ContributionRule::default()).unwrap();
        assert_eq!(net.edge("we", "peace").unwrap().score, 0.0);
    }

    #[test]
    fn zero_offset_rule() {
        let (l, i, c) = fixture(&[("1", 3, Supportive), ("2", 0, Conflictive)]);
        let net = build_network(CampLabel::Left, "x", &l, &i, &c, ContributionRule { offset: 0 }).unwrap();
        let e = net.edge("we", "peace").unwrap();
        assert_eq!((e.weight, e.score), (3.0, 1.0));
    }

    #[test]
    fn repeated_edge_in_one_tweet_counts_once() {
        let (mut l, mut i, c) = fixture(&[("1", 4, Supportive)]);
        i.insert("1.1.0".into(), inst("1.1.0", "1", "we", "peace"));
        l.push(label("1.1.0", Conflictive));
        let net = build_network(CampLabel::Left, "x", &l, &i, &c, ContributionRule::default()).unwrap();
        let e = net.edge("we", "peace").unwrap();
        assert_eq!(e.weight, 5.0);
        assert_eq!(e.score, 1.0);
        assert_eq!(e.provenance.len(), 2);
        assert_eq!(e.tweet_ids(), ["1"]);
    }

    #[test]
    fn dangling_references() {
        let (l, _, c) = fixture(&[("1", 0, Supportive)]);
        let err =
            build_network(CampLabel::Left, "x", &l, &BTreeMap::new(), &c, ContributionRule::default()).unwrap_err();
        assert_eq!(err, ActantialError::DanglingInstance("1.0.0".into()));
        let (l, i, _) = fixture(&[("1", 0, Supportive)]);
        let err =
            build_network(CampLabel::Left, "x", &l, &i, &Corpus::default(), ContributionRule::default()).unwrap_err();
        assert!(matches!(err, ActantialError::DanglingTweet { .. }));
    }

    #[test]
    fn ego_thresholds() {
        let net = network(
            CampLabel::Left,
            &[("we", "a", 600.0, Supportive), ("we", "b", 100.0, Conflictive), ("c", "we", 900.0, Neutral)],
        );
        let all = ego_network(&net, "we", 0.0).unwrap();
        assert_eq!(all.edge_count(), 2);
        assert_eq!(all.ego.as_deref(), Some("we"));
        let strict = ego_network(&net, "we", 500.0).unwrap();
        assert_eq!(strict.edge_count(), 1);
        assert!(strict.edge("we", "a").is_some());
        assert!(matches!(ego_network(&net, "they", 0.0), Err(ActantialError::UnknownNode(_))));
    }

    #[test]
    fn network_json_roundtrip() {
        let net = network(CampLabel::Right, &[("a", "b", 2.0, Supportive), ("b", "a", 1.0, Conflictive)]);
        let json = serde_json::to_string(&net).unwrap();
        let back: ActantialNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn presets() {
        assert_eq!(ThresholdPreset::for_issue("Ukraine").identity_min_weight, 500.0);
        assert_eq!(ThresholdPreset::for_issue("covid").identity_min_weight, 500.0);
        assert_eq!(ThresholdPreset::for_issue("Climate change").identity_min_weight, 250.0);
        assert_eq!(ThresholdPreset::for_issue("Climate change").conflict_min_weight, 250.0);
        assert_eq!(ThresholdPreset::for_issue("sports").identity_min_weight, 0.0);
    }

    #[test]
    fn merge_shares_common_targets() {
        let l = ego_network(
            &network(CampLabel::Left, &[("we", "peace", 5.0, Supportive), ("we", "nato", 2.0, Supportive)]),
            "we",
            0.0,
        )
        .unwrap();
        let r = ego_network(
            &network(CampLabel::Right, &[("we", "peace", 3.0, Supportive), ("we", "gas", 2.0, Conflictive)]),
            "we",
            0.0,
        )
        .unwrap();
        let m = merge_identity_networks(&l, &r).unwrap();
        let ids: Vec<_> = m.nodes.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["gas", "nato", "peace", "we@left", "we@right"]);
        let peace = m.nodes.iter().find(|n| n.id == "peace").unwrap();
        assert_eq!(peace.camp_incidence, [CampLabel::Left, CampLabel::Right]);
        assert_eq!(m.edges.iter().filter(|(_, e)| e.target == "peace").count(), 2);
    }

    #[test]
    fn merge_with_empty_right() {
        let l = ego_network(&network(CampLabel::Left, &[("we", "peace", 5.0, Supportive)]), "we", 0.0).unwrap();
        let mut r = ActantialNetwork::new(CampLabel::Right, "issue");
        r.ego = Some("we".into());
        let m = merge_identity_networks(&l, &r).unwrap();
        assert_eq!(m.nodes.len(), 3);
        assert_eq!(m.edges.len(), 1);
        assert!(m.nodes.iter().any(|n| n.id == "we@right"));
    }

    #[test]
    fn merge_rejects_mismatched_egos() {
        let l = ego_network(&network(CampLabel::Left, &[("we", "peace", 5.0, Supportive)]), "we", 0.0).unwrap();
        let r = ego_network(&network(CampLabel::Right, &[("i", "peace", 5.0, Supportive)]), "i", 0.0).unwrap();
        assert!(matches!(merge_identity_networks(&l, &r), Err(ActantialError::EgoMismatch(..))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn provenance() -> impl Strategy<Value = Vec<Provenance>> {
            prop::collection::vec((1u32..1000, 0usize..3), 1..20).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(k, (c, t))| prov(&format!("t{k}"), c as f64, RelationType::ALL[t]))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn aggregate_matches_definition(p in provenance()) {
                let (w, s) = aggregate(&p);
                let sum_c: f64 = p.iter().map(|x| x.contribution).sum();
                let sum_cv: f64 = p.iter().map(|x| x.contribution * x.relation_type.value()).sum();
                prop_assert_eq!(w, sum_c);
                prop_assert!((s * w - sum_cv).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&s));
            }

            #[test]
            fn scaling_contributions(p in provenance(), k in 1u32..50) {
                let (w, s) = aggregate(&p);
                let scaled: Vec<Provenance> = p.iter().map(|x| Provenance { contribution: x.contribution * k as f64, ..x.clone() }).collect();
                let (w2, s2) = aggregate(&scaled);
                prop_assert!((w2 - w * k as f64).abs() < 1e-9);
                prop_assert!((s2 - s).abs() < 1e-12);
            }

            #[test]
            fn ego_threshold_is_monotone(ws in prop::collection::vec(0u32..1000, 1..15), t1 in 0u32..1000, dt in 0u32..500) {
                let edges: Vec<(String, f64)> = ws.iter().enumerate().map(|(k, w)| (format!("n{k}"), *w as f64)).collect();
                let spec: Vec<(&str, &str, f64, RelationType)> = edges.iter().map(|(t, w)| ("we", t.as_str(), *w, RelationType::Supportive)).collect();
                let net = network(CampLabel::Left, &spec);
                let low = ego_network(&net, "we", t1 as f64).unwrap();
                let high = ego_network(&net, "we", (t1 + dt) as f64).unwrap();
                for e in high.edges() {
                    prop_assert!(low.edge(&e.source, &e.target).is_some());
                }
                prop_assert!(high.nodes().is_subset(low.nodes()));
            }
        }
    }
}
