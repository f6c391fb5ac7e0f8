//! Retweet networks, per-trend opinion bipartitions and the alignment
//! matrices derived from them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TweetRecord;

mod alignment;
pub mod modularity;

pub use alignment::{
    global_camps, issue_alignment, issue_stances, user_alignment, AlignmentMatrix, IssueAlignmentMatrix, IssueStance,
    DEFAULT_MIN_COOCCUR,
};
use modularity::{bipartition_graph, SearchParams, SymGraph};

#[derive(Debug, Error, PartialEq)]
pub enum OpinionError {
    #[error("no tweets given")]
    NoTweets,
    #[error("tweets span several trends ({0:?} and {1:?})")]
    MixedTrends(String, String),
    #[error("network {trend_id:?} has {nodes} node(s) and {edges} edge(s); need at least 2 nodes and 1 edge")]
    TooSmall { trend_id: String, nodes: usize, edges: usize },
    #[error("min_cooccur must be at least 1")]
    InvalidMinCooccur,
    #[error("no partitions given")]
    NoPartitions,
    #[error("alignment matrix has no present off-diagonal entries")]
    NoPresentEntries,
    #[error("seed users do not decide which block is left and which is right")]
    AmbiguousCampNaming,
}

/// Directed endorsement graph of one trend: `i -> j` means i retweeted j.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetNetwork {
    pub trend_id: String,
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), u64>,
}

impl RetweetNetwork {
    pub fn new(trend_id: impl Into<String>) -> Self {
        RetweetNetwork { trend_id: trend_id.into(), ..Default::default() }
    }

    /// Adds `weight` retweet events from `from` to `to`. Self-retweets are
    /// dropped.
    pub fn add_retweet(&mut self, from: &str, to: &str, weight: u64) {
        if from == to || weight == 0 {
            return;
        }
        self.nodes.insert(from.to_string());
        self.nodes.insert(to.to_string());
        *self.edges.entry((from.to_string(), to.to_string())).or_insert(0) += weight;
    }

    /// Declares a node that may have no edges.
    pub fn add_node(&mut self, id: &str) {
        self.nodes.insert(id.to_string());
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.edges.iter().map(|((a, b), w)| (a.as_str(), b.as_str(), *w))
    }

    pub fn edge_weight(&self, from: &str, to: &str) -> Option<u64> {
        self.edges.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Retweets received per node.
    pub fn in_strength(&self) -> BTreeMap<&str, u64> {
        let mut out = BTreeMap::new();
        for ((_, to), w) in &self.edges {
            *out.entry(to.as_str()).or_insert(0) += w;
        }
        out
    }

    /// Retweets given per node.
    pub fn out_strength(&self) -> BTreeMap<&str, u64> {
        let mut out = BTreeMap::new();
        for ((from, _), w) in &self.edges {
            *out.entry(from.as_str()).or_insert(0) += w;
        }
        out
    }

    /// Undirected view with `w(u,v) = w(u->v) + w(v->u)` over node indices in
    /// id order.
    pub fn symmetrized(&self) -> (Vec<&str>, SymGraph) {
        let ids: Vec<&str> = self.nodes.iter().map(String::as_str).collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let pairs = self.edges.iter().map(|((a, b), w)| (index[a.as_str()], index[b.as_str()], *w as f64));
        let g = SymGraph::from_pairs(ids.len(), pairs);
        (ids, g)
    }
}

/// One edge per (retweeter, retweeted author) pair, weighted by the number of
/// retweet events.
pub fn build_retweet_network(tweets: &[&TweetRecord]) -> Result<RetweetNetwork, OpinionError> {
    let first = tweets.first().ok_or(OpinionError::NoTweets)?;
    let mut net = RetweetNetwork::new(first.trend_id.clone());
    for t in tweets {
        if t.trend_id != net.trend_id {
            return Err(OpinionError::MixedTrends(net.trend_id.clone(), t.trend_id.clone()));
        }
        if let Some(author) = &t.retweeted_author_id {
            net.add_retweet(&t.author_id, author, 1);
        }
    }
    Ok(net)
}

/// Two-block opinion split of one trend's retweet network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPartition {
    pub trend_id: String,
    pub membership: BTreeMap<String, u8>,
    pub objective_value: f64,
    pub seed: u64,
}

impl TrendPartition {
    /// Copy with both block labels swapped.
    pub fn flipped(&self) -> TrendPartition {
        TrendPartition { membership: self.membership.iter().map(|(k, b)| (k.clone(), b ^ 1)).collect(), ..self.clone() }
    }
}

/// A pluggable two-block clustering backend.
pub trait Bipartitioner: Sync {
    fn bipartition(&self, network: &RetweetNetwork, seed: u64) -> Result<TrendPartition, OpinionError>;
}

/// Degree-corrected modularity on the symmetrized weighted graph, maximised
/// by greedy node moves from seeded random restarts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModularityBipartitioner {
    pub params: SearchParams,
}

impl Bipartitioner for ModularityBipartitioner {
    fn bipartition(&self, network: &RetweetNetwork, seed: u64) -> Result<TrendPartition, OpinionError> {
        if network.nodes().len() < 2 || network.edge_count() == 0 {
            return Err(OpinionError::TooSmall {
                trend_id: network.trend_id.clone(),
                nodes: network.nodes().len(),
                edges: network.edge_count(),
            });
        }
        let (ids, graph) = network.symmetrized();
        let (blocks, q) = bipartition_graph(&graph, seed, self.params);
        Ok(TrendPartition {
            trend_id: network.trend_id.clone(),
            membership: ids.iter().map(|s| s.to_string()).zip(blocks).collect(),
            objective_value: q,
            seed,
        })
    }
}

pub fn bipartition(network: &RetweetNetwork, seed: u64) -> Result<TrendPartition, OpinionError> {
    ModularityBipartitioner::default().bipartition(network, seed)
}

/// Modularity of `partition` evaluated on `network`.
pub fn partition_objective(network: &RetweetNetwork, partition: &TrendPartition) -> f64 {
    let (ids, graph) = network.symmetrized();
    let blocks: Vec<u8> = ids.iter().map(|id| partition.membership.get(*id).copied().unwrap_or(0)).collect();
    graph.modularity(&blocks)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProminentUsers {
    /// Most retweeted accounts, with retweets received.
    pub influencers: Vec<(String, u64)>,
    /// Most retweeting accounts, with retweets given.
    pub multipliers: Vec<(String, u64)>,
}

/// Top-k accounts by aggregated in-strength and out-strength. Ties go to the
/// smaller user id; accounts with zero strength are never listed.
pub fn prominent_users(networks: &[RetweetNetwork], k: usize) -> ProminentUsers {
    let mut ins: BTreeMap<String, u64> = BTreeMap::new();
    let mut outs: BTreeMap<String, u64> = BTreeMap::new();
    for net in networks {
        for (from, to, w) in net.edges() {
            *outs.entry(from.to_string()).or_insert(0) += w;
            *ins.entry(to.to_string()).or_insert(0) += w;
        }
    }
    let top = |m: BTreeMap<String, u64>| {
        let mut v: Vec<(String, u64)> = m.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(k);
        v
    };
    ProminentUsers { influencers: top(ins), multipliers: top(outs) }
}

/// `trend_id<TAB>user_id<TAB>block` rows with a header line.
pub fn export_partitions(partitions: &[TrendPartition]) -> String {
    let mut out = String::from("trend_id\tuser_id\tblock\n");
    for p in partitions {
        for (user, block) in &p.membership {
            out.push_str(&format!("{}\t{}\t{}\n", p.trend_id, user, block));
        }
    }
    out
}

/// Reads [`export_partitions`] output back. Objective values and seeds are
/// not part of the file and come back as 0.
pub fn parse_partitions(text: &str) -> Result<Vec<TrendPartition>, String> {
    let mut by_trend: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 && line.starts_with("trend_id\t") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [trend, user, block] = cols[..] else {
            return Err(format!("line {}: expected 3 columns", idx + 1));
        };
        let block: u8 = match block.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("line {}: block must be 0 or 1, got {other:?}", idx + 1)),
        };
        by_trend.entry(trend.to_string()).or_default().insert(user.to_string(), block);
    }
    Ok(by_trend
        .into_iter()
        .map(|(trend_id, membership)| TrendPartition { trend_id, membership, objective_value: 0.0, seed: 0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TweetRecord;

    #[test]
    fn partition_export_roundtrip() {
        let p = TrendPartition {
            trend_id: "t1".into(),
            membership: [("a".to_string(), 0u8), ("b".to_string(), 1)].into_iter().collect(),
            objective_value: 0.0,
            seed: 0,
        };
        let back = parse_partitions(&export_partitions(std::slice::from_ref(&p))).unwrap();
        assert_eq!(back, vec![p]);
        assert!(parse_partitions("trend_id\tuser_id\tblock\nt\tu\t2\n").is_err());
    }

    fn rt(id: &str, from: &str, to: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            author_id: from.into(),
            created_at: "2022-01-01T00:00:00Z".parse().unwrap(),
            text_original: String::new(),
            text_translated: None,
            retweet_count: 0,
            retweeted_tweet_id: Some(format!("orig-{to}")),
            retweeted_author_id: Some(to.into()),
            trend_id: "t".into(),
            amr_refs: vec![],
        }
    }

    #[test]
    fn repeated_retweets_accumulate() {
        let a = rt("1", "i", "j");
        let b = rt("2", "i", "j");
        let net = build_retweet_network(&[&a, &b]).unwrap();
        assert_eq!(net.edge_weight("i", "j"), Some(2));
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn self_retweet_dropped() {
        let a = rt("1", "i", "i");
        let net = build_retweet_network(&[&a]).unwrap();
        assert_eq!(net.edge_count(), 0);
        assert!(net.nodes().is_empty());
    }

    #[test]
    fn three_edge_fixture() {
        let tw = [rt("1", "i", "j"), rt("2", "k", "j"), rt("3", "i", "k")];
        let refs: Vec<&TweetRecord> = tw.iter().collect();
        let net = build_retweet_network(&refs).unwrap();
        assert_eq!(net.edge_count(), 3);
        assert_eq!(net.in_strength()["j"], 2);
    }

    #[test]
    fn mixed_trends_rejected() {
        let a = rt("1", "i", "j");
        let mut b = rt("2", "k", "j");
        b.trend_id = "other".into();
        assert!(matches!(build_retweet_network(&[&a, &b]), Err(OpinionError::MixedTrends(..))));
        assert_eq!(build_retweet_network(&[]), Err(OpinionError::NoTweets));
    }

    fn clique(net: &mut RetweetNetwork, prefix: &str, n: usize) {
        for a in 0..n {
            for b in 0..n {
                net.add_retweet(&format!("{prefix}{a}"), &format!("{prefix}{b}"), 1);
            }
        }
    }

    #[test]
    fn disconnected_cliques_split_exactly() {
        let mut net = RetweetNetwork::new("t");
        clique(&mut net, "a", 6);
        clique(&mut net, "b", 6);
        let p = bipartition(&net, 3).unwrap();
        for (user, block) in &p.membership {
            assert_eq!(*block, if user.starts_with('a') { 0 } else { 1 }, "{user}");
        }
    }

    #[test]
    fn complete_graph_is_deterministic() {
        let mut net = RetweetNetwork::new("t");
        clique(&mut net, "u", 9);
        let a = bipartition(&net, 11).unwrap();
        let b = bipartition(&net, 11).unwrap();
        assert_eq!(a, b);
        let ones = a.membership.values().filter(|b| **b == 1).count();
        assert!(ones > 0 && ones < 9);
    }

    #[test]
    fn objective_ignores_label_swap() {
        let mut net = RetweetNetwork::new("t");
        clique(&mut net, "a", 4);
        clique(&mut net, "b", 5);
        net.add_retweet("a0", "b0", 1);
        let p = bipartition(&net, 1).unwrap();
        let q = partition_objective(&net, &p);
        assert!((q - p.objective_value).abs() < 1e-12);
        assert_eq!(partition_objective(&net, &p.flipped()), q);
    }

    #[test]
    fn too_small_rejected() {
        let mut net = RetweetNetwork::new("t");
        net.add_node("lonely");
        assert!(matches!(bipartition(&net, 0), Err(OpinionError::TooSmall { .. })));
        net.add_node("other");
        assert!(matches!(bipartition(&net, 0), Err(OpinionError::TooSmall { edges: 0, .. })));
    }

    #[test]
    fn prominent_users_rank() {
        let mut star = RetweetNetwork::new("t1");
        for leaf in ["a", "b", "c"] {
            star.add_retweet(leaf, "hub", 1);
        }
        let p = prominent_users(std::slice::from_ref(&star), 1);
        assert_eq!(p.influencers, vec![("hub".to_string(), 3)]);

        let mut fan = RetweetNetwork::new("t2");
        for target in ["a", "b", "c", "d"] {
            fan.add_retweet("amp", target, 1);
        }
        let p = prominent_users(&[star.clone(), fan], 1);
        assert_eq!(p.multipliers[0].0, "amp");

        let mut n1 = RetweetNetwork::new("t1");
        n1.add_retweet("x", "j", 3);
        n1.add_retweet("x", "k", 2);
        let mut n2 = RetweetNetwork::new("t2");
        n2.add_retweet("y", "j", 2);
        n2.add_retweet("y", "k", 1);
        let p = prominent_users(&[n1, n2], 2);
        assert_eq!(p.influencers, vec![("j".to_string(), 5), ("k".to_string(), 3)]);
    }

    #[test]
    fn partition_export_format() {
        let p = TrendPartition {
            trend_id: "t".into(),
            membership: BTreeMap::from([("a".to_string(), 0), ("b".to_string(), 1)]),
            objective_value: 0.0,
            seed: 0,
        };
        assert_eq!(export_partitions(&[p]), "trend_id\tuser_id\tblock\nt\ta\t0\nt\tb\t1\n");
    }
}
