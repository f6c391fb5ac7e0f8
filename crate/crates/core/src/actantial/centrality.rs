use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ActantialNetwork;

/// Manual adjustments applied after the top-k selection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curation {
    #[serde(default)]
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

struct Indexed<'a> {
    labels: Vec<&'a str>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    incident_weight: Vec<f64>,
}

fn index(net: &ActantialNetwork) -> Indexed<'_> {
    let labels: Vec<&str> = net.nodes().iter().map(String::as_str).collect();
    let pos: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let n = labels.len();
    let mut out = vec![Vec::new(); n];
    let mut inc = vec![Vec::new(); n];
    let mut incident_weight = vec![0.0; n];
    for e in net.edges() {
        let (s, t) = (pos[e.source.as_str()], pos[e.target.as_str()]);
        incident_weight[s] += e.weight;
        if s != t {
            incident_weight[t] += e.weight;
            out[s].push(t);
            inc[t].push(s);
        }
    }
    Indexed { labels, out, inc, incident_weight }
}

/// Brandes betweenness on the unweighted directed graph, unnormalized.
/// Self-loops are ignored.
pub fn betweenness(net: &ActantialNetwork) -> BTreeMap<String, f64> {
    let idx = index(net);
    let scores = brandes(&idx.out);
    idx.labels.iter().map(|l| l.to_string()).zip(scores).collect()
}

fn brandes(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb
}

/// 1-based rank of every node under `measure`, ties broken by incident
/// weight (descending) and then label.
fn ranks(idx: &Indexed<'_>, measure: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..idx.labels.len()).collect();
    order.sort_by(|&a, &b| {
        measure[b]
            .total_cmp(&measure[a])
            .then(idx.incident_weight[b].total_cmp(&idx.incident_weight[a]))
            .then(idx.labels[a].cmp(idx.labels[b]))
    });
    let mut rank = vec![0; order.len()];
    for (p, v) in order.into_iter().enumerate() {
        rank[v] = p + 1;
    }
    rank
}

/// Union of the top-`k` nodes by in-degree, out-degree and betweenness,
/// minus `curation.exclude`, plus any `curation.include` nodes present in the
/// network. Nodes are ordered by their best rank across the three measures,
/// then incident weight (descending), then label.
pub fn centrality_rank(net: &ActantialNetwork, k: usize, curation: &Curation) -> Vec<String> {
    let idx = index(net);
    let in_deg: Vec<f64> = idx.inc.iter().map(|v| distinct(v) as f64).collect();
    let out_deg: Vec<f64> = idx.out.iter().map(|v| distinct(v) as f64).collect();
    let btw = brandes(&idx.out);
    let all_ranks = [ranks(&idx, &in_deg), ranks(&idx, &out_deg), ranks(&idx, &btw)];
    let best: Vec<usize> =
        (0..idx.labels.len()).map(|v| all_ranks.iter().map(|r| r[v]).min().unwrap_or(usize::MAX)).collect();
    let exclude: BTreeSet<&str> = curation.exclude.iter().map(String::as_str).collect();
    let include: BTreeSet<&str> = curation.include.iter().map(String::as_str).collect();
    let mut chosen: Vec<usize> = (0..idx.labels.len())
        .filter(|&v| {
            let label = idx.labels[v];
            (best[v] <= k || include.contains(label)) && !exclude.contains(label)
        })
        .collect();
    chosen.sort_by(|&a, &b| {
        best[a]
            .cmp(&best[b])
            .then(idx.incident_weight[b].total_cmp(&idx.incident_weight[a]))
            .then(idx.labels[a].cmp(idx.labels[b]))
    });
    chosen.into_iter().map(|v| idx.labels[v].to_string()).collect()
}

fn distinct(v: &[usize]) -> usize {
    v.iter().collect::<BTreeSet<_>>().len()
}
