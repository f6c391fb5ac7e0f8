//! Two-block modularity maximisation by greedy single-node moves.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAIN_EPS: f64 = 1e-12;

/// Undirected weighted graph over dense node indices.
#[derive(Debug, Clone)]
pub struct SymGraph {
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    /// Sum of all edge weights, each undirected edge counted once.
    total_weight: f64,
}

impl SymGraph {
    /// Builds from undirected weighted pairs; parallel pairs are summed and
    /// self-pairs ignored.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc = std::collections::BTreeMap::new();
        for (u, v, w) in pairs {
            if u == v {
                continue;
            }
            let key = if u < v { (u, v) } else { (v, u) };
            *acc.entry(key).or_insert(0.0) += w;
        }
        let mut adj = vec![Vec::new(); n];
        let mut degree = vec![0.0; n];
        let mut total_weight = 0.0;
        for ((u, v), w) in acc {
            adj[u].push((v, w));
            adj[v].push((u, w));
            degree[u] += w;
            degree[v] += w;
            total_weight += w;
        }
        SymGraph { adj, degree, total_weight }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Newman modularity of a two-block assignment.
    pub fn modularity(&self, blocks: &[u8]) -> f64 {
        let m = self.total_weight;
        if m == 0.0 {
            return 0.0;
        }
        let mut internal = [0.0f64; 2];
        let mut strength = [0.0f64; 2];
        for (u, nbrs) in self.adj.iter().enumerate() {
            let b = blocks[u] as usize;
            strength[b] += self.degree[u];
            for &(v, w) in nbrs {
                if u < v && blocks[v] as usize == b {
                    internal[b] += w;
                }
            }
        }
        (0..2).map(|b| internal[b] / m - (strength[b] / (2.0 * m)).powi(2)).sum()
    }
}

/// Tuning knobs for [`bipartition_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub restarts: usize,
    pub max_sweeps: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { restarts: 8, max_sweeps: 100 }
    }
}

/// Returns the best two-block assignment over all restarts and its modularity.
/// Both blocks are non-empty whenever the graph has at least two nodes. The
/// block of node 0 is always 0.
pub fn bipartition_graph(graph: &SymGraph, seed: u64, params: SearchParams) -> (Vec<u8>, f64) {
    let n = graph.node_count();
    if n < 2 {
        return (vec![0; n], 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<u8>, f64)> = None;
    for _ in 0..params.restarts.max(1) {
        let blocks = local_search(graph, &mut rng, params.max_sweeps);
        let q = graph.modularity(&blocks);
        if best.as_ref().is_none_or(|(_, bq)| q > bq + GAIN_EPS) {
            best = Some((blocks, q));
        }
    }
    let (mut blocks, q) = best.expect("at least one restart");
    if blocks[0] == 1 {
        for b in &mut blocks {
            *b ^= 1;
        }
    }
    (blocks, q)
}

fn local_search(graph: &SymGraph, rng: &mut ChaCha8Rng, max_sweeps: usize) -> Vec<u8> {
    let n = graph.node_count();
    let mut blocks: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    let mut count = [0usize; 2];
    for &b in &blocks {
        count[b as usize] += 1;
    }
    if count[0] == 0 || count[1] == 0 {
        let v = rng.gen_range(0..n);
        let from = blocks[v] as usize;
        blocks[v] ^= 1;
        count[from] -= 1;
        count[from ^ 1] += 1;
    }
    let m = graph.total_weight;
    if m == 0.0 {
        return blocks;
    }
    let mut strength = [0.0f64; 2];
    for (u, &b) in blocks.iter().enumerate() {
        strength[b as usize] += graph.degree[u];
    }
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..max_sweeps {
        order.shuffle(rng);
        let mut moved = false;
        for &v in &order {
            let from = blocks[v] as usize;
            let to = from ^ 1;
            if count[from] == 1 {
                continue;
            }
            let mut link = [0.0f64; 2];
            for &(u, w) in &graph.adj[v] {
                link[blocks[u] as usize] += w;
            }
            let k = graph.degree[v];
            let gain = (link[to] - link[from]) / m - k * (strength[to] - strength[from] + k) / (2.0 * m * m);
            if gain > GAIN_EPS {
                blocks[v] = to as u8;
                count[from] -= 1;
                count[to] += 1;
                strength[from] -= k;
                strength[to] += k;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    blocks
}
