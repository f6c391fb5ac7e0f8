use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::modularity::{bipartition_graph, SearchParams, SymGraph};
use super::{OpinionError, TrendPartition};
use crate::corpus::CampLabel;

pub const DEFAULT_MIN_COOCCUR: u32 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct PairCount {
    same: u32,
    total: u32,
}

/// Pairwise co-membership scores across trends.
///
/// `a(u,v) = 2 * same/total - 1` where `total` counts trends containing both
/// users. Off-diagonal entries with fewer than `min_cooccur` shared trends are
/// absent; the diagonal is 1 for every user seen at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    users: Vec<String>,
    appearances: Vec<u32>,
    pairs: BTreeMap<(usize, usize), PairCount>,
    min_cooccur: u32,
}

impl AlignmentMatrix {
    /// Builds from raw pair counts `(u, v, same, total)`. Later duplicates of a
    /// pair are added to earlier ones.
    pub fn from_counts<'a>(
        users: impl IntoIterator<Item = &'a str>,
        min_cooccur: u32,
        counts: impl IntoIterator<Item = (&'a str, &'a str, u32, u32)>,
    ) -> Result<Self, OpinionError> {
        if min_cooccur < 1 {
            return Err(OpinionError::InvalidMinCooccur);
        }
        let users: Vec<String> = users.into_iter().map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect();
        let mut m = AlignmentMatrix { appearances: vec![0; users.len()], users, pairs: BTreeMap::new(), min_cooccur };
        for (u, v, same, total) in counts {
            let (Some(i), Some(j)) = (m.index(u), m.index(v)) else { continue };
            if i == j {
                continue;
            }
            let e = m.pairs.entry((i.min(j), i.max(j))).or_default();
            e.same += same;
            e.total += total;
            m.appearances[i] = m.appearances[i].max(e.total);
            m.appearances[j] = m.appearances[j].max(e.total);
        }
        Ok(m)
    }

    fn index(&self, user: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn min_cooccur(&self) -> u32 {
        self.min_cooccur
    }

    /// Number of trends in which both users appear.
    pub fn cooccurrence(&self, u: &str, v: &str) -> u32 {
        match (self.index(u), self.index(v)) {
            (Some(i), Some(j)) if i == j => self.appearances[i],
            (Some(i), Some(j)) => self.pairs.get(&(i.min(j), i.max(j))).map_or(0, |p| p.total),
            _ => 0,
        }
    }

    pub fn get(&self, u: &str, v: &str) -> Option<f64> {
        let (i, j) = (self.index(u)?, self.index(v)?);
        self.get_idx(i, j)
    }

    fn get_idx(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return (self.appearances[i] >= 1).then_some(1.0);
        }
        let p = self.pairs.get(&(i.min(j), i.max(j)))?;
        if p.total < self.min_cooccur {
            return None;
        }
        Some((2.0 * p.same as f64 - p.total as f64) / p.total as f64)
    }

    /// Present off-diagonal entries `(i, j, a)` with `i < j`.
    fn present(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs.keys().filter_map(|&(i, j)| self.get_idx(i, j).map(|a| (i, j, a)))
    }

    /// Dense lower triangle, tab separated, header row of user ids. Absent
    /// entries are empty cells.
    pub fn export(&self) -> String {
        let mut out = String::from("user");
        for u in &self.users {
            out.push('\t');
            out.push_str(u);
        }
        out.push('\n');
        for (i, u) in self.users.iter().enumerate() {
            out.push_str(u);
            for j in 0..=i {
                out.push('\t');
                if let Some(a) = self.get_idx(i, j) {
                    out.push_str(&a.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accumulates co-membership counts over all partitions.
pub fn user_alignment(partitions: &[TrendPartition], min_cooccur: u32) -> Result<AlignmentMatrix, OpinionError> {
    if min_cooccur < 1 {
        return Err(OpinionError::InvalidMinCooccur);
    }
    if partitions.is_empty() {
        return Err(OpinionError::NoPartitions);
    }
    let users: BTreeSet<&str> = partitions.iter().flat_map(|p| p.membership.keys().map(String::as_str)).collect();
    let mut m = AlignmentMatrix::from_counts(users.iter().copied(), min_cooccur, std::iter::empty())?;
    for p in partitions {
        let members: Vec<(usize, u8)> =
            p.membership.iter().map(|(u, b)| (m.index(u).expect("user collected above"), *b)).collect();
        for (a, &(i, bi)) in members.iter().enumerate() {
            m.appearances[i] += 1;
            for &(j, bj) in &members[a + 1..] {
                let e = m.pairs.entry((i.min(j), i.max(j))).or_default();
                e.total += 1;
                if bi == bj {
                    e.same += 1;
                }
            }
        }
    }
    Ok(m)
}

/// Splits users into two camps by clustering the graph of positive alignment
/// entries. `seed_users` names the blocks: the orientation that agrees with
/// more seed users wins.
///
/// Users without any positive present entry are left unassigned.
pub fn global_camps(
    alignment: &AlignmentMatrix,
    seed: u64,
    seed_users: &BTreeMap<String, CampLabel>,
) -> Result<BTreeMap<String, CampLabel>, OpinionError> {
    let mut any_present = false;
    let mut positive = Vec::new();
    for (i, j, a) in alignment.present() {
        any_present = true;
        if a > 0.0 {
            positive.push((i, j, a));
        }
    }
    if !any_present {
        return Err(OpinionError::NoPresentEntries);
    }
    let linked: BTreeSet<usize> = positive.iter().flat_map(|&(i, j, _)| [i, j]).collect();
    let local: BTreeMap<usize, usize> = linked.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let graph = SymGraph::from_pairs(local.len(), positive.iter().map(|&(i, j, a)| (local[&i], local[&j], a)));
    let (blocks, _) = bipartition_graph(&graph, seed, SearchParams::default());

    let mut votes = 0i64;
    for (user, camp) in seed_users {
        let Some(i) = alignment.index(user) else { continue };
        let Some(&k) = local.get(&i) else { continue };
        let block0 = blocks[k] == 0;
        match camp {
            CampLabel::Left => votes += if block0 { 1 } else { -1 },
            CampLabel::Right => votes += if block0 { -1 } else { 1 },
            CampLabel::Unassigned => {}
        }
    }
    let (zero, one) = match votes.signum() {
        1 => (CampLabel::Left, CampLabel::Right),
        -1 => (CampLabel::Right, CampLabel::Left),
        _ => return Err(OpinionError::AmbiguousCampNaming),
    };
    Ok(alignment
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let camp = match local.get(&i) {
                Some(&k) if blocks[k] == 0 => zero,
                Some(_) => one,
                None => CampLabel::Unassigned,
            };
            (u.clone(), camp)
        })
        .collect())
}

/// A user's ±1 position on one issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueStance {
    pub issue: String,
    pub stance: BTreeMap<String, i8>,
    /// Set when the sign convention was flipped by [`IssueStance::orient_towards`].
    pub orientation_flag: bool,
}

impl IssueStance {
    pub fn flipped(&self) -> IssueStance {
        IssueStance {
            issue: self.issue.clone(),
            stance: self.stance.iter().map(|(u, s)| (u.clone(), -s)).collect(),
            orientation_flag: !self.orientation_flag,
        }
    }

    /// Flips the convention when that makes +1 agree with the left camp for
    /// more users than it disagrees.
    pub fn orient_towards(self, camps: &BTreeMap<String, CampLabel>) -> IssueStance {
        let score: i64 = self
            .stance
            .iter()
            .map(|(u, s)| match camps.get(u) {
                Some(CampLabel::Left) => *s as i64,
                Some(CampLabel::Right) => -(*s as i64),
                _ => 0,
            })
            .sum();
        if score < 0 {
            self.flipped()
        } else {
            self
        }
    }
}

/// Orients each trend's blocks against the running consensus (trends taken in
/// date order, block 0 of the first trend = +1) and takes each user's
/// majority. Users with an exact tie are omitted.
pub fn issue_stances(issue: &str, partitions: &[(NaiveDate, &TrendPartition)]) -> IssueStance {
    let mut ordered: Vec<&(NaiveDate, &TrendPartition)> = partitions.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.trend_id.cmp(&b.1.trend_id)));
    let mut running: BTreeMap<&str, i64> = BTreeMap::new();
    for (_, p) in ordered {
        let agreement: i64 = p
            .membership
            .iter()
            .map(|(u, b)| block_sign(*b) * running.get(u.as_str()).copied().unwrap_or(0).signum())
            .sum();
        let orient = if agreement < 0 { -1 } else { 1 };
        for (u, b) in &p.membership {
            *running.entry(u.as_str()).or_insert(0) += orient * block_sign(*b);
        }
    }
    IssueStance {
        issue: issue.to_string(),
        stance: running.into_iter().filter(|(_, s)| *s != 0).map(|(u, s)| (u.to_string(), s.signum() as i8)).collect(),
        orientation_flag: false,
    }
}

fn block_sign(block: u8) -> i64 {
    if block == 0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueAlignmentMatrix {
    pub issues: Vec<String>,
    /// `(i, j)` with `i <= j` -> (alignment, shared users). Alignment is absent
    /// when no user is shared.
    entries: BTreeMap<(usize, usize), (Option<f64>, usize)>,
}

impl IssueAlignmentMatrix {
    fn key(&self, a: &str, b: &str) -> Option<(usize, usize)> {
        let i = self.issues.iter().position(|x| x == a)?;
        let j = self.issues.iter().position(|x| x == b)?;
        Some((i.min(j), i.max(j)))
    }

    pub fn align(&self, a: &str, b: &str) -> Option<f64> {
        self.entries.get(&self.key(a, b)?).and_then(|e| e.0)
    }

    pub fn shared_users(&self, a: &str, b: &str) -> usize {
        self.key(a, b).and_then(|k| self.entries.get(&k)).map_or(0, |e| e.1)
    }

    pub fn export(&self) -> String {
        let mut out = String::from("issue");
        for i in &self.issues {
            out.push('\t');
            out.push_str(i);
        }
        out.push('\n');
        for (i, name) in self.issues.iter().enumerate() {
            out.push_str(name);
            for j in 0..=i {
                out.push('\t');
                if let Some(a) = self.entries.get(&(j, i)).and_then(|e| e.0) {
                    out.push_str(&a.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `align(A,B) = |2 * equal - shared| / shared` over users with a stance on
/// both issues, which is invariant to flipping either issue.
pub fn issue_alignment(stances: &[IssueStance]) -> IssueAlignmentMatrix {
    let issues: Vec<String> = stances.iter().map(|s| s.issue.clone()).collect();
    let mut entries = BTreeMap::new();
    for (i, a) in stances.iter().enumerate() {
        entries.insert((i, i), (Some(1.0), a.stance.len()));
        for (j, b) in stances.iter().enumerate().skip(i + 1) {
            let mut shared = 0i64;
            let mut equal = 0i64;
            for (u, sa) in &a.stance {
                if let Some(sb) = b.stance.get(u) {
                    shared += 1;
                    if sa == sb {
                        equal += 1;
                    }
                }
            }
            let value = (shared > 0).then(|| (2 * equal - shared).abs() as f64 / shared as f64);
            entries.insert((i, j), (value, shared as usize));
        }
    }
    IssueAlignmentMatrix { issues, entries }
}
