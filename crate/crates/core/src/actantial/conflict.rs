use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ActantEdge, ActantialError, ActantialNetwork};
use crate::corpus::{CampLabel, Corpus, TweetRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictMode {
    /// `sign(σ_left) != sign(σ_right)` with `sign(0) = 0`.
    #[default]
    Literal,
    /// `σ_left · σ_right < 0`.
    Strict,
}

impl ConflictMode {
    pub fn accepts(self, left: f64, right: f64) -> bool {
        match self {
            ConflictMode::Literal => sign(left) != sign(right),
            ConflictMode::Strict => left * right < 0.0,
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

impl fmt::Display for ConflictMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictMode::Literal => "literal",
            ConflictMode::Strict => "strict",
        })
    }
}

impl FromStr for ConflictMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(ConflictMode::Literal),
            "strict" => Ok(ConflictMode::Strict),
            other => Err(format!("unknown conflict mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEdge {
    pub source: String,
    pub target: String,
    pub score_left: f64,
    pub score_right: f64,
    pub weight_left: f64,
    pub weight_right: f64,
    pub left_edge_id: String,
    pub right_edge_id: String,
    pub mode: ConflictMode,
}

impl ConflictEdge {
    /// The same edge seen with the camps exchanged.
    pub fn swapped(&self) -> ConflictEdge {
        ConflictEdge {
            source: self.source.clone(),
            target: self.target.clone(),
            score_left: self.score_right,
            score_right: self.score_left,
            weight_left: self.weight_right,
            weight_right: self.weight_left,
            left_edge_id: self.right_edge_id.clone(),
            right_edge_id: self.left_edge_id.clone(),
            mode: self.mode,
        }
    }
}

/// Edges present in both networks between nodes of `nodes`, heavy enough on
/// both sides and with scores of differing sign under `mode`. Output is
/// ordered by (source, target).
pub fn conflict_networks(
    left: &ActantialNetwork,
    right: &ActantialNetwork,
    nodes: &[String],
    min_weight: f64,
    mode: ConflictMode,
) -> Vec<ConflictEdge> {
    let keep: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
    left.edges()
        .filter(|l| keep.contains(l.source.as_str()) && keep.contains(l.target.as_str()))
        .filter_map(|l| right.edge(&l.source, &l.target).map(|r| (l, r)))
        .filter(|(l, r)| l.weight >= min_weight && r.weight >= min_weight && mode.accepts(l.score, r.score))
        .map(|(l, r)| ConflictEdge {
            source: l.source.clone(),
            target: l.target.clone(),
            score_left: l.score,
            score_right: r.score,
            weight_left: l.weight,
            weight_right: r.weight,
            left_edge_id: l.id.clone(),
            right_edge_id: r.id.clone(),
            mode,
        })
        .collect()
}

/// The `k` most retweeted distinct tweets behind an edge; ties go to the
/// earlier tweet, then the smaller id.
pub fn close_reading<'c>(
    edge: &ActantEdge,
    corpus: &'c Corpus,
    k: usize,
) -> Result<Vec<&'c TweetRecord>, ActantialError> {
    if edge.provenance.is_empty() {
        return Err(ActantialError::EmptyProvenance(edge.id.clone()));
    }
    let mut tweets = edge
        .tweet_ids()
        .into_iter()
        .map(|id| corpus.get(id).ok_or_else(|| ActantialError::MissingTweet(id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    tweets.sort_by(|a, b| {
        b.retweet_count.cmp(&a.retweet_count).then(a.created_at.cmp(&b.created_at)).then(a.tweet_id.cmp(&b.tweet_id))
    });
    tweets.truncate(k);
    Ok(tweets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuePolarity {
    pub issue: String,
    /// Sign of the weight-weighted mean score of incident edges.
    pub polarity: i8,
    pub mean_score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurringActant {
    pub actant: String,
    pub issues: Vec<IssuePolarity>,
    pub total_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossIssueReport {
    pub min_issues: usize,
    pub camps: BTreeMap<CampLabel, Vec<RecurringActant>>,
}

impl CrossIssueReport {
    pub fn actant(&self, camp: CampLabel, label: &str) -> Option<&RecurringActant> {
        self.camps.get(&camp)?.iter().find(|a| a.actant == label)
    }
}

/// Actants that are an edge endpoint in at least `min_issues` issues of the
/// same camp, ordered by issue count then total incident weight (both
/// descending), then label.
pub fn cross_issue_actants(
    networks: &BTreeMap<(String, CampLabel), ActantialNetwork>,
    min_issues: usize,
) -> CrossIssueReport {
    // camp -> actant -> issue -> (weight, Σ w·σ)
    let mut acc: BTreeMap<CampLabel, BTreeMap<String, BTreeMap<String, (f64, f64)>>> = BTreeMap::new();
    for ((issue, camp), net) in networks {
        let per_actant = acc.entry(*camp).or_default();
        for e in net.edges() {
            let mut ends = vec![e.source.as_str()];
            if e.target != e.source {
                ends.push(e.target.as_str());
            }
            for end in ends {
                let slot = per_actant.entry(end.to_string()).or_default().entry(issue.clone()).or_insert((0.0, 0.0));
                slot.0 += e.weight;
                slot.1 += e.weight * e.score;
            }
        }
    }
    let mut report = CrossIssueReport { min_issues, camps: BTreeMap::new() };
    for (camp, actants) in acc {
        let mut list: Vec<RecurringActant> = actants
            .into_iter()
            .filter(|(_, issues)| issues.len() >= min_issues)
            .map(|(actant, issues)| {
                let issues: Vec<IssuePolarity> = issues
                    .into_iter()
                    .map(|(issue, (w, ws))| {
                        let mean_score = if w > 0.0 { ws / w } else { 0.0 };
                        IssuePolarity { issue, polarity: sign(mean_score), mean_score, weight: w }
                    })
                    .collect();
                let total_weight = issues.iter().map(|i| i.weight).sum();
                RecurringActant { actant, issues, total_weight }
            })
            .collect();
        list.sort_by(|a, b| {
            b.issues
                .len()
                .cmp(&a.issues.len())
                .then(b.total_weight.total_cmp(&a.total_weight))
                .then(a.actant.cmp(&b.actant))
        });
        report.camps.insert(camp, list);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actantial::test_support::network;
    use crate::actantial::{aggregate, Provenance};
    use crate::labeling::RelationType::{self, *};

    fn with_score(camp: CampLabel, s: &str, t: &str, w: f64, sigma: f64) -> ActantialNetwork {
        // two entries whose weighted mean is sigma
        let mut net = ActantialNetwork::new(camp, "issue");
        let pos = w * (1.0 + sigma) / 2.0;
        for (k, (c, ty)) in [(pos, Supportive), (w - pos, Conflictive)].into_iter().enumerate() {
            net.add_contribution(
                s,
                t,
                Provenance {
                    tweet_id: format!("x{k}"),
                    contribution: c,
                    relation_type: ty,
                    instance_id: format!("x{k}.0.0"),
                },
            );
        }
        net
    }

    fn all_nodes(l: &ActantialNetwork, r: &ActantialNetwork) -> Vec<String> {
        l.nodes().union(r.nodes()).cloned().collect()
    }

    #[test]
    fn mode_predicates() {
        let cases =
            [(0.8, -0.3, true, true), (0.8, 0.2, false, false), (0.0, 0.4, true, false), (0.0, 0.0, false, false)];
        for (l, r, literal, strict) in cases {
            assert_eq!(ConflictMode::Literal.accepts(l, r), literal, "{l} {r}");
            assert_eq!(ConflictMode::Strict.accepts(l, r), strict, "{l} {r}");
        }
    }

    #[test]
    fn zero_score_edge_modes() {
        let l = with_score(CampLabel::Left, "we", "gas", 10.0, 0.0);
        let r = with_score(CampLabel::Right, "we", "gas", 10.0, 0.4);
        assert!((aggregate(&r.edge("we", "gas").unwrap().provenance).1 - 0.4).abs() < 1e-12);
        let nodes = all_nodes(&l, &r);
        assert_eq!(conflict_networks(&l, &r, &nodes, 0.0, ConflictMode::Literal).len(), 1);
        assert!(conflict_networks(&l, &r, &nodes, 0.0, ConflictMode::Strict).is_empty());
    }

    #[test]
    fn filters_nodes_and_weight() {
        let l = network(
            CampLabel::Left,
            &[("a", "b", 10.0, Supportive), ("a", "c", 10.0, Supportive), ("a", "d", 1.0, Supportive)],
        );
        let r = network(
            CampLabel::Right,
            &[("a", "b", 10.0, Conflictive), ("a", "c", 10.0, Conflictive), ("a", "d", 10.0, Conflictive)],
        );
        let nodes: Vec<String> = ["a", "b", "d"].map(String::from).to_vec();
        let got = conflict_networks(&l, &r, &nodes, 5.0, ConflictMode::Literal);
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].source.as_str(), got[0].target.as_str()), ("a", "b"));
        assert_eq!((got[0].score_left, got[0].score_right), (1.0, -1.0));
    }

    #[test]
    fn swap_symmetry() {
        let l = network(CampLabel::Left, &[("a", "b", 3.0, Supportive), ("b", "c", 3.0, Neutral)]);
        let r = network(CampLabel::Right, &[("a", "b", 3.0, Conflictive), ("b", "c", 3.0, Supportive)]);
        let nodes = all_nodes(&l, &r);
        let lr = conflict_networks(&l, &r, &nodes, 0.0, ConflictMode::Literal);
        let rl: Vec<_> =
            conflict_networks(&r, &l, &nodes, 0.0, ConflictMode::Literal).iter().map(ConflictEdge::swapped).collect();
        assert_eq!(lr.len(), 2);
        assert_eq!(lr, rl);
    }

    fn corpus(specs: &[(&str, u64, &str)]) -> Corpus {
        let recs = specs.iter().map(|(id, rt, ts)| TweetRecord {
            tweet_id: id.to_string(),
            author_id: "a".into(),
            created_at: ts.parse().unwrap(),
            text_original: "x".into(),
            text_translated: None,
            retweet_count: *rt,
            retweeted_tweet_id: None,
            retweeted_author_id: None,
            trend_id: "t".into(),
            amr_refs: vec![],
        });
        Corpus::from_records(recs, None).unwrap()
    }

    fn edge_over(ids: &[&str]) -> ActantEdge {
        let mut net = ActantialNetwork::new(CampLabel::Left, "i");
        for id in ids {
            net.add_contribution(
                "a",
                "b",
                Provenance {
                    tweet_id: id.to_string(),
                    contribution: 1.0,
                    relation_type: Supportive,
                    instance_id: format!("{id}.0.0"),
                },
            );
        }
        net.edge("a", "b").unwrap().clone()
    }

    #[test]
    fn close_reading_orders_and_truncates() {
        let c = corpus(&[
            ("1", 5, "2022-01-01T00:00:00Z"),
            ("2", 50, "2022-01-01T00:00:00Z"),
            ("3", 10, "2022-01-03T00:00:00Z"),
            ("4", 10, "2022-01-02T00:00:00Z"),
            ("5", 1, "2022-01-01T00:00:00Z"),
            ("6", 0, "2022-01-01T00:00:00Z"),
            ("7", 7, "2022-01-01T00:00:00Z"),
        ]);
        let e = edge_over(&["1", "2", "3", "4", "5", "6", "7", "2"]);
        let got: Vec<_> = close_reading(&e, &c, 5).unwrap().iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(got, ["2", "4", "3", "7", "1"]);
        let few = edge_over(&["1", "5", "6"]);
        assert_eq!(close_reading(&few, &c, 5).unwrap().len(), 3);
        let missing = edge_over(&["99"]);
        assert_eq!(close_reading(&missing, &c, 5).unwrap_err(), ActantialError::MissingTweet("99".into()));
    }

    fn issue_net(
        issue: &str,
        camp: CampLabel,
        edges: &[(&str, &str, f64, RelationType)],
    ) -> ((String, CampLabel), ActantialNetwork) {
        let mut net = network(camp, edges);
        net.issue = issue.into();
        ((issue.into(), camp), net)
    }

    #[test]
    fn recurring_media() {
        let nets: BTreeMap<_, _> = [
            issue_net(
                "covid",
                CampLabel::Right,
                &[("media", "we", 10.0, Conflictive), ("we", "freedom", 4.0, Supportive)],
            ),
            issue_net("ukraine", CampLabel::Right, &[("media", "truth", 5.0, Conflictive)]),
            issue_net("climate", CampLabel::Right, &[("we", "media", 2.0, Conflictive), ("gas", "x", 1.0, Neutral)]),
            issue_net("climate", CampLabel::Left, &[("media", "x", 1.0, Neutral), ("gas", "x", 1.0, Neutral)]),
            issue_net("covid", CampLabel::Left, &[("media", "y", 3.0, Neutral)]),
        ]
        .into_iter()
        .collect();
        let rep = cross_issue_actants(&nets, 2);
        let media = rep.actant(CampLabel::Right, "media").unwrap();
        let issues: Vec<_> = media.issues.iter().map(|i| (i.issue.as_str(), i.polarity)).collect();
        assert_eq!(issues, [("climate", -1), ("covid", -1), ("ukraine", -1)]);
        assert_eq!(media.total_weight, 17.0);
        assert!(rep.actant(CampLabel::Right, "gas").is_none());
        assert!(rep.actant(CampLabel::Right, "freedom").is_none());
        let left_media = rep.actant(CampLabel::Left, "media").unwrap();
        assert!(left_media.issues.iter().all(|i| i.polarity == 0));
        let order: Vec<_> = rep.camps[&CampLabel::Right].iter().map(|a| a.actant.as_str()).collect();
        assert_eq!(order, ["media", "we"]);
    }
}
