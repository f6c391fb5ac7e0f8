//! Tweet corpus ingestion, trend merging and camp partitioning.
//!
//! Corpus and trend files are JSON Lines: one record per line with the field
//! names of [`TweetRecord`] and [`TrendRecord`]. Blank lines are skipped.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate tweet_id {tweet_id:?}")]
    DuplicateTweet { line: usize, tweet_id: String },
    #[error("line {line}: duplicate trend_id {trend_id:?}")]
    DuplicateTrend { line: usize, trend_id: String },
    #[error("line {line}: tweet {tweet_id:?} references unknown trend_id {trend_id:?}")]
    UnknownTrend { line: usize, tweet_id: String, trend_id: String },
    #[error("line {line}: field {field} must be present together with {partner}")]
    MissingField { line: usize, field: &'static str, partner: &'static str },
    #[error("window_days must be non-negative, got {0}")]
    NegativeWindow(i64),
    #[error("unknown issue {0:?}")]
    UnknownIssue(String),
}

/// One tweet. Retweet events carry the id and author of the retweeted tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    pub text_original: String,
    #[serde(default)]
    pub text_translated: Option<String>,
    pub retweet_count: u64,
    #[serde(default)]
    pub retweeted_tweet_id: Option<String>,
    #[serde(default)]
    pub retweeted_author_id: Option<String>,
    pub trend_id: String,
    #[serde(default)]
    pub amr_refs: Vec<String>,
}

impl TweetRecord {
    pub fn is_retweet(&self) -> bool {
        self.retweeted_tweet_id.is_some()
    }

    fn check(&self, line: usize) -> Result<(), CorpusError> {
        match (&self.retweeted_tweet_id, &self.retweeted_author_id) {
            (Some(_), None) => {
                Err(CorpusError::MissingField { line, field: "retweeted_author_id", partner: "retweeted_tweet_id" })
            }
            (None, Some(_)) => {
                Err(CorpusError::MissingField { line, field: "retweeted_tweet_id", partner: "retweeted_author_id" })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendRecord {
    pub trend_id: String,
    pub phrase: String,
    pub first_seen: NaiveDate,
    #[serde(default)]
    pub issue_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampLabel {
    Left,
    Right,
    #[default]
    Unassigned,
}

impl CampLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CampLabel::Left => "left",
            CampLabel::Right => "right",
            CampLabel::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for CampLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CampLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(CampLabel::Left),
            "right" => Ok(CampLabel::Right),
            "unassigned" => Ok(CampLabel::Unassigned),
            other => Err(format!("unknown camp {other:?}")),
        }
    }
}

/// A validated tweet collection, keyed by tweet id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tweets: BTreeMap<String, TweetRecord>,
    trends: BTreeMap<String, TrendRecord>,
    trend_counts: BTreeMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from records, validating every invariant. `trends`, when
    /// given, must cover every referenced trend id.
    pub fn from_records(
        records: impl IntoIterator<Item = TweetRecord>,
        trends: Option<&[TrendRecord]>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        if let Some(trends) = trends {
            for (idx, t) in trends.iter().enumerate() {
                if corpus.trends.insert(t.trend_id.clone(), t.clone()).is_some() {
                    return Err(CorpusError::DuplicateTrend { line: idx + 1, trend_id: t.trend_id.clone() });
                }
            }
        }
        for (idx, rec) in records.into_iter().enumerate() {
            corpus.insert(rec, idx + 1, trends.is_some())?;
        }
        Ok(corpus)
    }

    fn insert(&mut self, rec: TweetRecord, line: usize, check_trend: bool) -> Result<(), CorpusError> {
        rec.check(line)?;
        if check_trend && !self.trends.contains_key(&rec.trend_id) {
            return Err(CorpusError::UnknownTrend { line, tweet_id: rec.tweet_id, trend_id: rec.trend_id });
        }
        if self.tweets.contains_key(&rec.tweet_id) {
            return Err(CorpusError::DuplicateTweet { line, tweet_id: rec.tweet_id });
        }
        *self.trend_counts.entry(rec.trend_id.clone()).or_default() += 1;
        self.tweets.insert(rec.tweet_id.clone(), rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn get(&self, tweet_id: &str) -> Option<&TweetRecord> {
        self.tweets.get(tweet_id)
    }

    /// Tweets in tweet-id order.
    pub fn tweets(&self) -> impl Iterator<Item = &TweetRecord> {
        self.tweets.values()
    }

    pub fn trends(&self) -> &BTreeMap<String, TrendRecord> {
        &self.trends
    }

    /// Number of tweets per referenced trend id.
    pub fn trend_counts(&self) -> &BTreeMap<String, usize> {
        &self.trend_counts
    }

    /// Distinct issue labels over the attached trends.
    pub fn issues(&self) -> BTreeSet<String> {
        self.trends.values().filter_map(|t| t.issue_label.clone()).collect()
    }

    /// Tweets grouped by trend id, each group in tweet-id order.
    pub fn by_trend(&self) -> BTreeMap<&str, Vec<&TweetRecord>> {
        let mut out: BTreeMap<&str, Vec<&TweetRecord>> = BTreeMap::new();
        for t in self.tweets.values() {
            out.entry(t.trend_id.as_str()).or_default().push(t);
        }
        out
    }

    /// Rewrites trend references through `mapping` (old id -> merged id) and
    /// replaces the trend table. Unmapped ids are kept.
    pub fn remap_trends(&mut self, mapping: &BTreeMap<String, String>, trends: Vec<TrendRecord>) {
        self.trend_counts.clear();
        for t in self.tweets.values_mut() {
            if let Some(new) = mapping.get(&t.trend_id) {
                t.trend_id = new.clone();
            }
            *self.trend_counts.entry(t.trend_id.clone()).or_default() += 1;
        }
        self.trends = trends.into_iter().map(|t| (t.trend_id.clone(), t)).collect();
    }
}

fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed { line, message: e.to_string() })?;
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads a JSON Lines corpus. When `trends` is given, every record must
/// reference one of them.
pub fn ingest_corpus(path: &Path, trends: Option<&[TrendRecord]>) -> Result<Corpus, CorpusError> {
    parse_corpus(&read_to_string(path)?, trends)
}

pub fn parse_corpus(text: &str, trends: Option<&[TrendRecord]>) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::from_records(std::iter::empty(), trends)?;
    for (line, rec) in parse_lines::<TweetRecord>(text)? {
        corpus.insert(rec, line, trends.is_some())?;
    }
    Ok(corpus)
}

pub fn load_trends(path: &Path) -> Result<Vec<TrendRecord>, CorpusError> {
    parse_trends(&read_to_string(path)?)
}

pub fn parse_trends(text: &str) -> Result<Vec<TrendRecord>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in parse_lines::<TrendRecord>(text)? {
        if !seen.insert(rec.trend_id.clone()) {
            return Err(CorpusError::DuplicateTrend { line, trend_id: rec.trend_id });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a tab-separated `user_id<TAB>camp` file (camp is `left` or `right`).
/// Lines starting with `#` are comments.
pub fn load_user_camps(path: &Path) -> Result<BTreeMap<String, CampLabel>, CorpusError> {
    parse_user_camps(&read_to_string(path)?)
}

pub fn parse_user_camps(text: &str) -> Result<BTreeMap<String, CampLabel>, CorpusError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.split('\t');
        let (Some(user), Some(camp), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CorpusError::Malformed { line, message: "expected user_id<TAB>camp".into() });
        };
        let camp = match camp.parse::<CampLabel>() {
            Ok(c @ (CampLabel::Left | CampLabel::Right)) => c,
            _ => {
                return Err(CorpusError::Malformed {
                    line,
                    message: format!("camp must be left or right, got {camp:?}"),
                })
            }
        };
        out.insert(user.trim().to_string(), camp);
    }
    Ok(out)
}

pub fn write_user_camps(camps: &BTreeMap<String, CampLabel>) -> String {
    let mut out = String::new();
    for (user, camp) in camps {
        if *camp != CampLabel::Unassigned {
            out.push_str(&format!("{user}\t{camp}\n"));
        }
    }
    out
}

/// Result of [`merge_trends_with_map`]: merged trends plus the id mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedTrends {
    pub trends: Vec<TrendRecord>,
    /// Every input trend id mapped to the id of the trend it was merged into.
    pub mapping: BTreeMap<String, String>,
}

pub fn merge_trends(trends: &[TrendRecord], window_days: i64) -> Result<Vec<TrendRecord>, CorpusError> {
    merge_trends_with_map(trends, window_days).map(|m| m.trends)
}

/// Merges trends with an identical phrase whose dates chain within
/// `window_days` of each other. The earliest trend of each chain survives;
/// a missing issue label is filled from later members.
pub fn merge_trends_with_map(trends: &[TrendRecord], window_days: i64) -> Result<MergedTrends, CorpusError> {
    if window_days < 0 {
        return Err(CorpusError::NegativeWindow(window_days));
    }
    let mut by_phrase: BTreeMap<&str, Vec<&TrendRecord>> = BTreeMap::new();
    for t in trends {
        by_phrase.entry(t.phrase.as_str()).or_default().push(t);
    }
    let mut merged = Vec::new();
    let mut mapping = BTreeMap::new();
    for group in by_phrase.values_mut() {
        group.sort_by(|a, b| a.first_seen.cmp(&b.first_seen).then_with(|| a.trend_id.cmp(&b.trend_id)));
        let mut current: Option<(TrendRecord, NaiveDate)> = None;
        for t in group.iter() {
            match current.as_mut() {
                Some((head, last)) if (t.first_seen - *last).num_days() <= window_days => {
                    if head.issue_label.is_none() {
                        head.issue_label = t.issue_label.clone();
                    }
                    *last = t.first_seen;
                    mapping.insert(t.trend_id.clone(), head.trend_id.clone());
                }
                _ => {
                    if let Some((head, _)) = current.take() {
                        merged.push(head);
                    }
                    mapping.insert(t.trend_id.clone(), t.trend_id.clone());
                    current = Some(((*t).clone(), t.first_seen));
                }
            }
        }
        if let Some((head, _)) = current {
            merged.push(head);
        }
    }
    merged.sort_by(|a, b| a.first_seen.cmp(&b.first_seen).then_with(|| a.trend_id.cmp(&b.trend_id)));
    Ok(MergedTrends { trends: merged, mapping })
}

/// Per-tweet camp labels with the retweeter counts they were derived from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusPartition {
    pub labels: BTreeMap<String, CampLabel>,
    /// tweet id -> (left retweeters, right retweeters)
    pub provenance: BTreeMap<String, (usize, usize)>,
}

impl CorpusPartition {
    pub fn label(&self, tweet_id: &str) -> CampLabel {
        self.labels.get(tweet_id).copied().unwrap_or_default()
    }
}

/// Labels every tweet by the strict majority camp of its distinct retweeters.
/// Ties and tweets without camp-labeled retweeters stay unassigned.
pub fn assign_tweet_camps(corpus: &Corpus, user_camps: &BTreeMap<String, CampLabel>) -> CorpusPartition {
    let mut retweeters: HashMap<&str, HashSet<&str>> = HashMap::new();
    for t in corpus.tweets() {
        if let Some(orig) = &t.retweeted_tweet_id {
            retweeters.entry(orig.as_str()).or_default().insert(t.author_id.as_str());
        }
    }
    let mut part = CorpusPartition::default();
    for t in corpus.tweets() {
        let (mut left, mut right) = (0usize, 0usize);
        if let Some(users) = retweeters.get(t.tweet_id.as_str()) {
            for u in users {
                match user_camps.get(*u) {
                    Some(CampLabel::Left) => left += 1,
                    Some(CampLabel::Right) => right += 1,
                    _ => {}
                }
            }
        }
        let label = match left.cmp(&right) {
            std::cmp::Ordering::Greater => CampLabel::Left,
            std::cmp::Ordering::Less => CampLabel::Right,
            std::cmp::Ordering::Equal => CampLabel::Unassigned,
        };
        part.labels.insert(t.tweet_id.clone(), label);
        part.provenance.insert(t.tweet_id.clone(), (left, right));
    }
    part
}

/// Tweets of one camp whose trend carries `issue`, in tweet-id order.
pub fn subcorpus<'a>(
    corpus: &'a Corpus,
    partition: &CorpusPartition,
    camp: CampLabel,
    issue: &str,
) -> Result<Vec<&'a TweetRecord>, CorpusError> {
    let trend_ids: HashSet<&str> = corpus
        .trends()
        .values()
        .filter(|t| t.issue_label.as_deref() == Some(issue))
        .map(|t| t.trend_id.as_str())
        .collect();
    if trend_ids.is_empty() {
        return Err(CorpusError::UnknownIssue(issue.to_string()));
    }
    Ok(corpus
        .tweets()
        .filter(|t| trend_ids.contains(t.trend_id.as_str()) && partition.label(&t.tweet_id) == camp)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn trend(id: &str, phrase: &str, date: &str) -> TrendRecord {
        TrendRecord { trend_id: id.into(), phrase: phrase.into(), first_seen: d(date), issue_label: None }
    }

    fn tweet(id: &str, author: &str, trend: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            author_id: author.into(),
            created_at: "2022-03-01T10:00:00Z".parse().unwrap(),
            text_original: format!("text {id}"),
            text_translated: None,
            retweet_count: 0,
            retweeted_tweet_id: None,
            retweeted_author_id: None,
            trend_id: trend.into(),
            amr_refs: vec![],
        }
    }

    fn retweet(id: &str, author: &str, of: &TweetRecord) -> TweetRecord {
        TweetRecord {
            retweeted_tweet_id: Some(of.tweet_id.clone()),
            retweeted_author_id: Some(of.author_id.clone()),
            ..tweet(id, author, &of.trend_id)
        }
    }

    #[test]
    fn empty_corpus() {
        let c = parse_corpus("", None).unwrap();
        assert!(c.is_empty());
        assert!(c.trend_counts().is_empty());
    }

    #[test]
    fn three_records_two_trends() {
        let text = [tweet("1", "a", "t1"), tweet("2", "b", "t1"), tweet("3", "a", "t2")]
            .iter()
            .map(|t| serde_json::to_string(t).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        let c = parse_corpus(&text, None).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.trend_counts().len(), 2);
        assert_eq!(c.trend_counts()["t1"], 2);
    }

    #[test]
    fn retweet_id_without_author_names_field() {
        let line = r#"{"tweet_id":"1","author_id":"a","created_at":"2022-03-01T10:00:00Z","text_original":"x","retweet_count":0,"retweeted_tweet_id":"9","trend_id":"t"}"#;
        let err = parse_corpus(line, None).unwrap_err();
        assert!(err.to_string().contains("retweeted_author_id"), "{err}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let good = serde_json::to_string(&tweet("1", "a", "t")).unwrap();
        let err = parse_corpus(&format!("{good}\n\n{{oops"), None).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 3, .. }), "{err}");
    }

    #[test]
    fn negative_retweet_count_is_malformed() {
        let line = r#"{"tweet_id":"1","author_id":"a","created_at":"2022-03-01T10:00:00Z","text_original":"x","retweet_count":-2,"trend_id":"t"}"#;
        assert!(matches!(parse_corpus(line, None), Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn duplicate_and_unknown_trend() {
        let a = serde_json::to_string(&tweet("1", "a", "t")).unwrap();
        let err = parse_corpus(&format!("{a}\n{a}"), None).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateTweet { line: 2, .. }));
        let trends = [trend("other", "#x", "2022-01-01")];
        let err = parse_corpus(&a, Some(&trends)).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTrend { .. }));
    }

    #[test]
    fn merge_within_window() {
        let out = merge_trends(&[trend("a", "#Luetzerath", "2023-01-10"), trend("b", "#Luetzerath", "2023-01-11")], 1)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].trend_id, "a");
    }

    #[test]
    fn merge_outside_window() {
        let out = merge_trends(&[trend("a", "#COP27", "2022-11-06"), trend("b", "#COP27", "2022-11-11")], 1).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn merge_chains_transitively_and_keeps_label() {
        let mut late = trend("c", "#x", "2022-01-03");
        late.issue_label = Some("covid".into());
        let m =
            merge_trends_with_map(&[trend("b", "#x", "2022-01-02"), late, trend("a", "#x", "2022-01-01")], 1).unwrap();
        assert_eq!(m.trends.len(), 1);
        assert_eq!(m.trends[0].trend_id, "a");
        assert_eq!(m.trends[0].first_seen, d("2022-01-01"));
        assert_eq!(m.trends[0].issue_label.as_deref(), Some("covid"));
        assert_eq!(m.mapping["c"], "a");
    }

    #[test]
    fn negative_window_rejected() {
        assert!(matches!(merge_trends(&[], -1), Err(CorpusError::NegativeWindow(-1))));
    }

    fn camp_fixture(left: usize, right: usize) -> (Corpus, BTreeMap<String, CampLabel>) {
        let orig = tweet("o", "author", "t");
        let mut recs = vec![orig.clone()];
        let mut camps = BTreeMap::new();
        for i in 0..left {
            let u = format!("l{i}");
            recs.push(retweet(&format!("rl{i}"), &u, &orig));
            camps.insert(u, CampLabel::Left);
        }
        for i in 0..right {
            let u = format!("r{i}");
            recs.push(retweet(&format!("rr{i}"), &u, &orig));
            camps.insert(u, CampLabel::Right);
        }
        (Corpus::from_records(recs, None).unwrap(), camps)
    }

    #[test]
    fn strict_majority_and_ties() {
        let (c, camps) = camp_fixture(3, 1);
        let p = assign_tweet_camps(&c, &camps);
        assert_eq!(p.label("o"), CampLabel::Left);
        assert_eq!(p.provenance["o"], (3, 1));

        let (c, camps) = camp_fixture(2, 2);
        assert_eq!(assign_tweet_camps(&c, &camps).label("o"), CampLabel::Unassigned);

        let (c, camps) = camp_fixture(0, 0);
        let mut camps = camps;
        camps.insert("nobody".into(), CampLabel::Left);
        assert_eq!(assign_tweet_camps(&c, &camps).label("o"), CampLabel::Unassigned);
    }

    #[test]
    fn repeated_retweets_by_one_user_count_once() {
        let orig = tweet("o", "author", "t");
        let recs = vec![orig.clone(), retweet("r1", "l", &orig), retweet("r2", "l", &orig), retweet("r3", "r", &orig)];
        let c = Corpus::from_records(recs, None).unwrap();
        let camps = BTreeMap::from([("l".to_string(), CampLabel::Left), ("r".to_string(), CampLabel::Right)]);
        assert_eq!(assign_tweet_camps(&c, &camps).label("o"), CampLabel::Unassigned);
    }

    fn issue_fixture() -> (Corpus, CorpusPartition) {
        let mut covid = trend("tc", "#masks", "2022-01-01");
        covid.issue_label = Some("covid".into());
        let mut climate = trend("tk", "#cop", "2022-01-01");
        climate.issue_label = Some("climate".into());
        let mut empty = trend("te", "#nothing", "2022-01-01");
        empty.issue_label = Some("sports".into());
        let trends = vec![covid, climate, empty];
        let mut recs = Vec::new();
        let mut labels = BTreeMap::new();
        // 10 tweets: 7 covid (4 left, 2 right, 1 unassigned), 3 climate (2 left, 1 right)
        let plan = [
            ("01", "tc", CampLabel::Left),
            ("02", "tc", CampLabel::Right),
            ("03", "tc", CampLabel::Left),
            ("04", "tk", CampLabel::Left),
            ("05", "tc", CampLabel::Unassigned),
            ("06", "tc", CampLabel::Left),
            ("07", "tk", CampLabel::Right),
            ("08", "tc", CampLabel::Right),
            ("09", "tk", CampLabel::Left),
            ("10", "tc", CampLabel::Left),
        ];
        for (id, tr, camp) in plan {
            recs.push(tweet(id, "a", tr));
            labels.insert(id.to_string(), camp);
        }
        let c = Corpus::from_records(recs, Some(&trends)).unwrap();
        (c, CorpusPartition { labels, provenance: BTreeMap::new() })
    }

    #[test]
    fn subcorpus_filters_by_issue_and_camp() {
        let (c, p) = issue_fixture();
        let ids: Vec<_> =
            subcorpus(&c, &p, CampLabel::Left, "covid").unwrap().iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(ids, ["01", "03", "06", "10"]);
        assert!(subcorpus(&c, &p, CampLabel::Left, "sports").unwrap().is_empty());
        let un: Vec<_> =
            subcorpus(&c, &p, CampLabel::Unassigned, "covid").unwrap().iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(un, ["05"]);
        assert!(matches!(subcorpus(&c, &p, CampLabel::Left, "nope"), Err(CorpusError::UnknownIssue(_))));
    }

    #[test]
    fn subcorpora_cover_issue_disjointly() {
        let (c, p) = issue_fixture();
        for issue in ["covid", "climate", "sports"] {
            let mut all: Vec<&str> = Vec::new();
            for camp in [CampLabel::Left, CampLabel::Right, CampLabel::Unassigned] {
                all.extend(subcorpus(&c, &p, camp, issue).unwrap().iter().map(|t| t.tweet_id.as_str()));
            }
            let uniq: BTreeSet<_> = all.iter().copied().collect();
            assert_eq!(uniq.len(), all.len());
            let expected = c.tweets().filter(|t| c.trends()[&t.trend_id].issue_label.as_deref() == Some(issue)).count();
            assert_eq!(all.len(), expected);
        }
    }

    #[test]
    fn user_camp_file() {
        let camps = parse_user_camps("# seeds\nalice\tleft\nbob\tRIGHT\n").unwrap();
        assert_eq!(camps["bob"], CampLabel::Right);
        assert!(parse_user_camps("carol\tcenter\n").is_err());
        assert_eq!(write_user_camps(&camps), "alice\tleft\nbob\tright\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn trend_strategy() -> impl Strategy<Value = Vec<TrendRecord>> {
            prop::collection::vec((0usize..3, 0i64..20), 0..15).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (p, off))| TrendRecord {
                        trend_id: format!("t{i:02}"),
                        phrase: format!("#p{p}"),
                        first_seen: d("2022-01-01") + chrono::Duration::days(off),
                        issue_label: None,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn merge_is_idempotent(trends in trend_strategy(), window in 0i64..4) {
                let once = merge_trends(&trends, window).unwrap();
                let twice = merge_trends(&once, window).unwrap();
                prop_assert!(once.len() <= trends.len());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn camp_assignment_ignores_record_order(
                votes in prop::collection::vec(prop::bool::ANY, 0..12),
                seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let orig = tweet("o", "author", "t");
                let mut recs = vec![orig.clone()];
                let mut camps = BTreeMap::new();
                for (i, left) in votes.iter().enumerate() {
                    let u = format!("u{i}");
                    recs.push(retweet(&format!("r{i}"), &u, &orig));
                    camps.insert(u, if *left { CampLabel::Left } else { CampLabel::Right });
                }
                let base = assign_tweet_camps(&Corpus::from_records(recs.clone(), None).unwrap(), &camps);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                recs.shuffle(&mut rng);
                let shuffled = assign_tweet_camps(&Corpus::from_records(recs, None).unwrap(), &camps);
                prop_assert_eq!(base, shuffled);
            }
        }
    }
}
