//! Deterministic synthetic mini-corpus with three issues, matching AMR side
//! file, camp seeds and a keyword-driven mock chat transport.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::amr::{parse_penman, write_amr_file, AmrGraph};
use crate::corpus::{write_user_camps, CampLabel, TrendRecord, TweetRecord};
use crate::labeling::llm::{chat_completion_body, ChatRequest, ChatTransport};

struct Narrative {
    text: &'static str,
    penman: &'static str,
}

const fn n(text: &'static str, penman: &'static str) -> Narrative {
    Narrative { text, penman }
}

const UKRAINE_LEFT: &[Narrative] = &[
    n("We support Ukraine.", r#"(s / support-01 :ARG0 (w / we) :ARG1 (c / country :name (n / name :op1 "Ukraine")))"#),
    n(
        "Russia attacks Ukraine.",
        r#"(a / attack-01 :ARG0 (c / country :name (n / name :op1 "Russia")) :ARG1 (c2 / country :name (n2 / name :op1 "Ukraine")))"#,
    ),
    n(
        "We send weapons to Ukraine.",
        r#"(s / send-01 :ARG0 (w / we) :ARG1 (w2 / weapon) :ARG2 (c / country :name (n / name :op1 "Ukraine")))"#,
    ),
    n(
        "Wladimir Putin threatens Europe.",
        r#"(t / threaten-01 :ARG0 (p / person :name (n / name :op1 "Wladimir" :op2 "Putin")) :ARG1 (c / continent :name (n2 / name :op1 "Europe")))"#,
    ),
    n(
        "We want to protect Ukraine.",
        r#"(w / want-01 :ARG0 (w2 / we) :ARG1 (p / protect-01 :ARG0 w2 :ARG1 (c / country :name (n / name :op1 "Ukraine"))))"#,
    ),
    n("Russia threatens us.", r#"(t / threaten-01 :ARG0 (c / country :name (n / name :op1 "Russia")) :ARG1 (w / we))"#),
];

const UKRAINE_RIGHT: &[Narrative] = &[
    n("We do not support weapons deliveries.", "(s / support-01 :polarity - :ARG0 (w / we) :ARG1 (w2 / weapon))"),
    n("Sanctions destroy us.", "(d / destroy-01 :ARG0 (s / sanction) :ARG1 (w / we))"),
    n("The media deceive us.", "(d / deceive-01 :ARG0 (m / media) :ARG1 (w / we))"),
    n("We support peace.", "(s / support-01 :ARG0 (w / we) :ARG1 (p / peace))"),
    n(
        "Russia does not threaten us.",
        r#"(t / threaten-01 :polarity - :ARG0 (c / country :name (n / name :op1 "Russia")) :ARG1 (w / we))"#,
    ),
];

const COVID_LEFT: &[Narrative] = &[
    n("We support vaccination.", "(s / support-01 :ARG0 (w / we) :ARG1 (v / vaccination))"),
    n("Masks protect us.", "(p / protect-01 :ARG0 (m / mask) :ARG1 (w / we))"),
    n(
        "We criticize the Querdenker.",
        r#"(c / criticize-01 :ARG0 (w / we) :ARG1 (p / person :name (n / name :op1 "Querdenker")))"#,
    ),
    n("The government helps hospitals.", "(h / help-01 :ARG0 (g / government) :ARG1 (h2 / hospital))"),
    n("The media report on the pandemic.", "(r / report-01 :ARG0 (m / media) :ARG1 (p / pandemic))"),
];

const COVID_RIGHT: &[Narrative] = &[
    n("We oppose vaccination.", "(o / oppose-01 :ARG0 (w / we) :ARG1 (v / vaccination))"),
    n("The government threatens us.", "(t / threaten-01 :ARG0 (g / government) :ARG1 (w / we))"),
    n("The media lie to us.", "(l / lie-08 :ARG0 (m / media) :ARG1 (w / we))"),
    n("We defend freedom.", "(d / defend-01 :ARG0 (w / we) :ARG1 (f / freedom))"),
    n("Masks do not protect us.", "(p / protect-01 :polarity - :ARG0 (m / mask) :ARG1 (w / we))"),
];

const CLIMATE_LEFT: &[Narrative] = &[
    n("We protect the climate.", "(p / protect-01 :ARG0 (w / we) :ARG1 (c / climate))"),
    n("We support heat pumps.", "(s / support-01 :ARG0 (w / we) :ARG1 (p / heat-pump))"),
    n(
        "The fossil lobby blocks climate protection.",
        "(b / block-01 :ARG0 (l / lobby :mod (f / fossil)) :ARG1 (p / protect-01 :ARG1 (c / climate)))",
    ),
    n("The government helps the climate.", "(h / help-01 :ARG0 (g / government) :ARG1 (c / climate))"),
    n("We thank the activists.", "(t / thank-01 :ARG0 (w / we) :ARG1 (a / activist))"),
];

const CLIMATE_RIGHT: &[Narrative] = &[
    n("We oppose heat pumps.", "(o / oppose-01 :ARG0 (w / we) :ARG1 (p / heat-pump))"),
    n("The government threatens us.", "(t / threaten-01 :ARG0 (g / government) :ARG1 (w / we))"),
    n("The media deceive us.", "(d / deceive-01 :ARG0 (m / media) :ARG1 (w / we))"),
    n("The activists block roads.", "(b / block-01 :ARG0 (a / activist) :ARG1 (r / road))"),
    n(
        "The government does not help the climate.",
        "(h / help-01 :polarity - :ARG0 (g / government) :ARG1 (c / climate))",
    ),
];

/// (trend id, phrase, first seen, issue)
const TRENDS: &[(&str, &str, (i32, u32, u32), &str)] = &[
    ("tr01", "#Ukraine", (2022, 2, 24), "Ukraine"),
    ("tr02", "#StandWithUkraine", (2022, 3, 1), "Ukraine"),
    ("tr03", "#Ukraine", (2022, 2, 26), "Ukraine"),
    ("tr04", "#Sanktionen", (2022, 3, 10), "Ukraine"),
    ("tr05", "#Maskenpflicht", (2021, 11, 1), "Covid"),
    ("tr06", "#Lockdown", (2021, 11, 15), "Covid"),
    ("tr07", "#Impfpflicht", (2021, 12, 1), "Covid"),
    ("tr08", "#Klimaschutz", (2022, 6, 1), "Climate change"),
    ("tr09", "#LetzteGeneration", (2022, 6, 15), "Climate change"),
    ("tr10", "#Heizungsgesetz", (2022, 7, 1), "Climate change"),
];

const USERS_PER_CAMP: usize = 12;
const SEED_USERS: &[(&str, CampLabel)] =
    &[("l01", CampLabel::Left), ("l02", CampLabel::Left), ("r01", CampLabel::Right), ("r02", CampLabel::Right)];
const ALIASES: &[(&str, &str)] = &[
    ("weapon", "weapons"),
    ("mask", "masks"),
    ("heat-pump", "heat pumps"),
    ("road", "roads"),
    ("sanction", "sanctions"),
    ("hospital", "hospitals"),
    ("activist", "activists"),
    ("Wladimir Putin", "putin"),
];

fn narratives(issue: &str, camp: CampLabel) -> &'static [Narrative] {
    match (issue, camp) {
        ("Ukraine", CampLabel::Left) => UKRAINE_LEFT,
        ("Ukraine", _) => UKRAINE_RIGHT,
        ("Covid", CampLabel::Left) => COVID_LEFT,
        ("Covid", _) => COVID_RIGHT,
        (_, CampLabel::Left) => CLIMATE_LEFT,
        _ => CLIMATE_RIGHT,
    }
}

fn users(camp: CampLabel) -> Vec<String> {
    let p = if camp == CampLabel::Left { 'l' } else { 'r' };
    (1..=USERS_PER_CAMP).map(|i| format!("{p}{i:02}")).collect()
}

#[derive(Debug, Clone)]
pub struct MiniCorpus {
    pub tweets: Vec<TweetRecord>,
    pub trends: Vec<TrendRecord>,
    pub amr: Vec<AmrGraph>,
    pub seeds: BTreeMap<String, CampLabel>,
    pub aliases: Vec<(String, String)>,
}

/// 200 tweets over ten trends (two of which merge within a 3-day window):
/// per trend three originals from each camp and fourteen retweets, mostly
/// within camp.
pub fn mini_corpus(seed: u64) -> MiniCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tweets = Vec::new();
    let mut amr = Vec::new();
    let mut cursor: BTreeMap<(&str, CampLabel), usize> = BTreeMap::new();
    let mut next_id = 0usize;
    let mut new_id = || {
        next_id += 1;
        format!("t{next_id:04}")
    };
    for &(trend_id, _, (y, m, d), issue) in TRENDS {
        let day = Utc.from_utc_datetime(
            &NaiveDate::from_ymd_opt(y, m, d).expect("valid date").and_hms_opt(8, 0, 0).expect("valid time"),
        );
        let mut minute = 0i64;
        let mut stamp = || {
            minute += 7;
            day + Duration::minutes(minute)
        };
        for camp in [CampLabel::Left, CampLabel::Right] {
            let mut pool = users(camp);
            pool.shuffle(&mut rng);
            let authors: Vec<String> = pool[..3].to_vec();
            let other = users(if camp == CampLabel::Left { CampLabel::Right } else { CampLabel::Left });
            for (k, author) in authors.iter().enumerate() {
                let list = narratives(issue, camp);
                let c = cursor.entry((issue, camp)).or_insert(0);
                let first = &list[*c % list.len()];
                *c += 1;
                let mut sentences = vec![first];
                if rng.gen_ratio(1, 5) {
                    sentences.push(&list[*c % list.len()]);
                    *c += 1;
                }
                let id = new_id();
                let mut refs = Vec::new();
                for (s, nar) in sentences.iter().enumerate() {
                    let text = format!("# ::id {id}.{s}\n{}", nar.penman);
                    amr.push(parse_penman(&text).expect("fixture narratives parse"));
                    refs.push(format!("{id}.{s}"));
                }
                let text: Vec<&str> = sentences.iter().map(|s| s.text).collect();
                let original = TweetRecord {
                    tweet_id: id.clone(),
                    author_id: author.clone(),
                    created_at: stamp(),
                    text_original: text.join(" "),
                    text_translated: None,
                    retweet_count: rng.gen_range(60..=600),
                    retweeted_tweet_id: None,
                    retweeted_author_id: None,
                    trend_id: trend_id.into(),
                    amr_refs: refs,
                };
                let n_rt = if k == 2 { 3 } else { 2 };
                let mut candidates: Vec<&String> = pool[3..].iter().collect();
                candidates.shuffle(&mut rng);
                let mut retweeters: Vec<String> = candidates[..n_rt].iter().map(|s| s.to_string()).collect();
                if k == 2 {
                    retweeters[2] = other.choose(&mut rng).expect("non-empty pool").clone();
                }
                let rts: Vec<TweetRecord> = retweeters
                    .into_iter()
                    .map(|user| TweetRecord {
                        tweet_id: new_id(),
                        author_id: user,
                        created_at: stamp(),
                        text_original: format!("RT @{author}: {}", original.text_original),
                        text_translated: None,
                        retweet_count: 0,
                        retweeted_tweet_id: Some(id.clone()),
                        retweeted_author_id: Some(author.clone()),
                        trend_id: trend_id.into(),
                        amr_refs: Vec::new(),
                    })
                    .collect();
                tweets.push(original);
                tweets.extend(rts);
            }
        }
    }
    let trends = TRENDS
        .iter()
        .map(|&(id, phrase, (y, m, d), issue)| TrendRecord {
            trend_id: id.into(),
            phrase: phrase.into(),
            first_seen: NaiveDate::from_ymd_opt(y, m, d).expect("valid date"),
            issue_label: Some(issue.into()),
        })
        .collect();
    MiniCorpus {
        tweets,
        trends,
        amr,
        seeds: SEED_USERS.iter().map(|(u, c)| (u.to_string(), *c)).collect(),
        aliases: ALIASES.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
    }
}

pub const FIXTURE_CONFIG: &str = r#"corpus = "tweets.jsonl"
trends = "trends.jsonl"
amr = ["amr.txt"]
aliases = "aliases.tsv"
camp_seeds = "camp_seeds.tsv"
output_dir = "bundle"
seed = 7
trend_merge_window_days = 3
min_trend_nodes = 5
min_cooccur = 3
centrality_k = 20
labeler = "llm"

[llm]
model = "mock"
max_retries = 3
max_in_flight = 4
"#;

fn json_lines<T: serde::Serialize>(items: &[T]) -> String {
    items.iter().map(|t| serde_json::to_string(t).expect("fixture records serialize") + "\n").collect()
}

/// Writes the mini-corpus inputs and a pipeline config into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> std::io::Result<()> {
    let mc = mini_corpus(seed);
    fs::create_dir_all(dir)?;
    fs::write(dir.join("tweets.jsonl"), json_lines(&mc.tweets))?;
    fs::write(dir.join("trends.jsonl"), json_lines(&mc.trends))?;
    fs::write(dir.join("amr.txt"), write_amr_file(&mc.amr))?;
    fs::write(dir.join("camp_seeds.tsv"), write_user_camps(&mc.seeds))?;
    let aliases: String = mc.aliases.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    fs::write(dir.join("aliases.tsv"), aliases)?;
    fs::write(dir.join("pipeline.toml"), FIXTURE_CONFIG)
}

/// Chat transport that answers from keywords in the tweet. About one prompt
/// in thirteen (chosen by prompt digest) always gets a malformed answer.
#[derive(Debug, Default)]
pub struct MockTransport {
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

const SUPPORTIVE: &[&str] = &["support", "protect", "send", "help", "defend", "thank"];
const CONFLICTIVE: &[&str] = &["attack", "oppose", "threaten", "deceive", "lie", "destroy", "criticize", "block"];

fn keys(actant: &str) -> Vec<String> {
    let word = actant.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_lowercase();
    match word.as_str() {
        "" => Vec::new(),
        "we" => vec!["we ".into(), "us".into()],
        w => vec![w.trim_end_matches('s').to_string()],
    }
}

/// Keyword verdict for one prompt: `(description, relation_type)`.
pub fn mock_verdict(prompt: &str) -> (String, &'static str) {
    let tweet = prompt.rsplit_once("TWEET: ").map_or("", |(_, t)| t).to_lowercase();
    let mut quoted = prompt.split('"');
    let a1 = keys(quoted.nth(1).unwrap_or(""));
    let a2 = keys(quoted.nth(1).unwrap_or(""));
    let sentences: Vec<&str> = tweet.split_inclusive('.').collect();
    let has = |s: &str, ks: &[String]| ks.iter().any(|k| s.contains(k.as_str()));
    let sentence = sentences
        .iter()
        .find(|s| has(s, &a1) && has(s, &a2))
        .or_else(|| sentences.iter().find(|s| has(s, &a2)))
        .or_else(|| sentences.iter().find(|s| has(s, &a1)))
        .copied()
        .unwrap_or(&tweet);
    let negated = sentence.contains(" not ");
    let verb = |list: &[&'static str]| list.iter().copied().find(|w| sentence.contains(w));
    let (word, base) = match (verb(SUPPORTIVE), verb(CONFLICTIVE)) {
        (Some(w), _) => (w, 1),
        (None, Some(w)) => (w, -1),
        _ => ("mention", 0),
    };
    let value = if negated { -base } else { base };
    let label = match value {
        1 => "supportive",
        -1 => "conflictive",
        _ => "neutral",
    };
    let description = if negated { format!("not {word}") } else { word.to_string() };
    (description, label)
}

/// Full response body the mock endpoint sends for `prompt`.
pub fn mock_reply(prompt: &str) -> String {
    if Sha256::digest(prompt.as_bytes())[0] < 20 {
        return chat_completion_body("I think this relation is probably supportive.");
    }
    let (description, label) = mock_verdict(prompt);
    chat_completion_body(&json!({"description": description, "relation_type": label}).to_string())
}

impl ChatTransport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(mock_reply(request.prompt()))
    }
}
