use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_actnet");

fn actnet(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = actnet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

/// Kills the child process when dropped.
struct Running {
    child: Child,
    url: String,
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn(args: &[&str]) -> Running {
    let mut child = Command::new(BIN).args(args).stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url =
        line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner {line:?}")).to_string();
    Running { child, url }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
}

fn post(url: &str, body: Value) -> (u16, Value) {
    let mut resp = agent().post(url).send_json(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    mock: Running,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("mini");
        ok(&["synth", "--out", root.to_str().unwrap()]);
        let mock = spawn(&["mock-llm"]);
        Fixture { _dir: dir, root, mock }
    }

    fn config(&self) -> String {
        self.root.join("pipeline.toml").display().to_string()
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn bundle(&self) -> String {
        self.path("bundle")
    }

    fn run(&self, extra: &[&str]) -> Value {
        let config = self.config();
        let mut args = vec!["run", "--config", &config, "--llm-endpoint", &self.mock.url];
        args.extend_from_slice(extra);
        serde_json::from_str(&ok(&args)).unwrap()
    }

    fn mock_calls(&self) -> u64 {
        get(&format!("{}/calls", self.mock.url)).1["calls"].as_u64().unwrap()
    }
}

fn core_golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/mini_manifest.json")
}

#[test]
fn run_over_http_matches_golden_and_reuses_cache() {
    let fx = Fixture::new();
    let cache = fx.path("cache");
    let summary = fx.run(&["--llm-cache", &cache]);
    assert_eq!(summary["issues"], json!(["Climate change", "Covid", "Ukraine"]));
    let manifest = std::fs::read_to_string(fx.root.join("bundle/manifest.json")).unwrap();
    assert_eq!(manifest, std::fs::read_to_string(core_golden()).unwrap());

    let calls = fx.mock_calls();
    assert!(calls > 0);
    fx.run(&["--llm-cache", &cache]);
    assert_eq!(fx.mock_calls(), calls);
    assert_eq!(std::fs::read_to_string(fx.root.join("bundle/manifest.json")).unwrap(), manifest);
}

#[test]
fn errors_exit_nonzero_with_json_lines() {
    let fx = Fixture::new();
    let config = fx.config();
    let e = error_json(&actnet(&["run", "--config", &config, "--issue", "Mars"]));
    assert_eq!(e["stage"], "ingest");
    assert!(e["cause"].as_str().unwrap().contains("Mars"));
    assert!(!fx.root.join("bundle").exists());

    let e = error_json(&actnet(&["run", "--config", "/nonexistent/pipeline.toml"]));
    assert!(e["error"].as_str().unwrap().contains("/nonexistent/pipeline.toml"));

    let e = error_json(&actnet(&["run", "--config", &config, "--min-weight", "-1"]));
    assert!(e["error"].as_str().unwrap().contains("non-negative"));

    let e = error_json(&actnet(&["run", "--config", &config, "--llm-endpoint", "http://127.0.0.1:9"]));
    assert_eq!(e["stage"], "labels");

    let e = error_json(&actnet(&["export", "--bundle", &fx.bundle(), "--issue", "Covid", "--kind", "identity"]));
    assert!(e["error"].as_str().unwrap().contains("bundle"));

    let out = actnet(&["run", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["usage"], true);
    assert!(actnet(&["--help"]).status.success());
}

#[test]
fn stage_commands_chain_to_the_full_run() {
    let fx = Fixture::new();
    let config = fx.config();
    let cfd = ["--labeler", "cfd"];
    let summary = fx.run(&cfd);
    assert_eq!(summary["files"].as_u64().unwrap() as usize, 34);

    let ingest: Value = serde_json::from_str(&ok(&["ingest", "--config", &config])).unwrap();
    assert_eq!(ingest["tweets"], 200);
    assert_eq!(ingest["issues"].as_array().unwrap().len(), 3);
    // tr01 and tr03 share a phrase within the merge window.
    assert!(ingest["trends"].get("tr03").is_none());

    let merged = ok(&["trends", "merge", "--trends", &fx.path("trends.jsonl"), "--window-days", "3"]);
    assert_eq!(merged.lines().count(), 9);
    let unmerged = ok(&["trends", "merge", "--trends", &fx.path("trends.jsonl"), "--window-days", "0"]);
    assert_eq!(unmerged.lines().count(), 10);

    let partitions = fx.path("partitions.tsv");
    ok(&["opinion", "cluster", "--config", &config, "--out", &partitions]);
    assert_eq!(
        std::fs::read_to_string(&partitions).unwrap(),
        std::fs::read_to_string(fx.root.join("bundle/partitions.tsv")).unwrap()
    );
    let camps = fx.path("camps.tsv");
    ok(&["camps", "--config", &config, "--partitions", &partitions, "--out", &camps]);
    assert_eq!(
        std::fs::read_to_string(&camps).unwrap(),
        std::fs::read_to_string(fx.root.join("bundle/camps.tsv")).unwrap()
    );

    let signals = fx.path("signals.jsonl");
    ok(&["signals", "extract", "--config", &config, "--out", &signals]);
    assert_eq!(
        std::fs::read_to_string(&signals).unwrap(),
        std::fs::read_to_string(fx.root.join("bundle/signals.jsonl")).unwrap()
    );
    let labels = fx.path("labels.jsonl");
    ok(&["labels", "run", "--config", &config, "--signals", &signals, "--labeler", "cfd", "--out", &labels]);
    assert_eq!(
        std::fs::read_to_string(&labels).unwrap(),
        std::fs::read_to_string(fx.root.join("bundle/labels.jsonl")).unwrap()
    );

    let nets: Vec<Value> = serde_json::from_str(&ok(&[
        "actant",
        "build",
        "--config",
        &config,
        "--signals",
        &signals,
        "--labels",
        &labels,
        "--camps",
        &camps,
    ]))
    .unwrap();
    assert_eq!(nets.len(), 6);
    let stored: Value =
        serde_json::from_str(&std::fs::read_to_string(fx.root.join("bundle/networks/covid/left.json")).unwrap())
            .unwrap();
    assert!(nets.contains(&stored));
}

#[test]
fn bundle_views_and_exports() {
    let fx = Fixture::new();
    fx.run(&[]);
    let b = fx.bundle();

    let doc: Value =
        serde_json::from_str(&ok(&["export", "--bundle", &b, "--issue", "Ukraine", "--kind", "full-left"])).unwrap();
    let n = doc["edges"].as_array().unwrap().len();
    let filtered: Value = serde_json::from_str(&ok(&[
        "export",
        "--bundle",
        &b,
        "--issue",
        "ukraine",
        "--kind",
        "full-left",
        "--min-weight",
        "700",
    ]))
    .unwrap();
    let kept = filtered["edges"].as_array().unwrap();
    assert!(kept.len() < n);
    assert!(kept.iter().all(|e| e["weight"].as_f64().unwrap() >= 700.0));

    let dot = ok(&["export", "--bundle", &b, "--issue", "Ukraine", "--kind", "conflict", "--format", "dot"]);
    assert!(dot.starts_with("digraph") && dot.contains("color=\"red\"") && dot.contains("color=\"blue\""));
    let graphml = ok(&["export", "--bundle", &b, "--issue", "Covid", "--kind", "identity", "--format", "graphml"]);
    assert!(graphml.contains("<graphml") && graphml.contains("we@left"));

    let default_identity: Value =
        serde_json::from_str(&ok(&["identity", "--bundle", &b, "--issue", "Ukraine"])).unwrap();
    let stored = ok(&["export", "--bundle", &b, "--issue", "Ukraine", "--kind", "identity"]);
    assert_eq!(default_identity, serde_json::from_str::<Value>(&stored).unwrap());
    let loose: Value =
        serde_json::from_str(&ok(&["identity", "--bundle", &b, "--issue", "Ukraine", "--min-weight", "0"])).unwrap();
    assert!(loose["edges"].as_array().unwrap().len() >= default_identity["edges"].as_array().unwrap().len());

    let literal: Vec<Value> = serde_json::from_str(&ok(&["conflict", "--bundle", &b, "--issue", "Ukraine"])).unwrap();
    assert!(!literal.is_empty());
    assert!(literal.iter().all(|c| c["score_left"].as_f64().unwrap() * c["score_right"].as_f64().unwrap() < 0.0));
    let strict: Vec<Value> = serde_json::from_str(&ok(&[
        "conflict",
        "--bundle",
        &b,
        "--issue",
        "Ukraine",
        "--conflict-mode",
        "strict",
        "--min-weight",
        "0",
    ]))
    .unwrap();
    assert!(strict.iter().all(|c| c["mode"] == "strict"));

    let report = ok(&["report", "--bundle", &b]);
    for issue in ["Climate change", "Covid", "Ukraine", "recurring actants"] {
        assert!(report.contains(issue), "report lacks {issue}");
    }
}

#[test]
fn validate_labels_reports_agreement() {
    let fx = Fixture::new();
    fx.run(&[]);
    let labels = fx.root.join("bundle/labels.jsonl");
    let rows: Vec<Value> =
        std::fs::read_to_string(&labels).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // Agree on the first three, disagree on the fourth.
    let mut gold = String::new();
    for (i, r) in rows.iter().take(4).enumerate() {
        let t = r["relation_type"].as_str().unwrap();
        let t = if i < 3 {
            t
        } else if t == "neutral" {
            "supportive"
        } else {
            "neutral"
        };
        gold.push_str(&format!("{}\t{t}\n", r["instance_id"].as_str().unwrap()));
    }
    let gold_path = fx.path("gold.tsv");
    std::fs::write(&gold_path, gold).unwrap();
    let v: Value = serde_json::from_str(&ok(&[
        "validate-labels",
        "--labels",
        labels.to_str().unwrap(),
        "--annotations",
        &gold_path,
    ]))
    .unwrap();
    assert_eq!(v["compared"], 4);
    assert_eq!(v["agreement"], 0.75);
    assert!(v["fallback_used"].as_u64().unwrap() > 0);
}

#[test]
fn server_endpoints() {
    let fx = Fixture::new();
    fx.run(&[]);
    let server = spawn(&["serve", "--bundle", &fx.bundle(), "--addr", "127.0.0.1:0"]);
    let api = |p: &str| format!("{}/api{p}", server.url);

    let (status, issues) = get(&api("/issues"));
    assert_eq!(status, 200);
    let names: Vec<&str> = issues.as_array().unwrap().iter().map(|i| i["issue"].as_str().unwrap()).collect();
    assert_eq!(names, ["Climate change", "Covid", "Ukraine"]);

    let (status, doc) = get(&api("/networks/Ukraine/full-right"));
    assert_eq!(status, 200);
    let weights: Vec<f64> = doc["edges"].as_array().unwrap().iter().map(|e| e["weight"].as_f64().unwrap()).collect();
    let top = weights.iter().copied().fold(0.0, f64::max);
    let (_, filtered) = get(&api(&format!("/networks/ukraine/full-right?min_weight={top}")));
    let expected = weights.iter().filter(|w| **w >= top).count();
    assert_eq!(filtered["edges"].as_array().unwrap().len(), expected);
    assert!(expected < weights.len());
    assert_eq!(get(&api("/networks/Mars/identity")).0, 404);
    assert_eq!(get(&api("/networks/Ukraine/sideways")).0, 404);
    assert_eq!(get(&api("/networks/Ukraine/identity?min_weight=-3")).0, 400);
    assert_eq!(get(&api("/networks/Ukraine/identity?min_weight=lots")).0, 400);

    let edge =
        doc["edges"].as_array().unwrap().iter().max_by_key(|e| e["provenance_ids"].as_array().unwrap().len()).unwrap();
    let id = edge["id"].as_str().unwrap();
    let (status, tweets) = get(&api(&format!("/edges/{id}/tweets?k=2")));
    assert_eq!(status, 200);
    let tweets = tweets.as_array().unwrap();
    assert_eq!(tweets.len(), 2.min(edge["provenance_ids"].as_array().unwrap().len()));
    let (_, all) = get(&api(&format!("/edges/{id}/tweets")));
    let counts: Vec<u64> = all.as_array().unwrap().iter().map(|t| t["retweet_count"].as_u64().unwrap()).collect();
    assert!(counts.len() <= 5 && counts.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(get(&api("/edges/nope/tweets")).0, 404);
    assert_eq!(get(&api(&format!("/edges/{id}/tweets?k=0"))).0, 400);

    let (status, media) = get(&api("/actants/media/cross-issue"));
    assert_eq!(status, 200);
    assert_eq!(media["camps"]["right"]["issues"].as_array().unwrap().len(), 3);
    assert_eq!(get(&api("/actants/nobody/cross-issue")).0, 404);

    let (status, stored) = post(&api("/annotations"), json!({"edge_id": id, "note": "check context", "author": "a"}));
    assert_eq!(status, 201);
    assert!(stored["created_at"].is_string());
    let (_, listed) = get(&api(&format!("/annotations?edge_id={id}")));
    assert_eq!(listed.as_array().unwrap().len(), 1);
    assert_eq!(listed[0]["note"], "check context");
    assert_eq!(post(&api("/annotations"), json!({"edge_id": id, "note": ""})).0, 400);
    assert_eq!(post(&api("/annotations"), json!({"edge_id": "nope", "note": "x"})).0, 404);
    assert_eq!(post(&api("/annotations"), json!({"note": "x"})).0, 400);
    assert_eq!(get(&api("/annotations")).1.as_array().unwrap().len(), 1);
    assert_eq!(get(&api("/unknown")).0, 404);

    // Same port again: the second server must fail.
    let addr = server.url.trim_start_matches("http://").to_string();
    let e = error_json(&actnet(&["serve", "--bundle", &fx.bundle(), "--addr", &addr]));
    assert!(e["error"].as_str().unwrap().contains(&addr));
}

#[test]
fn serve_refuses_corrupt_bundle() {
    let fx = Fixture::new();
    fx.run(&[]);
    std::fs::write(fx.root.join("bundle/issues.json"), "[]\n").unwrap();
    let e = error_json(&actnet(&["serve", "--bundle", &fx.bundle(), "--addr", "127.0.0.1:0"]));
    assert!(e["error"].as_str().unwrap().contains("issues.json"));
}
