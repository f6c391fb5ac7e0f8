//! Support code for the `actnet` binary: config overrides, error lines,
//! the text report, the analysis server and a stand-in chat endpoint.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use actnet::actantial::ConflictMode;
use actnet::labeling::llm::ChatRequest;
use actnet::pipeline::{AnalysisBundle, LabelerKind, NetworkKind, PipelineConfig, PipelineError};
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

pub mod server;

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Restrict the run to this issue (repeatable).
    #[arg(long = "issue")]
    pub issues: Vec<String>,
    /// Identity and conflict edge-weight threshold for every issue.
    #[arg(long, allow_negative_numbers = true)]
    pub min_weight: Option<f64>,
    #[arg(long)]
    pub conflict_mode: Option<ConflictMode>,
    #[arg(long)]
    pub centrality_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base URL of an OpenAI-compatible chat endpoint.
    #[arg(long)]
    pub llm_endpoint: Option<String>,
    #[arg(long)]
    pub llm_cache: Option<PathBuf>,
    #[arg(long, value_parser = parse_labeler)]
    pub labeler: Option<LabelerKind>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn parse_labeler(s: &str) -> Result<LabelerKind, String> {
    match s {
        "cfd" => Ok(LabelerKind::Cfd),
        "llm" => Ok(LabelerKind::Llm),
        other => Err(format!("unknown labeler {other:?} (expected cfd or llm)")),
    }
}

impl Overrides {
    /// Paths given on the command line are taken relative to the working
    /// directory, not the config file.
    pub fn apply(&self, config: &mut PipelineConfig) {
        let cwd = std::env::current_dir().unwrap_or_default();
        if !self.issues.is_empty() {
            config.issues = self.issues.clone();
        }
        if let Some(w) = self.min_weight {
            config.identity_min_weight = Some(w);
            config.conflict_min_weight = Some(w);
        }
        if let Some(m) = self.conflict_mode {
            config.conflict_mode = m;
        }
        if let Some(k) = self.centrality_k {
            config.centrality_k = k;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(url) = &self.llm_endpoint {
            config.llm.base_url = url.clone();
        }
        if let Some(dir) = &self.llm_cache {
            config.llm.cache_dir = Some(cwd.join(dir));
        }
        if let Some(l) = self.labeler {
            config.labeler = l;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = cwd.join(dir);
        }
    }
}

/// One-line JSON description of a failure, for standard error.
pub fn error_line(err: &anyhow::Error) -> String {
    let mut v = json!({ "error": format!("{err:#}") });
    if let Some(p) = err.downcast_ref::<PipelineError>() {
        if let Some(stage) = p.stage() {
            v["stage"] = json!(stage);
            v["cause"] = json!(p.cause().to_string());
        }
    }
    v.to_string()
}

/// Plain-text overview of a bundle.
pub fn render_report(bundle: &AnalysisBundle, top: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bundle {} (config {})", bundle.dir().display(), &bundle.manifest.config_digest[..12]);
    for entry in &bundle.issues {
        let _ = writeln!(out, "\n== {} ({} tweets, {} trends)", entry.issue, entry.tweets, entry.trends.len());
        for kind in NetworkKind::ALL {
            if let Ok(doc) = bundle.document(&entry.issue, kind) {
                let _ =
                    writeln!(out, "  {:<10} {:>4} nodes {:>4} edges", kind.as_str(), doc.nodes.len(), doc.edges.len());
            }
        }
        let _ = writeln!(
            out,
            "  thresholds: identity {} / conflict {} ({})",
            entry.identity_min_weight, entry.conflict_min_weight, entry.conflict_mode
        );
        if let Some(conflicts) = bundle.conflicts.get(&entry.issue) {
            for c in conflicts.iter().take(top) {
                let _ = writeln!(
                    out,
                    "  conflict {} -> {}: left {:+.2} (w {}), right {:+.2} (w {})",
                    c.source, c.target, c.score_left, c.weight_left, c.score_right, c.weight_right
                );
            }
        }
    }
    let _ = writeln!(out, "\n== recurring actants (>= {} issues)", bundle.cross_issue.min_issues);
    for (camp, list) in &bundle.cross_issue.camps {
        for a in list.iter().take(top) {
            let issues: Vec<String> = a.issues.iter().map(|p| format!("{}:{:+}", p.issue, p.polarity)).collect();
            let _ = writeln!(out, "  {:<5} {:<20} {}", camp.as_str(), a.actant, issues.join(" "));
        }
    }
    out
}

/// Stand-in chat endpoint answering with the synthetic fixture's keyword
/// verdicts. `GET /calls` reports how many completions were served.
pub fn mock_llm_router() -> Router {
    let calls = Arc::new(AtomicUsize::new(0));
    let complete = |State(calls): State<Arc<AtomicUsize>>, body: axum::body::Bytes| async move {
        calls.fetch_add(1, Ordering::SeqCst);
        match serde_json::from_slice::<ChatRequest>(&body) {
            Ok(req) => {
                let reply: Value = serde_json::from_str(&actnet::synth::mock_reply(req.prompt())).expect("mock body");
                (StatusCode::OK, Json(reply))
            }
            Err(e) => (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))),
        }
    };
    Router::new()
        .route("/chat/completions", post(complete))
        .route("/v1/chat/completions", post(complete))
        .route(
            "/calls",
            get(|State(calls): State<Arc<AtomicUsize>>| async move {
                Json(json!({ "calls": calls.load(Ordering::SeqCst) }))
            }),
        )
        .with_state(calls)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_config_values() {
        let mut c = PipelineConfig::default();
        let o = Overrides {
            issues: vec!["Ukraine".into()],
            min_weight: Some(12.0),
            conflict_mode: Some(ConflictMode::Strict),
            centrality_k: Some(7),
            seed: Some(99),
            llm_endpoint: Some("http://h:1/v1".into()),
            labeler: Some(LabelerKind::Llm),
            ..Overrides::default()
        };
        o.apply(&mut c);
        assert_eq!(c.issues, vec!["Ukraine".to_string()]);
        assert_eq!((c.identity_min_weight, c.conflict_min_weight), (Some(12.0), Some(12.0)));
        assert_eq!(c.conflict_mode, ConflictMode::Strict);
        assert_eq!((c.centrality_k, c.seed), (7, 99));
        assert_eq!(c.llm.base_url, "http://h:1/v1");
        assert_eq!(c.labeler, LabelerKind::Llm);
    }

    #[test]
    fn empty_overrides_change_nothing() {
        let mut c = PipelineConfig::default();
        Overrides::default().apply(&mut c);
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn error_lines_name_the_stage() {
        let inner = PipelineError::Invalid("boom".into());
        let staged = PipelineError::Stage { stage: "labels", source: Box::new(inner) };
        let v: Value = serde_json::from_str(&error_line(&anyhow::Error::new(staged))).unwrap();
        assert_eq!(v["stage"], "labels");
        assert_eq!(v["cause"], "invalid config: boom");
        let plain: Value = serde_json::from_str(&error_line(&anyhow::anyhow!("x"))).unwrap();
        assert_eq!(plain, json!({"error": "x"}));
    }
}
