use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actnet::actantial::{conflict_networks, merge_identity_networks, ActantialNetwork, ConflictMode, Curation};
use actnet::amr::RelationInstance;
use actnet::corpus::{
    assign_tweet_camps, load_trends, merge_trends_with_map, parse_user_camps, write_user_camps, CampLabel,
};
use actnet::export::{GraphDocument, GraphFormat};
use actnet::labeling::{agreement_with_annotations, parse_annotations, LabelSource, LabeledRelation};
use actnet::opinion::{export_partitions, global_camps, parse_partitions, user_alignment};
use actnet::pipeline::{self, AnalysisBundle, NetworkKind, PipelineConfig};
use actnet_cli::{error_line, render_report, server, Overrides};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "actnet", version, about = "Opinion camps and actantial narrative networks from tweet corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        self.overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct OutArg {
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the analysis bundle.
    Run(ConfigArgs),
    /// Load and check the corpus and trend table.
    Ingest(ConfigArgs),
    /// Trend merging.
    #[command(subcommand)]
    Trends(TrendsCmd),
    /// Per-trend retweet clustering.
    #[command(subcommand)]
    Opinion(OpinionCmd),
    /// Global camps from trend partitions.
    Camps {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Partitions TSV from `opinion cluster`; clustered afresh when absent.
        #[arg(long)]
        partitions: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// AMR relation extraction.
    #[command(subcommand)]
    Signals(SignalsCmd),
    /// Relation labeling.
    #[command(subcommand)]
    Labels(LabelsCmd),
    /// Actantial networks per issue and camp.
    #[command(subcommand)]
    Actant(ActantCmd),
    /// Merged identity network of one issue, at any threshold.
    Identity {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        issue: String,
        #[arg(long, allow_negative_numbers = true)]
        min_weight: Option<f64>,
        #[arg(long, default_value = "we")]
        node: String,
        #[arg(long, default_value = "json")]
        format: GraphFormat,
        #[command(flatten)]
        out: OutArg,
    },
    /// Conflict edges of one issue, optionally recomputed with other settings.
    Conflict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        issue: String,
        #[arg(long, allow_negative_numbers = true)]
        min_weight: Option<f64>,
        #[arg(long)]
        conflict_mode: Option<ConflictMode>,
        #[arg(long)]
        centrality_k: Option<usize>,
        /// `edges` for the raw edge list, otherwise a graph format.
        #[arg(long, default_value = "edges")]
        format: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Text summary of a bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// One network of a bundle as JSON, GraphML or DOT.
    Export {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        issue: String,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "json")]
        format: GraphFormat,
        #[arg(long, allow_negative_numbers = true)]
        min_weight: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Agreement of stored labels with human annotations.
    ValidateLabels {
        #[arg(long)]
        labels: PathBuf,
        /// `instance_id<TAB>relation_type` lines.
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Serve a bundle over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Write the synthetic mini-corpus fixture.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Serve a keyword-driven stand-in chat endpoint for offline runs.
    MockLlm {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
    },
}

#[derive(Subcommand)]
enum TrendsCmd {
    /// Merge trends with the same phrase seen within a window of days.
    Merge {
        #[arg(long)]
        trends: PathBuf,
        #[arg(long)]
        window_days: i64,
        /// Also write `old_id<TAB>merged_id` lines here.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum OpinionCmd {
    /// Bipartition each trend's retweet network.
    Cluster {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum SignalsCmd {
    /// Narrative signals from the sentence graphs.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum LabelsCmd {
    /// Label signals with the configured labeler.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Signals JSONL from `signals extract`; extracted afresh when absent.
        #[arg(long)]
        signals: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum ActantCmd {
    /// Per-camp actantial networks for each selected issue.
    Build {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// `user<TAB>camp` lines from `camps`; computed afresh when absent.
        #[arg(long)]
        camps: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": first, "usage": true }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn emit(out: &OutArg, text: &str) -> Result<()> {
    match &out.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn to_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    items.into_iter().map(|i| serde_json::to_string(i).expect("output serializes") + "\n").collect()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn read_signals(path: &Path) -> Result<BTreeMap<String, RelationInstance>> {
    Ok(read_jsonl::<RelationInstance>(path)?.into_iter().map(|i| (i.instance_id.clone(), i)).collect())
}

fn load_bundle(path: &Path) -> Result<AnalysisBundle> {
    AnalysisBundle::load(path).with_context(|| format!("loading bundle {}", path.display()))
}

fn check_weight(w: Option<f64>) -> Result<Option<f64>> {
    match w {
        Some(w) if !(w >= 0.0) => bail!("--min-weight must be non-negative, got {w}"),
        w => Ok(w),
    }
}

fn camp_networks(bundle: &AnalysisBundle, issue: &str) -> Result<(String, ActantialNetwork, ActantialNetwork)> {
    let entry = bundle.issue(issue)?;
    let get = |camp| {
        bundle.networks.get(&(entry.issue.clone(), camp)).cloned().ok_or_else(|| anyhow!("bundle lacks {camp} network"))
    };
    Ok((entry.issue.clone(), get(CampLabel::Left)?, get(CampLabel::Right)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.load()?;
            let bundle = pipeline::run_pipeline(&config)?;
            let summary = serde_json::json!({
                "bundle": bundle.dir(),
                "config_digest": bundle.manifest.config_digest,
                "issues": bundle.issues.iter().map(|e| &e.issue).collect::<Vec<_>>(),
                "files": bundle.manifest.files.len(),
            });
            emit(&OutArg { out: None }, &to_json(&summary))
        }
        Command::Ingest(args) => {
            let config = args.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let summary = serde_json::json!({
                "tweets": inputs.corpus.len(),
                "trends": inputs.corpus.trend_counts(),
                "issues": inputs.issues,
                "camp_seeds": inputs.seeds.len(),
            });
            emit(&OutArg { out: None }, &to_json(&summary))
        }
        Command::Trends(TrendsCmd::Merge { trends, window_days, mapping, out }) => {
            if window_days < 0 {
                bail!("--window-days must be non-negative");
            }
            let merged = merge_trends_with_map(&load_trends(&trends)?, window_days)?;
            if let Some(p) = mapping {
                let body: String = merged.mapping.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
                std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
            }
            emit(&out, &to_jsonl(&merged.trends))
        }
        Command::Opinion(OpinionCmd::Cluster { cfg, out }) => {
            let config = cfg.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let (_, partitions) = pipeline::cluster_trends(&config, &inputs.corpus)?;
            emit(&out, &export_partitions(&partitions))
        }
        Command::Camps { cfg, partitions, out } => {
            let config = cfg.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let partitions = match partitions {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    parse_partitions(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?
                }
                None => pipeline::cluster_trends(&config, &inputs.corpus)?.1,
            };
            let alignment = user_alignment(&partitions, config.min_cooccur)?;
            let camps = global_camps(&alignment, config.seed, &inputs.seeds)?;
            emit(&out, &write_user_camps(&camps))
        }
        Command::Signals(SignalsCmd::Extract { cfg, out }) => {
            let config = cfg.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let instances = pipeline::signals_stage(&config, &inputs.corpus)?;
            emit(&out, &to_jsonl(instances.values()))
        }
        Command::Labels(LabelsCmd::Run { cfg, signals, out }) => {
            let config = cfg.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let instances = match signals {
                Some(p) => read_signals(&p)?,
                None => pipeline::signals_stage(&config, &inputs.corpus)?,
            };
            let labels = pipeline::labels_stage(&config, &inputs.corpus, &instances, None)?;
            emit(&out, &to_jsonl(&labels))
        }
        Command::Actant(ActantCmd::Build { cfg, signals, labels, camps, out }) => {
            let config = cfg.load()?;
            let inputs = pipeline::load_inputs(&config)?;
            let instances = match signals {
                Some(p) => read_signals(&p)?,
                None => pipeline::signals_stage(&config, &inputs.corpus)?,
            };
            let labels: Vec<LabeledRelation> = match labels {
                Some(p) => read_jsonl(&p)?,
                None => pipeline::labels_stage(&config, &inputs.corpus, &instances, None)?,
            };
            let user_camps = match camps {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    parse_user_camps(&text)?
                }
                None => pipeline::opinion_stage(&config, &inputs)?.camps,
            };
            let tweet_camps = assign_tweet_camps(&inputs.corpus, &user_camps);
            let act =
                pipeline::actantial_stage(&config, &inputs.corpus, &inputs.issues, &tweet_camps, &instances, &labels)?;
            let nets: Vec<&ActantialNetwork> = act.issues.iter().flat_map(|r| [&r.left, &r.right]).collect();
            emit(&out, &to_json(&nets))
        }
        Command::Identity { bundle, issue, min_weight, node, format, out } => {
            let bundle = load_bundle(&bundle)?;
            let entry = bundle.issue(&issue)?.clone();
            let w = check_weight(min_weight)?.unwrap_or(entry.identity_min_weight);
            let (_, left, right) = camp_networks(&bundle, &issue)?;
            let merged = merge_identity_networks(
                &pipeline::identity_ego(&left, &node, w)?,
                &pipeline::identity_ego(&right, &node, w)?,
            )?;
            emit(&out, &GraphDocument::from_identity(&merged).render(format))
        }
        Command::Conflict { bundle, issue, min_weight, conflict_mode, centrality_k, format, out } => {
            let bundle = load_bundle(&bundle)?;
            let entry = bundle.issue(&issue)?.clone();
            let w = check_weight(min_weight)?.unwrap_or(entry.conflict_min_weight);
            let mode = conflict_mode.unwrap_or(entry.conflict_mode);
            let (_, left, right) = camp_networks(&bundle, &issue)?;
            let nodes = match centrality_k {
                Some(0) => bail!("--centrality-k must be at least 1"),
                Some(k) => pipeline::conflict_nodes(&left, &right, k, &Curation::default()),
                None => entry.central_nodes.clone(),
            };
            let edges = conflict_networks(&left, &right, &nodes, w, mode);
            if format == "edges" {
                emit(&out, &to_json(&edges))
            } else {
                let format: GraphFormat = format.parse().map_err(|e: String| anyhow!(e))?;
                emit(&out, &GraphDocument::from_conflict(&left, &right, &edges).render(format))
            }
        }
        Command::Report { bundle, top, out } => emit(&out, &render_report(&load_bundle(&bundle)?, top)),
        Command::Export { bundle, issue, kind, format, min_weight, out } => {
            let bundle = load_bundle(&bundle)?;
            let kind: NetworkKind = kind.parse()?;
            let doc = bundle.document(&issue, kind)?;
            let doc = match check_weight(min_weight)? {
                Some(w) => doc.filtered(w),
                None => doc.clone(),
            };
            emit(&out, &doc.render(format))
        }
        Command::ValidateLabels { labels, annotations } => {
            let labels: Vec<LabeledRelation> = read_jsonl(&labels)?;
            let text =
                std::fs::read_to_string(&annotations).with_context(|| format!("reading {}", annotations.display()))?;
            let human = parse_annotations(&text)?;
            let (agreement, compared) = agreement_with_annotations(&labels, &human)?;
            let summary = serde_json::json!({
                "agreement": agreement,
                "compared": compared,
                "labels": labels.len(),
                "llm": labels.iter().filter(|l| l.source == LabelSource::Llm).count(),
                "fallback_used": labels.iter().filter(|l| l.fallback_used).count(),
                "unknown_frame": labels.iter().filter(|l| l.unknown_frame).count(),
            });
            emit(&OutArg { out: None }, &to_json(&summary))
        }
        Command::Serve { bundle, addr } => {
            let bundle = load_bundle(&bundle)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = server::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                println!("listening on {}", server::local_url(listener.local_addr()?));
                std::io::stdout().flush()?;
                server::serve(bundle, listener).await?;
                Ok(())
            })
        }
        Command::Synth { out, seed } => {
            actnet::synth::write_fixture(&out, seed)
                .with_context(|| format!("writing fixture to {}", out.display()))?;
            println!("{}", out.display());
            Ok(())
        }
        Command::MockLlm { addr } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                println!("listening on {}", server::local_url(listener.local_addr()?));
                std::io::stdout().flush()?;
                axum::serve(listener, actnet_cli::mock_llm_router()).await?;
                Ok(())
            })
        }
    }
}
