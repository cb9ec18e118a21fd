//! `lexsimp` command-line tool.
//!
//! Batch pipelines (synth, distill, predict, evaluate, safety-report,
//! latency) run in-process. `serve` starts the annotation service; `queue`,
//! `annotate`, `remote-report` and `sweep` talk to a running one.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 backend or
//! service failure, 3 data diagnostics in strict mode.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lexsimp_core::gateway::Dialect;
use lexsimp_core::latency::{self, LatencyProfile};
use lexsimp_core::safety::HarmTag;
use lexsimp_server::{RunSpec, ServerConfig, DEFAULT_COMPACT_AFTER};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::pipeline::{PromptStyle, SplitChoice};

#[derive(Debug, Parser)]
#[command(
    name = "lexsimp",
    version,
    about = "Lexical simplification pipelines and annotation service"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by the pipeline subcommands. Each one overrides the
/// config file and is overridden by its `LEXSIMP_*` variable.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub language: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Skip invalid input records instead of failing.
    #[arg(long, global = true)]
    pub lenient: bool,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Word/Zipf frequency table.
    #[arg(long, global = true)]
    pub freq: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Few-shot example file.
    #[arg(long, global = true)]
    pub examples: Option<PathBuf>,
    /// Annotation log.
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Pairs kept by the confidence filter.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub dev_size: Option<usize>,
    /// Harmful-rate budgets, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub budget: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub include_unterminated: bool,
    #[arg(long, global = true)]
    pub teacher_id: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// Inference server base URL.
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    /// llama-cpp or openai.
    #[arg(long, global = true)]
    pub dialect: Option<Dialect>,
    #[arg(long, global = true)]
    pub timeout: Option<u64>,
    #[arg(long, global = true)]
    pub retries: Option<u32>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Answer from a replay store instead of a server.
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// Append server exchanges to this replay store.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            language: self.language.clone(),
            seed: self.seed,
            corpus: self.corpus.clone(),
            freq: self.freq.clone(),
            dataset: self.dataset.clone(),
            examples: self.examples.clone(),
            output: self.out.clone(),
            annotations: self.annotations.clone(),
            backend_url: self.backend.backend_url.clone(),
            dialect: self.backend.dialect,
            timeout_secs: self.backend.timeout,
            retries: self.backend.retries,
            model: self.backend.model.clone(),
            replay: self.backend.replay.clone(),
            record: self.backend.record.clone(),
            concurrency: self.backend.concurrency,
            n_pairs: self.n,
            k_keep: self.k,
            dev_size: self.dev_size,
            budgets: self.budget.clone(),
            include_unterminated: self.include_unterminated.then_some(true),
            teacher_id: self.teacher_id.clone(),
            lenient: self.lenient.then_some(true),
        }
    }

    /// Resolve against the process environment.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let env = Overrides::from_env(|k| std::env::var(k).ok())?;
        RunConfig::resolve(self.config.as_deref(), self.overrides(), env)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize context/target pairs from an annotated corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Label pairs with the teacher and export the top-k training file.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Pairs file; defaults to the synth output.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate alternatives for a dataset split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "finetune")]
        style: PromptStyle,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
    },
    /// ACC@1@top1 and potential@1 of a predictions file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Harm categories, AUC, sweep and B_H at each budget.
    SafetyReport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        annotator: Option<String>,
        /// Write threshold/percentile/rate rows as CSV.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Measure per-token read/pred latency of the backend.
    Latency {
        #[command(flatten)]
        common: Common,
        /// JSON-lines file of prompt strings.
        #[arg(long)]
        probes: Option<PathBuf>,
        /// Dataset prompts to use when no probe file is given.
        #[arg(long, default_value_t = 8)]
        probe_count: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Time requests on the client when the server reports no timing.
        #[arg(long)]
        wall_clock: bool,
        #[arg(long, default_value = "local")]
        environment: String,
    },
    /// Estimated response time in milliseconds.
    LatencyEstimate {
        #[arg(long, allow_negative_numbers = true)]
        read: i64,
        #[arg(long, allow_negative_numbers = true)]
        pred: i64,
        /// Built-in profile name or profile file.
        #[arg(long, default_value = "xlarge-fine-tuned")]
        profile: String,
        /// Override the profile's cached prefix tokens.
        #[arg(long)]
        cache: Option<u64>,
    },
    /// Print the built-in latency profiles, or the given profile files.
    LatencyProfiles { files: Vec<PathBuf> },
    /// Run the annotation service.
    Serve {
        #[command(flatten)]
        common: Common,
        /// `name=predictions.jsonl` or `name=predictions.jsonl,dataset.jsonl`.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Built UI bundle to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_COMPACT_AFTER)]
        compact_after: u64,
    },
    /// Show the next item waiting for annotation.
    Queue {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Store harm tags for an item; no tags means "no issues".
    Annotate {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        item: String,
        #[arg(long)]
        annotator: String,
        /// GRAMMAR_ERROR, CHANGE_OF_MEANING, MORE_DIFFICULT, GIBBERISH.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
    /// Fetch the live safety report from the service.
    RemoteReport {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        run: Option<String>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rates at a threshold, from the service.
    Sweep {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        run: Option<String>,
        /// A number or -inf.
        #[arg(long, default_value = "-inf", allow_hyphen_values = true)]
        threshold: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Remote {
    /// Annotation service base URL.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Validation(format!("cannot write output: {e}")))
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start async runtime: {e}")))
}

/// Parse `name=predictions[,dataset]`.
pub fn parse_run_spec(raw: &str, default_dataset: Option<&std::path::Path>) -> Result<RunSpec, CliError> {
    let (name, files) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("run {raw:?} is not name=predictions[,dataset]")))?;
    let (pred, dataset) = match files.split_once(',') {
        Some((p, d)) => (PathBuf::from(p), PathBuf::from(d)),
        None => (
            PathBuf::from(files),
            default_dataset
                .map(PathBuf::from)
                .ok_or_else(|| CliError::Validation(format!("run {name:?} has no dataset and none is configured")))?,
        ),
    };
    if name.is_empty() {
        return Err(CliError::Validation(format!("run {raw:?} has an empty name")));
    }
    Ok(RunSpec {
        name: name.to_string(),
        predictions: pred,
        dataset,
    })
}

/// Look up a built-in profile, falling back to a profile file.
pub fn find_profile(name: &str) -> Result<LatencyProfile, CliError> {
    match latency::builtin_profile(name) {
        Ok(p) => Ok(p),
        Err(_) if std::path::Path::new(name).exists() => Ok(LatencyProfile::load(std::path::Path::new(name))?),
        Err(e) => Err(CliError::Validation(format!(
            "{e}; built-in profiles: {}",
            latency::builtin_profiles()
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Run one subcommand, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common } => {
            let cfg = common.resolve()?;
            let o = pipeline::synth(&cfg)?;
            say(out, format!("{} pair(s) -> {}", o.stats.pairs, o.pairs.display()))?;
            say(out, format!("config hash {}", o.config_hash))
        }
        Command::Distill {
            common,
            pairs,
            checkpoint,
        } => {
            let cfg = common.resolve()?;
            let gw = pipeline::gateway(&cfg)?;
            let o = pipeline::distill(&cfg, &gw, &pipeline::DistillOptions { pairs, checkpoint })?;
            let m = &o.manifest;
            say(
                out,
                format!(
                    "{} pair(s): {} labelled, {} empty, {} unterminated excluded, kept {} of k={}",
                    m.pairs, m.generated, m.dropped_empty, m.excluded_unterminated, m.kept, m.k
                ),
            )?;
            say(out, format!("training file {}", o.training_file.display()))
        }
        Command::Predict { common, style, split } => {
            let cfg = common.resolve()?;
            let gw = pipeline::gateway(&cfg)?;
            let o = pipeline::predict(
                &cfg,
                &gw,
                &pipeline::PredictOptions {
                    style: Some(style),
                    split: Some(split),
                },
            )?;
            say(out, format!("{} prediction(s) -> {}", o.count, o.predictions.display()))
        }
        Command::Evaluate { common, predictions } => {
            let cfg = common.resolve()?;
            let r = pipeline::evaluate(&cfg, predictions.as_deref())?;
            let a = &r.aggregate;
            say(
                out,
                format!(
                    "n={} ACC@1@top1={} POT@1={} unchanged={}",
                    a.n, a.display.acc, a.display.pot, a.display.unchanged
                ),
            )
        }
        Command::SafetyReport {
            common,
            predictions,
            annotator,
            plot_data,
        } => {
            let cfg = common.resolve()?;
            let r = pipeline::safety_report(
                &cfg,
                &pipeline::ReportOptions {
                    predictions,
                    annotator,
                    plot_data,
                },
            )?;
            say(
                out,
                format!(
                    "items={} categorized={} pending={} r_B={:.3} r_H={:.3} r_U={:.3}",
                    r.n_items, r.n_total, r.n_pending, r.r_b, r.r_h, r.r_u
                ),
            )?;
            match r.auc {
                Some(auc) => say(out, format!("AUC={auc:.3}"))?,
                None => say(out, "AUC undefined (needs beneficial and harmful items)")?,
            }
            for b in &r.b_at_budget {
                say(out, format!("B_H@{}={:.3}", b.budget, b.beneficial_rate))?;
            }
            Ok(())
        }
        Command::Latency {
            common,
            probes,
            probe_count,
            repetitions,
            warmup,
            wall_clock,
            environment,
        } => {
            let cfg = common.resolve()?;
            let gw = pipeline::gateway(&cfg)?;
            let p = pipeline::measure_latency(
                &cfg,
                &gw,
                &pipeline::LatencyOptions {
                    probes,
                    probe_count,
                    repetitions,
                    warmup,
                    wall_clock,
                    environment,
                },
            )?;
            out.write_all(pipeline::latency_block(&[("measured".into(), p)]).as_bytes())
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        Command::LatencyEstimate {
            read,
            pred,
            profile,
            cache,
        } => {
            let mut p = find_profile(&profile)?;
            if let Some(c) = cache {
                p.cached_prefix_tokens = c;
            }
            let ms = latency::estimate(&p, read, pred)?;
            say(out, format!("{} ms", pipeline::trim_float(ms)))
        }
        Command::LatencyProfiles { files } => {
            let rows: Vec<(String, LatencyProfile)> = if files.is_empty() {
                latency::builtin_profiles()
                    .into_iter()
                    .map(|(n, p)| (n.to_string(), p))
                    .collect()
            } else {
                files
                    .iter()
                    .map(|f| Ok((f.display().to_string(), LatencyProfile::load(f)?)))
                    .collect::<Result<_, CliError>>()?
            };
            out.write_all(pipeline::latency_block(&rows).as_bytes())
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        Command::Serve {
            common,
            runs,
            addr,
            ui_dir,
            compact_after,
        } => {
            let cfg = common.resolve()?;
            let runs = runs
                .iter()
                .map(|r| parse_run_spec(r, cfg.dataset.as_deref()))
                .collect::<Result<Vec<_>, _>>()?;
            let config = ServerConfig {
                annotations: cfg.annotations.clone(),
                runs,
                budgets: cfg.budgets.clone(),
                compact_after,
                ui_dir,
            };
            runtime()?.block_on(async {
                let (local, server) = lexsimp_server::bind(&config, addr, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                say(out, format!("serving on http://{local}"))?;
                out.flush().map_err(|e| CliError::Validation(e.to_string()))?;
                server.await.map_err(CliError::from)
            })
        }
        Command::Queue {
            remote,
            language,
            annotator,
        } => {
            let client = lexsimp_client::Client::new(&remote.url)?;
            let q = runtime()?.block_on(client.next_item(language.as_deref(), annotator.as_deref()))?;
            match q.item {
                Some(item) => say(out, serde_json::to_string_pretty(&item).expect("item serializes"))?,
                None => say(out, "queue empty")?,
            }
            say(out, format!("{} of {} pending", q.pending, q.total))
        }
        Command::Annotate {
            remote,
            item,
            annotator,
            tags,
        } => {
            // Tag names are checked locally for a quick error, and again by
            // the service.
            for t in tags.iter().filter(|t| !t.is_empty()) {
                t.parse::<HarmTag>().map_err(|e| CliError::Validation(e.to_string()))?;
            }
            let req = lexsimp_core::service::AnnotationRequest {
                item_id: item,
                annotator,
                tags: tags.into_iter().filter(|t| !t.is_empty()).collect(),
            };
            let client = lexsimp_client::Client::new(&remote.url)?;
            let stored = runtime()?.block_on(client.submit(&req))?;
            say(out, serde_json::to_string(&stored).expect("annotation serializes"))
        }
        Command::RemoteReport { remote, run, output } => {
            let client = lexsimp_client::Client::new(&remote.url)?;
            let bytes = runtime()?.block_on(client.report_bytes(run.as_deref()))?;
            match output {
                Some(path) => {
                    lexsimp_core::io::write_atomic(&path, &bytes)?;
                    say(out, format!("report -> {}", path.display()))
                }
                None => out.write_all(&bytes).map_err(|e| CliError::Validation(e.to_string())),
            }
        }
        Command::Sweep { remote, run, threshold } => {
            let t = lexsimp_server::parse_threshold(Some(&threshold)).map_err(CliError::Validation)?;
            let client = lexsimp_client::Client::new(&remote.url)?;
            let p = runtime()?.block_on(client.sweep(run.as_deref(), t))?;
            say(out, serde_json::to_string(&p).expect("sweep point serializes"))
        }
    }
}
