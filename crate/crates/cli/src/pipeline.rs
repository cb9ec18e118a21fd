//! The batch pipelines behind the subcommands. Each step reads its inputs,
//! writes its outputs atomically into the output directory and leaves a
//! manifest next to them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use lexsimp_core::annotations::{self, AnnotationStore, Run};
use lexsimp_core::corpus::{self, CorpusRecord, FreqTable, SynthesisStats};
use lexsimp_core::dataset::{self, Format, LsInstance, Mode};
use lexsimp_core::distillation::{self, DistillManifest, SynthRecord, TeacherConfig, TrainerConfig};
use lexsimp_core::gateway::{CompletionBackend, CompletionRequest, Gateway, Prediction};
use lexsimp_core::gateway::{HttpBackend, HttpConfig};
use lexsimp_core::gateway::{RecordingBackend, ReplayBackend};
use lexsimp_core::io;
use lexsimp_core::latency::{self, LatencyProfile, MeasureConfig};
use lexsimp_core::metrics::{self, EvaluationReport, InstanceVerdict};
use lexsimp_core::prompting::{self, FewShotExample};
use lexsimp_core::safety::{self, SafetyReport};

use crate::config::RunConfig;
use crate::error::CliError;

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const RECORDS_FILE: &str = "synth_records.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TRAINER_MANIFEST_FILE: &str = "trainer_manifest.json";
pub const CHECKPOINT_FILE: &str = "distill.checkpoint.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "safety_report.json";
pub const PLOT_FILE: &str = "plot_data.csv";
pub const PROFILE_FILE: &str = "latency_profile.json";

/// Build the gateway described by the backend settings: a replay store, or
/// an HTTP server optionally recorded into a replay store.
pub fn gateway(cfg: &RunConfig) -> Result<Gateway, CliError> {
    let b = &cfg.backend;
    let backend: Arc<dyn CompletionBackend> = match (&b.replay, &b.url) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "configure either a replay store or a backend URL, not both".into(),
            ))
        }
        (Some(path), None) => Arc::new(ReplayBackend::open(path)?),
        (None, Some(url)) => {
            let http = HttpBackend::new(HttpConfig {
                base_url: url.clone(),
                dialect: b.dialect,
                timeout_secs: b.timeout_secs,
                retries: b.retries,
                model: b.model.clone(),
            })?;
            match &b.record {
                Some(path) => Arc::new(RecordingBackend::new(http, path)?),
                None => Arc::new(http),
            }
        }
        (None, None) => {
            return Err(CliError::Validation(
                "no backend configured (set a URL or a replay store)".into(),
            ))
        }
    };
    Ok(Gateway::new(backend, b.concurrency))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| io::IoError::Io {
        path: cfg.output.clone(),
        source: e,
    })?;
    Ok(&cfg.output)
}

fn mode(cfg: &RunConfig) -> Mode {
    if cfg.strict {
        Mode::Strict
    } else {
        Mode::Lenient
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub pairs: PathBuf,
    pub stats: SynthesisStats,
    pub config_hash: String,
}

pub fn synth(cfg: &RunConfig) -> Result<SynthOutcome, CliError> {
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let freq_path = cfg.require(&cfg.freq, "frequency table")?;
    let records: Vec<CorpusRecord> = io::read_jsonl(corpus_path)?;
    let freq = FreqTable::load(freq_path, &cfg.language)?;
    let docs = corpus::group_documents(records);
    let synthesis = corpus::synthesize_pairs(docs, &freq, cfg.n_pairs, cfg.seed);
    if synthesis.stats.rejected_documents > 0 && cfg.strict {
        return Err(CliError::data(
            format!(
                "{} document(s) have malformed token spans",
                synthesis.stats.rejected_documents
            ),
            synthesis.diagnostics,
        ));
    }
    for d in &synthesis.diagnostics {
        log::warn!("{d}");
    }

    let dir = out_dir(cfg)?;
    let pairs = dir.join(PAIRS_FILE);
    io::write_jsonl_atomic(&pairs, &synthesis.pairs)?;
    let prov = crate::manifest::Provenance::new("synth", cfg.seed, &cfg.language, json!({ "n_pairs": cfg.n_pairs }))
        .input("corpus", corpus_path)?
        .input("freq", freq_path)?;
    let m = prov.finish(
        dir,
        &[&pairs],
        serde_json::to_value(&synthesis.stats).expect("stats serialize"),
    )?;
    Ok(SynthOutcome {
        pairs,
        stats: synthesis.stats,
        config_hash: m.config_hash,
    })
}

#[derive(Debug, Clone, Default)]
pub struct DistillOptions {
    /// Defaults to the synth output in the output directory.
    pub pairs: Option<PathBuf>,
    /// Defaults to a checkpoint file in the output directory.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub manifest: DistillManifest,
    pub training_file: PathBuf,
}

pub fn distill(cfg: &RunConfig, gateway: &Gateway, opts: &DistillOptions) -> Result<DistillOutcome, CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let pairs_path = opts.pairs.clone().unwrap_or_else(|| dir.join(PAIRS_FILE));
    let examples_path = cfg.require(&cfg.examples, "few-shot examples")?;
    let pairs: Vec<corpus::ContextTargetPair> = io::read_jsonl(&pairs_path)?;
    let examples = prompting::load_examples(examples_path, &cfg.language)?;
    let teacher_id = cfg
        .teacher_id
        .clone()
        .or_else(|| cfg.backend.model.clone())
        .unwrap_or_else(|| gateway.backend_name().to_string());
    let checkpoint = opts.checkpoint.clone().unwrap_or_else(|| dir.join(CHECKPOINT_FILE));

    let teacher = TeacherConfig {
        language_name: prompting::language_name(&cfg.language),
        examples: &examples,
        teacher_id: &teacher_id,
    };
    let labelling = distillation::generate_teacher_labels(&pairs, gateway, &teacher, Some(&checkpoint))?;
    if labelling.resumed > 0 {
        log::info!("resumed {} pair(s) from {}", labelling.resumed, checkpoint.display());
    }
    let generated = labelling.records.len();
    let (eligible, excluded) = distillation::exclude_unterminated(labelling.records.clone(), cfg.include_unterminated);
    let (kept, dropped) = distillation::filter_top_confidence(&eligible, cfg.k_keep, |r: &SynthRecord| r.score);

    let prov = crate::manifest::Provenance::new(
        "distill",
        cfg.seed,
        &cfg.language,
        json!({
            "k_keep": cfg.k_keep,
            "include_unterminated": cfg.include_unterminated,
            "teacher_id": teacher_id,
        }),
    )
    .input("pairs", &pairs_path)?
    .input("examples", examples_path)?;
    let manifest = DistillManifest {
        config_hash: prov.config_hash(),
        seed: cfg.seed,
        language: cfg.language.clone(),
        teacher_id: teacher_id.clone(),
        pairs: pairs.len(),
        generated,
        dropped_empty: labelling.dropped_empty,
        excluded_unterminated: excluded.len(),
        k: cfg.k_keep,
        kept: kept.len(),
        dropped: dropped.len(),
        training_file: TRAIN_FILE.into(),
        trainer: TrainerConfig::default(),
    };
    let records = dir.join(RECORDS_FILE);
    let train = dir.join(TRAIN_FILE);
    let trainer_manifest = dir.join(TRAINER_MANIFEST_FILE);
    io::write_jsonl_atomic(&records, &labelling.records)?;
    distillation::export_training_file(&kept, &train, &manifest, &trainer_manifest)?;
    prov.finish(&dir, &[&records, &train, &trainer_manifest], serde_json::Value::Null)?;
    Ok(DistillOutcome {
        manifest,
        training_file: train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    /// Instruction plus five fixed examples.
    Fewshot,
    /// The fine-tuned student's three-line template.
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Dev,
    Test,
    /// Every simplifiable instance.
    All,
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    pub style: Option<PromptStyle>,
    pub split: Option<SplitChoice>,
}

#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub predictions: PathBuf,
    pub count: usize,
    pub cache: lexsimp_core::gateway::CacheStats,
}

/// Load the dataset for the configured language. Lenient diagnostics are
/// logged.
pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<LsInstance>, CliError> {
    let path = cfg.require(&cfg.dataset, "dataset")?;
    let ingested = dataset::ingest(path, Format::from_path(path), mode(cfg), Some(&cfg.language))?;
    for d in &ingested.diagnostics {
        log::warn!("{}: skipped {d}", path.display());
    }
    Ok(ingested
        .instances
        .into_iter()
        .filter(|i| i.language == cfg.language)
        .collect())
}

pub fn predict(cfg: &RunConfig, gateway: &Gateway, opts: &PredictOptions) -> Result<PredictOutcome, CliError> {
    let style = opts.style.unwrap_or(PromptStyle::Finetune);
    let split_choice = opts.split.unwrap_or(SplitChoice::Test);
    let instances = load_dataset(cfg)?;
    let (kept, removed) = dataset::select_simplifiable(&instances);
    log::info!("{} simplifiable instance(s), {} removed", kept.len(), removed.len());
    let split = dataset::split_dev_test(&kept, cfg.dev_size, cfg.seed)?;
    if let Some(w) = &split.warning {
        log::warn!("{w}");
    }
    let chosen: &[LsInstance] = match split_choice {
        SplitChoice::Dev => &split.dev,
        SplitChoice::Test => &split.test,
        SplitChoice::All => &kept,
    };

    let examples: Vec<FewShotExample> = match style {
        PromptStyle::Fewshot => {
            prompting::load_examples(cfg.require(&cfg.examples, "few-shot examples")?, &cfg.language)?
        }
        PromptStyle::Finetune => Vec::new(),
    };
    let mut requests = Vec::with_capacity(chosen.len());
    for inst in chosen {
        let bundle = match style {
            PromptStyle::Fewshot => prompting::render_fewshot(
                prompting::language_name(&cfg.language),
                &examples,
                &inst.context,
                &inst.target,
            )?,
            PromptStyle::Finetune => prompting::finetune_bundle(&inst.context, &inst.target),
        };
        if !bundle.prefix.is_empty() {
            gateway.observe_prefix(&bundle.prefix_hash());
        }
        requests.push(CompletionRequest::new(bundle.full));
    }
    let cache = gateway.cache_stats();
    if cache.distinct_prefixes > 1 {
        log::warn!(
            "{} distinct prompt prefixes: the server cannot reuse a cached prefix across requests",
            cache.distinct_prefixes
        );
    }
    let mut predictions = Vec::with_capacity(chosen.len());
    for ((inst, req), result) in chosen.iter().zip(&requests).zip(gateway.complete_all(&requests)) {
        let response = result?;
        predictions.push(Prediction::from_response(&inst.id, &response, &req.stop));
    }

    let dir = out_dir(cfg)?;
    let out = dir.join(PREDICTIONS_FILE);
    let split_path = dir.join(SPLIT_FILE);
    io::write_jsonl_atomic(&out, &predictions)?;
    io::write_json_atomic(&split_path, &split.manifest(cfg.seed, cfg.dev_size))?;
    let mut prov = crate::manifest::Provenance::new(
        "predict",
        cfg.seed,
        &cfg.language,
        json!({ "style": style, "split": split_choice, "dev_size": cfg.dev_size }),
    )
    .input("dataset", cfg.require(&cfg.dataset, "dataset")?)?;
    if style == PromptStyle::Fewshot {
        prov = prov.input("examples", cfg.require(&cfg.examples, "few-shot examples")?)?;
    }
    prov.finish(
        dir,
        &[&out, &split_path],
        json!({ "predictions": predictions.len(), "removed_unsimplifiable": removed.len(), "backend": gateway.backend_name() }),
    )?;
    Ok(PredictOutcome {
        predictions: out,
        count: predictions.len(),
        cache,
    })
}

fn instance_map(instances: Vec<LsInstance>) -> HashMap<String, LsInstance> {
    instances.into_iter().map(|i| (i.id.clone(), i)).collect()
}

fn predictions_path(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.join(PREDICTIONS_FILE))
}

pub fn evaluate(cfg: &RunConfig, predictions: Option<&Path>) -> Result<EvaluationReport, CliError> {
    let pred_path = predictions_path(cfg, predictions);
    let preds: Vec<Prediction> = io::read_jsonl(&pred_path)?;
    let instances = instance_map(load_dataset(cfg)?);
    let judged = annotations::judge_all(&preds, &instances)?;
    let verdicts: Vec<_> = judged.iter().map(|j| j.verdict).collect();
    let aggregate = metrics::aggregate(&verdicts).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = EvaluationReport {
        aggregate,
        instances: judged
            .iter()
            .map(|j| InstanceVerdict {
                instance_id: j.instance.id.clone(),
                target: j.instance.target.clone(),
                alternative: j.prediction.alternative.clone(),
                verdict: j.verdict,
            })
            .collect(),
    };
    let dir = out_dir(cfg)?;
    let out = dir.join(METRICS_FILE);
    io::write_json_atomic(&out, &report)?;
    crate::manifest::Provenance::new("evaluate", cfg.seed, &cfg.language, json!({}))
        .input("predictions", &pred_path)?
        .input("dataset", cfg.require(&cfg.dataset, "dataset")?)?
        .finish(dir, &[&out], serde_json::Value::Null)?;
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub predictions: Option<PathBuf>,
    /// Use only this annotator's tags; the latest tag by anyone otherwise.
    pub annotator: Option<String>,
    /// Also write the plot-data CSV here.
    pub plot_data: Option<PathBuf>,
}

pub fn safety_report(cfg: &RunConfig, opts: &ReportOptions) -> Result<SafetyReport, CliError> {
    let pred_path = predictions_path(cfg, opts.predictions.as_deref());
    let preds: Vec<Prediction> = io::read_jsonl(&pred_path)?;
    let run = Run::new(preds, load_dataset(cfg)?)?;
    let store = AnnotationStore::load(&cfg.annotations)?;
    let report = run.report(&store, opts.annotator.as_deref(), &cfg.budgets);

    let dir = out_dir(cfg)?;
    let out = dir.join(REPORT_FILE);
    io::write_atomic(&out, &io::to_pretty_json(&report)?)?;
    let mut outputs = vec![out.clone()];
    if let Some(plot) = &opts.plot_data {
        io::write_atomic(plot, safety::plot_data_csv(&report.sweep).as_bytes())?;
        outputs.push(plot.clone());
    }
    let mut prov = crate::manifest::Provenance::new(
        "safety-report",
        cfg.seed,
        &cfg.language,
        json!({ "budgets": cfg.budgets, "annotator": opts.annotator }),
    )
    .input("predictions", &pred_path)?
    .input("dataset", cfg.require(&cfg.dataset, "dataset")?)?;
    // Only live annotations matter, so hash the compacted view.
    let live = io::to_jsonl(&store.snapshot())?;
    prov = prov.input_hash("annotations", io::sha256_hex(&live));
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    prov.finish(dir, &refs, serde_json::Value::Null)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct LatencyOptions {
    pub probes: Option<PathBuf>,
    pub probe_count: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub wall_clock: bool,
    pub environment: String,
}

/// Probe prompts: a JSON-lines file of strings, or fine-tune prompts built
/// from the first dataset instances.
pub fn probe_prompts(cfg: &RunConfig, opts: &LatencyOptions) -> Result<Vec<String>, CliError> {
    match &opts.probes {
        Some(path) => Ok(io::read_jsonl::<String>(path)?),
        None => Ok(load_dataset(cfg)?
            .iter()
            .take(opts.probe_count)
            .map(|i| prompting::render_finetune(&i.context, &i.target, None))
            .collect()),
    }
}

pub fn measure_latency(cfg: &RunConfig, gateway: &Gateway, opts: &LatencyOptions) -> Result<LatencyProfile, CliError> {
    let probes = probe_prompts(cfg, opts)?;
    let profile = latency::measure(
        gateway,
        &MeasureConfig {
            environment: &opts.environment,
            probes: &probes,
            repetitions: opts.repetitions,
            warmup: opts.warmup,
            wall_clock: opts.wall_clock,
            count_tokens: &latency::rough_token_count,
        },
    )?;
    let dir = out_dir(cfg)?;
    profile.save(&dir.join(PROFILE_FILE))?;
    Ok(profile)
}

/// Table of per-token latencies, one row per named profile.
pub fn latency_block(rows: &[(String, LatencyProfile)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("profile".len());
    let env_w = rows
        .iter()
        .map(|(_, p)| p.environment.len())
        .max()
        .unwrap_or(0)
        .max("environment".len());
    let mut out = format!(
        "{:<name_w$}  {:<env_w$}  {:>14}  {:>14}  {:>6}\n",
        "profile", "environment", "read ms/token", "pred ms/token", "cached"
    );
    for (name, p) in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:<env_w$}  {:>14}  {:>14}  {:>6}\n",
            name,
            p.environment,
            trim_float(p.read_ms_per_token),
            trim_float(p.pred_ms_per_token),
            p.cached_prefix_tokens
        ));
    }
    out
}

/// Whole numbers without a decimal point, others to two decimals.
pub fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_block_layout() {
        let rows = vec![
            (
                "xlarge-fine-tuned".to_string(),
                LatencyProfile::new("m6g.xlarge", 33.0, 107.0),
            ),
            (
                "measured".to_string(),
                LatencyProfile::new("laptop", 12.345, 40.0).with_cache(120),
            ),
        ];
        let block = latency_block(&rows);
        let lines: Vec<_> = block.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("m6g.xlarge") && lines[1].contains(" 33 ") && lines[1].contains(" 107 "));
        assert!(lines[2].contains("12.35") && lines[2].ends_with("120"));
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
    }
}
