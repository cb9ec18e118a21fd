//! Teacher labelling, confidence filtering and training-file export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ContextTargetPair;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, Prediction};
use crate::io::{self, IoError};
use crate::prompting::{self, FewShotExample, PromptError};

pub const DEFAULT_KEEP: usize = 30_000;
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    #[serde(flatten)]
    pub pair: ContextTargetPair,
    pub alternative: String,
    pub score: f64,
    pub teacher_id: String,
    pub terminated: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("backend failed after {completed} pair(s); rerun to resume from the checkpoint: {source}")]
    Backend {
        completed: usize,
        #[source]
        source: GatewayError,
    },
    #[error("checkpoint {0} does not match the pair list")]
    CheckpointMismatch(String),
}

/// One checkpoint line. `record` is absent when the teacher produced an
/// empty alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointEntry {
    index: usize,
    source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record: Option<SynthRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labelling {
    pub records: Vec<SynthRecord>,
    /// Pairs for which the teacher produced no usable word.
    pub dropped_empty: usize,
    /// Pairs restored from an earlier, interrupted run.
    pub resumed: usize,
}

pub struct TeacherConfig<'a> {
    pub language_name: &'a str,
    pub examples: &'a [FewShotExample],
    pub teacher_id: &'a str,
}

fn load_checkpoint(path: &Path, pairs: &[ContextTargetPair]) -> Result<Vec<CheckpointEntry>, DistillError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut entries = Vec::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        // A torn final line from a crash is dropped and redone.
        let Ok(entry) = serde_json::from_str::<CheckpointEntry>(line) else {
            break;
        };
        let expected = pairs.get(entries.len());
        if entry.index != entries.len() || expected.map(|p| &p.source_id) != Some(&entry.source_id) {
            return Err(DistillError::CheckpointMismatch(path.display().to_string()));
        }
        entries.push(entry);
    }
    io::write_jsonl_atomic(path, &entries)?;
    Ok(entries)
}

/// Label each pair with the teacher's alternative using the few-shot prompt.
/// With a checkpoint path, progress is appended after every chunk and a
/// rerun picks up where the last one stopped.
pub fn generate_teacher_labels(
    pairs: &[ContextTargetPair],
    gateway: &Gateway,
    teacher: &TeacherConfig<'_>,
    checkpoint: Option<&Path>,
) -> Result<Labelling, DistillError> {
    let mut entries = match checkpoint {
        Some(path) => load_checkpoint(path, pairs)?,
        None => Vec::new(),
    };
    let resumed = entries.len();
    let mut sink = match checkpoint {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .append(true)
                .create(true)
                .open(path)
                .map_err(|e| IoError::io(path, e))?,
        ),
        None => None,
    };

    let mut start = entries.len();
    while start < pairs.len() {
        let chunk = &pairs[start..(start + CHUNK).min(pairs.len())];
        let mut requests = Vec::with_capacity(chunk.len());
        for pair in chunk {
            let bundle =
                prompting::render_fewshot(teacher.language_name, teacher.examples, &pair.context, &pair.target)?;
            gateway.observe_prefix(&bundle.prefix_hash());
            requests.push(CompletionRequest::new(bundle.full));
        }
        let results = gateway.complete_all(&requests);
        let mut failure = None;
        let mut fresh = Vec::new();
        for ((pair, req), result) in chunk.iter().zip(&requests).zip(results) {
            let response = match result {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            let pred = Prediction::from_response(&pair.source_id, &response, &req.stop);
            let record = (!pred.empty).then(|| SynthRecord {
                pair: pair.clone(),
                alternative: pred.alternative,
                score: pred.score,
                teacher_id: teacher.teacher_id.to_string(),
                terminated: pred.terminated,
            });
            fresh.push(CheckpointEntry {
                index: start + fresh.len(),
                source_id: pair.source_id.clone(),
                record,
            });
        }
        if let (Some(file), Some(path)) = (sink.as_mut(), checkpoint) {
            let bytes = io::to_jsonl(&fresh)?;
            file.write_all(&bytes).map_err(|e| IoError::io(path, e))?;
            file.flush().map_err(|e| IoError::io(path, e))?;
        }
        start += fresh.len();
        entries.extend(fresh);
        if let Some(source) = failure {
            return Err(DistillError::Backend {
                completed: start,
                source,
            });
        }
    }

    let dropped_empty = entries.iter().filter(|e| e.record.is_none()).count();
    Ok(Labelling {
        records: entries.into_iter().filter_map(|e| e.record).collect(),
        dropped_empty,
        resumed,
    })
}

/// Split off records without an end-of-word token unless they are allowed.
/// Returns `(eligible, excluded)`.
pub fn exclude_unterminated(records: Vec<SynthRecord>, include: bool) -> (Vec<SynthRecord>, Vec<SynthRecord>) {
    if include {
        return (records, Vec::new());
    }
    records.into_iter().partition(|r| r.terminated)
}

/// Keep the `k` highest-scoring items. Ties at the cut go to the earlier
/// item. Both halves keep input order.
pub fn filter_top_confidence<T: Clone>(items: &[T], k: usize, score: impl Fn(&T) -> f64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| score(&items[b]).total_cmp(&score(&items[a])).then(a.cmp(&b)));
    let mut keep = vec![false; items.len()];
    for &i in order.iter().take(k) {
        keep[i] = true;
    }
    let mut kept = Vec::with_capacity(k.min(items.len()));
    let mut dropped = Vec::with_capacity(items.len().saturating_sub(k));
    for (item, k) in items.iter().zip(keep) {
        if k {
            kept.push(item.clone());
        } else {
            dropped.push(item.clone());
        }
    }
    (kept, dropped)
}

/// One line of the training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt: String,
    pub completion: String,
    pub text: String,
}

impl TrainingExample {
    pub fn from_record(r: &SynthRecord) -> Self {
        let prompt = prompting::render_finetune(&r.pair.context, &r.pair.target, None);
        Self {
            completion: format!(" {}", r.alternative),
            text: prompting::render_finetune(&r.pair.context, &r.pair.target, Some(&r.alternative)),
            prompt,
        }
    }
}

/// Fine-tuning settings handed to an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub method: String,
    pub quantization_bits: u8,
    pub adapter_precision_bits: u8,
    pub target_modules: Vec<String>,
    pub optimizer: String,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub scheduler: String,
    pub batch_size: u32,
    pub max_epochs: u32,
    pub lora_r: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub checkpoint_every_epochs: f64,
    pub selection_metric: String,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            method: "qlora".into(),
            quantization_bits: 4,
            adapter_precision_bits: 16,
            target_modules: vec!["q_proj".into(), "k_proj".into()],
            optimizer: "adamw".into(),
            weight_decay: 0.01,
            learning_rate: 3e-5,
            scheduler: "linear".into(),
            batch_size: 16,
            max_epochs: 5,
            lora_r: 8,
            lora_alpha: 4,
            lora_dropout: 0.1,
            checkpoint_every_epochs: 0.2,
            selection_metric: "potential@1 on dev".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillManifest {
    pub config_hash: String,
    pub seed: u64,
    pub language: String,
    pub teacher_id: String,
    pub pairs: usize,
    pub generated: usize,
    pub dropped_empty: usize,
    pub excluded_unterminated: usize,
    pub k: usize,
    pub kept: usize,
    pub dropped: usize,
    pub training_file: String,
    pub trainer: TrainerConfig,
}

/// Write the training file and its manifest, each via temp-file + rename.
pub fn export_training_file(
    kept: &[SynthRecord],
    path: &Path,
    manifest: &DistillManifest,
    manifest_path: &Path,
) -> Result<(), IoError> {
    let examples: Vec<TrainingExample> = kept.iter().map(TrainingExample::from_record).collect();
    io::write_jsonl_atomic(path, &examples)?;
    io::write_json_atomic(manifest_path, manifest)
}
