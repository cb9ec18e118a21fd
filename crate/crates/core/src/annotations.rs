//! Human harm annotations and the glue that turns predictions plus
//! annotations into safety-report items.
//!
//! The log is append-only JSON lines. Replaying it keeps the last write per
//! `(item_id, annotator)`. An item is an `(instance, alternative)` pair, so
//! two systems proposing the same word for the same instance share one
//! annotation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ingest, DatasetError, Format, LsInstance, Mode};
use crate::gateway::Prediction;
use crate::io::{self, IoError};
use crate::metrics::{judge, normalize, MatchVerdict};
use crate::safety::{build_report, categorize, HarmTag, ReportItem, SafetyReport, ScoredItem};
use crate::span::CharSpan;

pub fn item_id(instance_id: &str, alternative: &str) -> String {
    format!("{instance_id}#{}", normalize(alternative))
}

/// An empty `tags` set is an explicit "no issues" judgement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub annotator: String,
    pub tags: BTreeSet<HarmTag>,
    pub timestamp: String,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationStore {
    latest: HashMap<(String, String), (u64, Annotation)>,
    next_seq: u64,
    log_lines: u64,
}

impl AnnotationStore {
    pub fn from_annotations(annotations: impl IntoIterator<Item = Annotation>) -> Self {
        let mut store = Self::default();
        for a in annotations {
            store.insert(a);
        }
        store
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(Self::from_annotations(io::read_jsonl::<Annotation>(path)?))
    }

    /// Last write wins per `(item_id, annotator)`.
    pub fn insert(&mut self, a: Annotation) {
        let key = (a.item_id.clone(), a.annotator.clone());
        self.latest.insert(key, (self.next_seq, a));
        self.next_seq += 1;
        self.log_lines += 1;
    }

    /// The annotation by `annotator`, or the most recent one by anybody.
    pub fn get(&self, item_id: &str, annotator: Option<&str>) -> Option<&Annotation> {
        match annotator {
            Some(who) => self.latest.get(&(item_id.to_string(), who.to_string())).map(|(_, a)| a),
            None => self
                .latest
                .iter()
                .filter(|((id, _), _)| id == item_id)
                .max_by_key(|(_, (seq, _))| *seq)
                .map(|(_, (_, a))| a),
        }
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    /// Lines the log would hold without compaction.
    pub fn log_lines(&self) -> u64 {
        self.log_lines
    }

    /// Live annotations in write order.
    pub fn snapshot(&self) -> Vec<Annotation> {
        let mut all: Vec<_> = self.latest.values().collect();
        all.sort_by_key(|(seq, _)| *seq);
        all.into_iter().map(|(_, a)| a.clone()).collect()
    }

    /// Rewrite the log with only the live annotations.
    pub fn compact_to(&mut self, path: &Path) -> Result<(), IoError> {
        io::write_jsonl_atomic(path, &self.snapshot())?;
        self.log_lines = self.latest.len() as u64;
        Ok(())
    }
}

/// Append one annotation to the log file.
pub fn append(path: &Path, a: &Annotation) -> Result<(), IoError> {
    use std::io::Write;
    let mut line = serde_json::to_vec(a)?;
    line.push(b'\n');
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| IoError::io(path, e))?;
    f.write_all(&line).map_err(|e| IoError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prediction refers to unknown instance {0:?}")]
pub struct UnknownInstance(pub String);

/// A prediction judged against its instance.
#[derive(Debug, Clone)]
pub struct JudgedPrediction<'a> {
    pub item_id: String,
    pub prediction: &'a Prediction,
    pub instance: &'a LsInstance,
    pub verdict: MatchVerdict,
}

impl JudgedPrediction<'_> {
    /// Neither unchanged nor a gold match: only a human can decide.
    pub fn needs_annotation(&self) -> bool {
        !self.verdict.unchanged && !self.verdict.pot
    }
}

pub fn judge_all<'a>(
    predictions: &'a [Prediction],
    instances: &'a HashMap<String, LsInstance>,
) -> Result<Vec<JudgedPrediction<'a>>, UnknownInstance> {
    predictions
        .iter()
        .map(|p| {
            let instance = instances
                .get(&p.instance_id)
                .ok_or_else(|| UnknownInstance(p.instance_id.clone()))?;
            let alternative = if p.empty { "" } else { p.alternative.as_str() };
            Ok(JudgedPrediction {
                item_id: item_id(&p.instance_id, &p.alternative),
                prediction: p,
                instance,
                verdict: judge(alternative, instance),
            })
        })
        .collect()
}

pub fn report_items(
    judged: &[JudgedPrediction<'_>],
    store: &AnnotationStore,
    annotator: Option<&str>,
) -> Vec<ReportItem> {
    judged
        .iter()
        .map(|j| {
            let tags = if j.needs_annotation() {
                store.get(&j.item_id, annotator).map(|a| a.tags.clone())
            } else {
                None
            };
            ReportItem {
                item_id: j.item_id.clone(),
                category: categorize(j.verdict, tags.as_ref()),
                score: j.prediction.score,
                tags,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueStatus {
    Pending,
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueItem {
    pub item_id: String,
    pub instance_id: String,
    pub context: String,
    pub target: String,
    pub target_span: CharSpan,
    pub alternative: String,
    pub language: String,
    pub status: QueueStatus,
}

/// Items that need a human verdict, deduplicated by item id, in prediction
/// order. `status` reflects `store` for `annotator` (anybody when `None`).
pub fn queue_items(
    judged: &[JudgedPrediction<'_>],
    store: &AnnotationStore,
    annotator: Option<&str>,
) -> Vec<QueueItem> {
    let mut seen = HashSet::new();
    judged
        .iter()
        .filter(|j| j.needs_annotation() && seen.insert(j.item_id.clone()))
        .map(|j| QueueItem {
            item_id: j.item_id.clone(),
            instance_id: j.instance.id.clone(),
            context: j.instance.context.clone(),
            target: j.instance.target.clone(),
            target_span: j.instance.target_span,
            alternative: j.prediction.alternative.clone(),
            language: j.instance.language.clone(),
            status: if store.get(&j.item_id, annotator).is_some() {
                QueueStatus::Annotated
            } else {
                QueueStatus::Pending
            },
        })
        .collect()
}

/// Predictions of one system together with the instances they answer.
#[derive(Debug, Clone, Default)]
pub struct Run {
    pub predictions: Vec<Prediction>,
    pub instances: HashMap<String, LsInstance>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    UnknownInstance(#[from] UnknownInstance),
}

impl Run {
    pub fn new(
        predictions: Vec<Prediction>,
        instances: impl IntoIterator<Item = LsInstance>,
    ) -> Result<Self, UnknownInstance> {
        let run = Self {
            predictions,
            instances: instances.into_iter().map(|i| (i.id.clone(), i)).collect(),
        };
        run.judged()?;
        Ok(run)
    }

    /// Predictions JSONL plus a canonical JSONL dataset.
    pub fn load(predictions: &Path, dataset: &Path) -> Result<Self, RunError> {
        let preds = io::read_jsonl::<Prediction>(predictions)?;
        let data = ingest(dataset, Format::from_path(dataset), Mode::Strict, None)?;
        Ok(Self::new(preds, data.instances)?)
    }

    pub fn judged(&self) -> Result<Vec<JudgedPrediction<'_>>, UnknownInstance> {
        judge_all(&self.predictions, &self.instances)
    }

    pub fn report_items(&self, store: &AnnotationStore, annotator: Option<&str>) -> Vec<ReportItem> {
        report_items(&self.judged().expect("checked on construction"), store, annotator)
    }

    pub fn scored_items(&self, store: &AnnotationStore, annotator: Option<&str>) -> Vec<ScoredItem> {
        self.report_items(store, annotator)
            .iter()
            .map(ReportItem::scored)
            .collect()
    }

    pub fn report(&self, store: &AnnotationStore, annotator: Option<&str>, budgets: &[f64]) -> SafetyReport {
        build_report(&self.report_items(store, annotator), budgets)
    }

    pub fn queue(&self, store: &AnnotationStore, annotator: Option<&str>) -> Vec<QueueItem> {
        queue_items(&self.judged().expect("checked on construction"), store, annotator)
    }
}
