//! JSON bodies exchanged with the annotation service.

use serde::{Deserialize, Serialize};

use crate::annotations::QueueItem;
use crate::safety::HarmTag;

/// Body of `POST /api/annotations`. Tags travel as their wire names
/// (`GRAMMAR_ERROR`, ...) and are validated by the service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub item_id: String,
    pub annotator: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl AnnotationRequest {
    pub fn new(item_id: impl Into<String>, annotator: impl Into<String>, tags: &[HarmTag]) -> Self {
        Self {
            item_id: item_id.into(),
            annotator: annotator.into(),
            tags: tags.iter().map(|t| t.as_str().to_string()).collect(),
        }
    }
}

/// Response of `GET /api/queue`. `item` is `null` once nothing is pending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub item: Option<QueueItem>,
    pub pending: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub n_items: usize,
    pub n_pending: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub runs: usize,
    pub annotations: usize,
}
