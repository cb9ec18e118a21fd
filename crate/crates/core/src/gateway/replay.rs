use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError};
use crate::io;

/// One line of a replay store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub key: String,
    pub request: CompletionRequest,
    pub response: CompletionResponse,
}

/// SHA-256 of the request's JSON serialization.
pub fn request_key(request: &CompletionRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("request serializes");
    io::sha256_hex(&bytes)
}

/// Answers from an append-only store of recorded request/response pairs.
/// Later records for the same key win.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, CompletionResponse>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let records: Vec<ReplayRecord> = io::read_jsonl(path).map_err(|e| GatewayError::Store(e.to_string()))?;
        Ok(Self::from_records(records))
    }

    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self {
            responses: records.into_iter().map(|r| (r.key, r.response)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let key = request_key(request);
        self.responses
            .get(&key)
            .cloned()
            .ok_or(GatewayError::ReplayMiss { key })
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Forwards to an inner backend and appends every new exchange to a replay
/// store.
pub struct RecordingBackend<B> {
    inner: B,
    file: Mutex<(File, HashSet<String>)>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, GatewayError> {
        let known: HashSet<String> = if path.exists() {
            io::read_jsonl::<ReplayRecord>(path)
                .map_err(|e| GatewayError::Store(e.to_string()))?
                .into_iter()
                .map(|r| r.key)
                .collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            file: Mutex::new((file, known)),
        })
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        let key = request_key(request);
        let mut guard = self.file.lock().unwrap();
        let (file, known) = &mut *guard;
        if known.insert(key.clone()) {
            let record = ReplayRecord {
                key,
                request: request.clone(),
                response: response.clone(),
            };
            let mut line = serde_json::to_vec(&record).map_err(|e| GatewayError::Store(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line).map_err(|e| GatewayError::Store(e.to_string()))?;
        }
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
