//! Async client for the annotation service.

use lexsimp_core::annotations::Annotation;
use lexsimp_core::safety::{HarmTag, SafetyReport, SweepPoint};
use lexsimp_core::service::{AnnotationRequest, ApiError, Health, QueueResponse, RunSummary};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("service answered {status}: {}", .body.error)]
    Api { status: StatusCode, body: ApiError },
    #[error("invalid base url {0:?}")]
    BaseUrl(String),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            Self::Api { status, .. } => Some(*status),
            Self::Transport(e) => e.status(),
            Self::BaseUrl(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` like `http://127.0.0.1:8080`.
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::BaseUrl(base_url.to_string()));
        }
        Ok(Self {
            base,
            http: reqwest::Client::new(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn checked(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let body = serde_json::from_str(&text).unwrap_or(ApiError {
            error: text,
            allowed_tags: Vec::new(),
        });
        Err(ClientError::Api { status, body })
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str, query: &[(&str, &str)]) -> Result<T, ClientError> {
        let resp = self.http.get(self.url(path)).query(query).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get_json("/api/health", &[]).await
    }

    pub async fn runs(&self) -> Result<Vec<RunSummary>, ClientError> {
        self.get_json("/api/runs", &[]).await
    }

    pub async fn next_item(
        &self,
        language: Option<&str>,
        annotator: Option<&str>,
    ) -> Result<QueueResponse, ClientError> {
        let mut q = Vec::new();
        if let Some(l) = language {
            q.push(("language", l));
        }
        if let Some(a) = annotator {
            q.push(("annotator", a));
        }
        self.get_json("/api/queue", &q).await
    }

    pub async fn annotate(&self, item_id: &str, annotator: &str, tags: &[HarmTag]) -> Result<Annotation, ClientError> {
        self.submit(&AnnotationRequest::new(item_id, annotator, tags)).await
    }

    /// Post a raw request; tag names are validated by the service.
    pub async fn submit(&self, req: &AnnotationRequest) -> Result<Annotation, ClientError> {
        let resp = self.http.post(self.url("/api/annotations")).json(req).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    /// Report bytes exactly as served.
    pub async fn report_bytes(&self, run: Option<&str>) -> Result<Vec<u8>, ClientError> {
        let q: Vec<_> = run.map(|r| ("run", r)).into_iter().collect();
        let resp = self.http.get(self.url("/api/report")).query(&q).send().await?;
        Ok(Self::checked(resp).await?.bytes().await?.to_vec())
    }

    pub async fn report(&self, run: Option<&str>) -> Result<SafetyReport, ClientError> {
        let q: Vec<_> = run.map(|r| ("run", r)).into_iter().collect();
        self.get_json("/api/report", &q).await
    }

    /// Rates at `threshold`; `f64::NEG_INFINITY` accepts everything.
    pub async fn sweep(&self, run: Option<&str>, threshold: f64) -> Result<SweepPoint, ClientError> {
        let t = if threshold == f64::NEG_INFINITY {
            "-inf".to_string()
        } else {
            threshold.to_string()
        };
        let mut q = vec![("threshold", t.as_str())];
        if let Some(r) = run {
            q.push(("run", r));
        }
        self.get_json("/api/sweep", &q).await
    }
}
