use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    CompletionBackend, CompletionRequest, CompletionResponse, FinishReason, GatewayError, Timing, TokenLogprob,
};

/// Wire dialect of the local inference server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// llama.cpp server `POST /completion` with `n_probs`.
    LlamaCpp,
    /// OpenAI-style `POST /v1/completions` with `logprobs`.
    OpenAi,
}

impl std::str::FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llama-cpp" | "llamacpp" | "llama.cpp" => Ok(Dialect::LlamaCpp),
            "open-ai" | "openai" => Ok(Dialect::OpenAi),
            other => Err(format!("unknown dialect {other:?} (expected llama-cpp or openai)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub dialect: Dialect,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Model name, sent by the OpenAI dialect.
    #[serde(default)]
    pub model: Option<String>,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport {
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(Self { config, client })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.dialect {
            Dialect::LlamaCpp => format!("{base}/completion"),
            Dialect::OpenAi => format!("{base}/v1/completions"),
        }
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let temperature = if req.greedy { 0.0 } else { 1.0 };
        match self.config.dialect {
            Dialect::LlamaCpp => json!({
                "prompt": req.prompt,
                "n_predict": req.max_new_tokens,
                "temperature": temperature,
                "top_k": if req.greedy { 1 } else { 40 },
                "stop": req.stop,
                "n_probs": if req.want_logprobs { 1 } else { 0 },
                "cache_prompt": true,
                "stream": false,
            }),
            Dialect::OpenAi => {
                let mut body = json!({
                    "prompt": req.prompt,
                    "max_tokens": req.max_new_tokens,
                    "temperature": temperature,
                    "stop": req.stop,
                    "logprobs": if req.want_logprobs { Some(1) } else { None },
                });
                if let Some(model) = &self.config.model {
                    body["model"] = json!(model);
                }
                body
            }
        }
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let resp = self
            .client
            .post(self.endpoint())
            .json(&self.body(req))
            .send()
            .map_err(|e| GatewayError::Transport {
                retryable: e.is_timeout() || e.is_connect(),
                message: e.to_string(),
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        match self.config.dialect {
            Dialect::LlamaCpp => parse_llamacpp(&value),
            Dialect::OpenAi => parse_openai(&value),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    log::warn!("retrying completion ({attempt}/{}): {e}", self.config.retries);
                    std::thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    fn name(&self) -> &str {
        match self.config.dialect {
            Dialect::LlamaCpp => "llama-cpp",
            Dialect::OpenAi => "openai",
        }
    }
}

fn malformed(msg: impl Into<String>) -> GatewayError {
    GatewayError::Malformed(msg.into())
}

fn parse_timing(v: &Value) -> Option<Timing> {
    let t = v.get("timings")?;
    Some(Timing {
        prompt_tokens: t.get("prompt_n")?.as_u64()?,
        prompt_ms: t.get("prompt_ms")?.as_f64()?,
        gen_tokens: t.get("predicted_n")?.as_u64()?,
        gen_ms: t.get("predicted_ms")?.as_f64()?,
    })
}

/// Handles both the current `{token, logprob}` entries and the older
/// `{content, probs: [{tok_str, prob}]}` layout.
pub(crate) fn parse_llamacpp(v: &Value) -> Result<CompletionResponse, GatewayError> {
    let content = v.get("content").and_then(Value::as_str).unwrap_or_default();
    let probs = match v.get("completion_probabilities").and_then(Value::as_array) {
        Some(p) if !p.is_empty() || content.is_empty() => p,
        _ => return Err(GatewayError::MissingLogprobs),
    };
    let mut tokens = Vec::with_capacity(probs.len());
    for (i, entry) in probs.iter().enumerate() {
        let text = entry
            .get("token")
            .or_else(|| entry.get("content"))
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(format!("probability entry {i} has no token text")))?;
        let logprob = if let Some(lp) = entry.get("logprob").and_then(Value::as_f64) {
            lp
        } else {
            let candidates = entry
                .get("probs")
                .and_then(Value::as_array)
                .ok_or(GatewayError::MissingLogprobs)?;
            let chosen = candidates
                .iter()
                .find(|c| c.get("tok_str").and_then(Value::as_str) == Some(text))
                .or_else(|| candidates.first())
                .and_then(|c| c.get("prob"))
                .and_then(Value::as_f64)
                .ok_or(GatewayError::MissingLogprobs)?;
            chosen.ln()
        };
        tokens.push(TokenLogprob::new(text, logprob));
    }
    let stop_type = v.get("stop_type").and_then(Value::as_str);
    let stopped_limit = v.get("stopped_limit").and_then(Value::as_bool).unwrap_or(false);
    let finish_reason = if stop_type == Some("limit") || (stop_type.is_none() && stopped_limit) {
        FinishReason::Length
    } else {
        FinishReason::Stop
    };
    Ok(CompletionResponse {
        tokens,
        finish_reason,
        timing: parse_timing(v),
    })
}

pub(crate) fn parse_openai(v: &Value) -> Result<CompletionResponse, GatewayError> {
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| malformed("no choices"))?;
    let logprobs = choice
        .get("logprobs")
        .filter(|l| !l.is_null())
        .ok_or(GatewayError::MissingLogprobs)?;
    let texts = logprobs
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or(GatewayError::MissingLogprobs)?;
    let lps = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or(GatewayError::MissingLogprobs)?;
    if texts.len() != lps.len() {
        return Err(malformed("tokens and token_logprobs differ in length"));
    }
    let mut tokens = Vec::with_capacity(texts.len());
    for (t, lp) in texts.iter().zip(lps) {
        let text = t.as_str().ok_or_else(|| malformed("token is not a string"))?;
        let logprob = lp.as_f64().ok_or(GatewayError::MissingLogprobs)?;
        tokens.push(TokenLogprob::new(text, logprob));
    }
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    Ok(CompletionResponse {
        tokens,
        finish_reason,
        timing: parse_timing(v),
    })
}
