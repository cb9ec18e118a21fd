//! Completion backends with per-token log-probabilities.
//!
//! [`Gateway`] wraps any [`CompletionBackend`], validates responses and
//! bounds the number of in-flight requests. [`extract_alternative`] and
//! [`probability_score`] turn a response into a [`Prediction`].

mod http;
mod replay;

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use http::{Dialect, HttpBackend, HttpConfig};
pub use replay::{request_key, RecordingBackend, ReplayBackend, ReplayRecord};

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub greedy: bool,
    pub stop: Vec<String>,
    pub want_logprobs: bool,
}

impl CompletionRequest {
    /// Greedy, at most 10 new tokens, stop at newline.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            greedy: true,
            stop: vec!["\n".to_string()],
            want_logprobs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub text: String,
    /// Natural-log probability.
    pub logprob: f64,
}

impl TokenLogprob {
    pub fn new(text: impl Into<String>, logprob: f64) -> Self {
        Self {
            text: text.into(),
            logprob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
}

/// Server-side timing for one completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub prompt_tokens: u64,
    pub prompt_ms: f64,
    pub gen_tokens: u64,
    pub gen_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub tokens: Vec<TokenLogprob>,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl CompletionResponse {
    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    fn validate(&self) -> Result<(), GatewayError> {
        for (i, t) in self.tokens.iter().enumerate() {
            if !t.logprob.is_finite() || t.logprob > 0.0 {
                return Err(GatewayError::Malformed(format!(
                    "token {i} ({:?}) has logprob {}",
                    t.text, t.logprob
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend response has no token log-probabilities")]
    MissingLogprobs,
    #[error("no recorded response for request {key}")]
    ReplayMiss { key: String },
    #[error("replay store: {0}")]
    Store(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport { retryable, .. } => *retryable,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;

    fn name(&self) -> &str;
}

/// Counts prefix-cache hits: a request whose prompt prefix equals an
/// already seen prefix can reuse the server's cached prompt state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub distinct_prefixes: u64,
}

pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    pool: rayon::ThreadPool,
    prefixes: Mutex<(HashSet<String>, CacheStats)>,
}

impl Gateway {
    /// `concurrency` bounds the number of requests in flight.
    pub fn new(backend: Arc<dyn CompletionBackend>, concurrency: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .thread_name(|i| format!("gateway-{i}"))
            .build()
            .expect("failed to build gateway thread pool");
        Self {
            backend,
            pool,
            prefixes: Mutex::new((HashSet::new(), CacheStats::default())),
        }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        if !request.want_logprobs {
            return Err(GatewayError::Malformed("log-probabilities must be requested".into()));
        }
        let response = self.backend.complete(request)?;
        response.validate()?;
        Ok(response)
    }

    /// Complete every request, at most `concurrency` at a time. Results come
    /// back in request order.
    pub fn complete_all(&self, requests: &[CompletionRequest]) -> Vec<Result<CompletionResponse, GatewayError>> {
        use rayon::prelude::*;
        self.pool
            .install(|| requests.par_iter().map(|r| self.complete(r)).collect())
    }

    pub fn observe_prefix(&self, prefix_hash: &str) {
        let mut guard = self.prefixes.lock().unwrap();
        let (seen, stats) = &mut *guard;
        if seen.insert(prefix_hash.to_string()) {
            stats.misses += 1;
            stats.distinct_prefixes += 1;
        } else {
            stats.hits += 1;
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.prefixes.lock().unwrap().1
    }
}

/// Alternative word pulled out of a completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub alternative: String,
    /// Tokens forming the alternative, plus the terminating token when the
    /// server reported one.
    pub contributing: Vec<TokenLogprob>,
    pub terminated: bool,
    pub empty: bool,
}

/// Cut the generated text at the first stop string. The token in which the
/// stop string starts is the terminator and is kept in `contributing`.
pub fn extract_alternative(response: &CompletionResponse, stop: &[String]) -> Extraction {
    let mut text = String::new();
    for (i, tok) in response.tokens.iter().enumerate() {
        text.push_str(&tok.text);
        // Earlier prefixes had no match, so any hit involves this token.
        let hit = stop
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| text.find(s.as_str()))
            .min();
        if let Some(cut) = hit {
            return finish(&text[..cut], response.tokens[..=i].to_vec(), true);
        }
    }
    let terminated = response.finish_reason == FinishReason::Stop;
    finish(&text, response.tokens.clone(), terminated)
}

fn finish(raw: &str, contributing: Vec<TokenLogprob>, terminated: bool) -> Extraction {
    let alternative = raw.trim().to_string();
    Extraction {
        empty: alternative.is_empty(),
        alternative,
        contributing,
        terminated,
    }
}

/// Sum of natural-log token probabilities. `None` for an empty token list.
pub fn probability_score(tokens: &[TokenLogprob]) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    Some(tokens.iter().map(|t| t.logprob).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub alternative: String,
    pub raw_tokens: Vec<TokenLogprob>,
    pub score: f64,
    /// The model emitted an end-of-word token within the length budget.
    pub terminated: bool,
    /// Nothing usable was generated; judged as unchanged downstream.
    #[serde(default)]
    pub empty: bool,
}

impl Prediction {
    /// A response with no tokens at all scores 0 and is flagged empty.
    pub fn from_response(instance_id: impl Into<String>, response: &CompletionResponse, stop: &[String]) -> Self {
        let ex = extract_alternative(response, stop);
        Self {
            instance_id: instance_id.into(),
            score: probability_score(&ex.contributing).unwrap_or(0.0),
            alternative: ex.alternative,
            raw_tokens: response.tokens.clone(),
            terminated: ex.terminated,
            empty: ex.empty,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn response(tokens: &[(&str, f64)], finish: FinishReason) -> CompletionResponse {
        CompletionResponse {
            tokens: tokens.iter().map(|&(t, l)| TokenLogprob::new(t, l)).collect(),
            finish_reason: finish,
            timing: None,
        }
    }

    fn newline() -> Vec<String> {
        vec!["\n".into()]
    }

    #[test]
    fn extracts_people() {
        let r = response(&[("peo", -0.5), ("ple", -0.25), ("\n", -0.125)], FinishReason::Stop);
        let ex = extract_alternative(&r, &newline());
        assert_eq!(ex.alternative, "people");
        assert_eq!(ex.contributing.len(), 3);
        assert!(ex.terminated && !ex.empty);
        assert_eq!(probability_score(&ex.contributing), Some(-0.875));
    }

    #[test]
    fn length_stop_is_unterminated() {
        let r = response(&[(" very", -1.0), (" long", -2.0)], FinishReason::Length);
        let p = Prediction::from_response("i", &r, &newline());
        assert_eq!(p.alternative, "very long");
        assert!(!p.terminated);
        assert_eq!(p.score, -3.0);
    }

    #[test]
    fn stop_inside_a_token_and_trailing_tokens() {
        let r = response(
            &[(" main", -0.2), (".\nContext", -0.4), (":", -0.1)],
            FinishReason::Length,
        );
        let ex = extract_alternative(&r, &newline());
        assert_eq!(ex.alternative, "main.");
        assert_eq!(ex.contributing.len(), 2);
        assert!(ex.terminated);
    }

    #[test]
    fn multi_char_stop_split_across_tokens() {
        let stop = vec!["###".to_string()];
        let r = response(
            &[("word", -0.1), ("#", -0.1), ("##", -0.1), ("x", -0.1)],
            FinishReason::Length,
        );
        let ex = extract_alternative(&r, &stop);
        assert_eq!(ex.alternative, "word");
        assert_eq!(ex.contributing.len(), 3);
    }

    #[test]
    fn server_side_stop_without_terminator_token() {
        let r = response(&[(" people", -0.3)], FinishReason::Stop);
        let ex = extract_alternative(&r, &newline());
        assert!(ex.terminated);
        assert_eq!(ex.contributing.len(), 1);
    }

    #[test]
    fn degenerate_outputs() {
        let r = response(&[("\n", -0.7)], FinishReason::Stop);
        let p = Prediction::from_response("i", &r, &newline());
        assert!(p.empty && p.terminated);
        assert_eq!(p.score, -0.7);

        let r = response(&[], FinishReason::Stop);
        let p = Prediction::from_response("i", &r, &newline());
        assert!(p.empty);
        assert_eq!(p.score, 0.0);
        assert_eq!(probability_score(&[]), None);
    }

    #[test]
    fn two_term_sum() {
        let toks = [TokenLogprob::new("w", -1.2), TokenLogprob::new("\n", -0.3)];
        assert!((probability_score(&toks).unwrap() - -1.5).abs() < 1e-12);
    }

    struct Fixed(CompletionResponse);

    impl CompletionBackend for Fixed {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
            Ok(self.0.clone())
        }
        fn name(&self) -> &str {
            "fixed"
        }
    }

    #[test]
    fn gateway_rejects_invalid_logprobs() {
        let gw = Gateway::new(Arc::new(Fixed(response(&[("x", 0.5)], FinishReason::Stop))), 2);
        assert!(matches!(
            gw.complete(&CompletionRequest::new("p")),
            Err(GatewayError::Malformed(_))
        ));
        let gw = Gateway::new(Arc::new(Fixed(response(&[("x", f64::NAN)], FinishReason::Stop))), 2);
        assert!(gw.complete(&CompletionRequest::new("p")).is_err());
        let mut req = CompletionRequest::new("p");
        req.want_logprobs = false;
        assert!(gw.complete(&req).is_err());
    }

    #[test]
    fn gateway_preserves_order_and_counts_prefixes() {
        let gw = Gateway::new(Arc::new(Fixed(response(&[("a", -0.1)], FinishReason::Stop))), 3);
        let reqs: Vec<_> = (0..20).map(|i| CompletionRequest::new(format!("p{i}"))).collect();
        let out = gw.complete_all(&reqs);
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|r| r.is_ok()));
        gw.observe_prefix("a");
        gw.observe_prefix("a");
        gw.observe_prefix("b");
        assert_eq!(
            gw.cache_stats(),
            CacheStats {
                hits: 1,
                misses: 2,
                distinct_prefixes: 2
            }
        );
    }

    #[test]
    fn retryable_classification() {
        assert!(GatewayError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(!GatewayError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!GatewayError::MissingLogprobs.is_retryable());
        assert!(GatewayError::Transport {
            message: String::new(),
            retryable: true
        }
        .is_retryable());
    }

    proptest! {
        #[test]
        fn score_matches_summation_oracle(lps in prop::collection::vec(-20.0f64..=0.0, 1..12)) {
            let toks: Vec<_> = lps.iter().map(|&l| TokenLogprob::new("t", l)).collect();
            let mut oracle = 0.0f64;
            for lp in &lps {
                oracle += lp;
            }
            prop_assert!((probability_score(&toks).unwrap() - oracle).abs() <= 1e-12);
        }

        #[test]
        fn appending_a_token_lowers_the_score(
            lps in prop::collection::vec(-20.0f64..=0.0, 1..12),
            extra in -20.0f64..-1e-6,
        ) {
            let mut toks: Vec<_> = lps.iter().map(|&l| TokenLogprob::new("t", l)).collect();
            let before = probability_score(&toks).unwrap();
            toks.push(TokenLogprob::new("u", extra));
            prop_assert!(probability_score(&toks).unwrap() < before);
        }
    }
}
