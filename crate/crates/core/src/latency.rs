//! Per-token latency profiles and response-time estimates.
//!
//! Response time is modelled as
//! `max(0, read_tokens - cached_prefix_tokens) * read_ms + pred_tokens * pred_ms`.
//! The cached prefix stands for the few-shot part of the prompt that the
//! inference server keeps between requests. The discount only holds while
//! that prefix stays byte-identical; varying the examples per request
//! invalidates the cache and every prompt token is paid again.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub environment: String,
    pub read_ms_per_token: f64,
    pub pred_ms_per_token: f64,
    #[serde(default)]
    pub cached_prefix_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<Measurement>,
}

/// How a measured profile was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub method: TimingSource,
    pub probes: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub probe_prompt_tokens: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_ms_stddev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_ms_stddev: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    Server,
    WallClock,
}

#[derive(Debug, thiserror::Error)]
pub enum LatencyError {
    #[error("token counts must be non-negative (read {read}, pred {pred})")]
    NegativeTokens { read: i64, pred: i64 },
    #[error("profile values must be finite and non-negative")]
    InvalidProfile,
    #[error("backend reports no timing and wall-clock fallback is disabled")]
    NoTiming,
    #[error("need at least one probe prompt and one repetition")]
    NoSamples,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("unknown latency profile {0:?}")]
    UnknownProfile(String),
}

impl LatencyProfile {
    pub fn new(environment: impl Into<String>, read_ms: f64, pred_ms: f64) -> Self {
        Self {
            environment: environment.into(),
            read_ms_per_token: read_ms,
            pred_ms_per_token: pred_ms,
            cached_prefix_tokens: 0,
            measurement: None,
        }
    }

    pub fn with_cache(mut self, cached_prefix_tokens: u64) -> Self {
        self.cached_prefix_tokens = cached_prefix_tokens;
        self
    }

    fn validate(&self) -> Result<(), LatencyError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.read_ms_per_token) && ok(self.pred_ms_per_token) {
            Ok(())
        } else {
            Err(LatencyError::InvalidProfile)
        }
    }

    pub fn load(path: &Path) -> Result<Self, LatencyError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        let p: Self = serde_json::from_slice(&bytes).map_err(IoError::from)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_json_atomic(path, self)
    }
}

/// Estimated response time in milliseconds.
pub fn estimate(profile: &LatencyProfile, read_tokens: i64, pred_tokens: i64) -> Result<f64, LatencyError> {
    if read_tokens < 0 || pred_tokens < 0 {
        return Err(LatencyError::NegativeTokens {
            read: read_tokens,
            pred: pred_tokens,
        });
    }
    profile.validate()?;
    let uncached = (read_tokens as u64).saturating_sub(profile.cached_prefix_tokens);
    Ok(uncached as f64 * profile.read_ms_per_token + pred_tokens as f64 * profile.pred_ms_per_token)
}

/// Per-token latencies of the reference deployments (llama.cpp on AWS
/// Graviton m6g instances). Names are `{model}-{setting}@{instance}`;
/// `large-fine-tuned` and `xlarge-fine-tuned` alias the fine-tuned 1B Llama.
pub fn builtin_profiles() -> Vec<(&'static str, LatencyProfile)> {
    const ROWS: [(&str, [f64; 4]); 5] = [
        ("gemma-9b-5-shot", [652.0, 581.0, 326.0, 292.0]),
        ("qwen-1.5b-5-shot", [91.0, 275.0, 45.0, 139.0]),
        ("qwen-1.5b-fine-tuned", [86.0, 274.0, 43.0, 138.0]),
        ("llama-1b-5-shot", [70.0, 219.0, 35.0, 110.0]),
        ("llama-1b-fine-tuned", [66.0, 221.0, 33.0, 107.0]),
    ];
    let mut out = Vec::new();
    for (model, [lr, lp, xr, xp]) in ROWS {
        let large: &'static str = Box::leak(format!("{model}@m6g.large").into_boxed_str());
        let xlarge: &'static str = Box::leak(format!("{model}@m6g.xlarge").into_boxed_str());
        out.push((large, LatencyProfile::new("m6g.large", lr, lp)));
        out.push((xlarge, LatencyProfile::new("m6g.xlarge", xr, xp)));
    }
    out.push(("large-fine-tuned", LatencyProfile::new("m6g.large", 66.0, 221.0)));
    out.push(("xlarge-fine-tuned", LatencyProfile::new("m6g.xlarge", 33.0, 107.0)));
    out
}

pub fn builtin_profile(name: &str) -> Result<LatencyProfile, LatencyError> {
    builtin_profiles()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| p)
        .ok_or_else(|| LatencyError::UnknownProfile(name.to_string()))
}

/// Mean and sample standard deviation; the deviation is `None` for a single
/// value.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

pub struct MeasureConfig<'a> {
    pub environment: &'a str,
    pub probes: &'a [String],
    pub repetitions: usize,
    pub warmup: usize,
    /// Fall back to timing requests on the client when the server reports
    /// nothing.
    pub wall_clock: bool,
    /// Prompt token count estimate used by the wall-clock fallback.
    pub count_tokens: &'a dyn Fn(&str) -> u64,
}

/// Rough token estimate for the wall-clock fallback: one token per four
/// bytes, at least one per whitespace-separated word.
pub fn rough_token_count(text: &str) -> u64 {
    (text.len() as u64)
        .div_ceil(4)
        .max(text.split_whitespace().count() as u64)
}

/// Run every probe `warmup + repetitions` times, serially, and average the
/// per-token costs of the kept repetitions.
pub fn measure(gateway: &Gateway, cfg: &MeasureConfig<'_>) -> Result<LatencyProfile, LatencyError> {
    if cfg.probes.is_empty() || cfg.repetitions == 0 {
        return Err(LatencyError::NoSamples);
    }
    let mut read_per_rep = Vec::with_capacity(cfg.repetitions);
    let mut pred_per_rep = Vec::with_capacity(cfg.repetitions);
    let mut probe_tokens = vec![0u64; cfg.probes.len()];
    let mut source = TimingSource::Server;

    for rep in 0..cfg.warmup + cfg.repetitions {
        let (mut read_ms, mut read_tok, mut pred_ms, mut pred_tok) = (0.0, 0u64, 0.0, 0u64);
        for (p, probe) in cfg.probes.iter().enumerate() {
            let req = CompletionRequest::new(probe.clone());
            let started = Instant::now();
            let resp = gateway.complete(&req)?;
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            match resp.timing {
                Some(t) => {
                    read_ms += t.prompt_ms;
                    read_tok += t.prompt_tokens;
                    pred_ms += t.gen_ms;
                    pred_tok += t.gen_tokens;
                    probe_tokens[p] = t.prompt_tokens;
                }
                None if cfg.wall_clock => {
                    source = TimingSource::WallClock;
                    // A one-token request approximates prompt processing.
                    let mut one = req.clone();
                    one.max_new_tokens = 1;
                    let started = Instant::now();
                    gateway.complete(&one)?;
                    let first = started.elapsed().as_secs_f64() * 1e3;
                    let generated = resp.tokens.len() as u64;
                    let prompt = (cfg.count_tokens)(probe);
                    let per_token = if generated > 1 {
                        ((elapsed - first) / (generated - 1) as f64).max(0.0)
                    } else {
                        0.0
                    };
                    read_ms += (first - per_token).max(0.0);
                    read_tok += prompt;
                    pred_ms += per_token * generated as f64;
                    pred_tok += generated;
                    probe_tokens[p] = prompt;
                }
                None => return Err(LatencyError::NoTiming),
            }
        }
        if rep < cfg.warmup {
            continue;
        }
        if read_tok > 0 {
            read_per_rep.push(read_ms / read_tok as f64);
        }
        if pred_tok > 0 {
            pred_per_rep.push(pred_ms / pred_tok as f64);
        }
    }
    if read_per_rep.is_empty() || pred_per_rep.is_empty() {
        return Err(LatencyError::NoSamples);
    }
    let (read, read_std) = mean_std(&read_per_rep);
    let (pred, pred_std) = mean_std(&pred_per_rep);
    Ok(LatencyProfile {
        environment: cfg.environment.to_string(),
        read_ms_per_token: read,
        pred_ms_per_token: pred,
        cached_prefix_tokens: 0,
        measurement: Some(Measurement {
            method: source,
            probes: cfg.probes.len(),
            repetitions: cfg.repetitions,
            warmup: cfg.warmup,
            probe_prompt_tokens: probe_tokens,
            read_ms_stddev: read_std,
            pred_ms_stddev: pred_std,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CompletionBackend, CompletionResponse, FinishReason, Timing, TokenLogprob};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn worked_latency_arithmetic() {
        let p = LatencyProfile::new("m6g.xlarge", 33.0, 107.0);
        assert_eq!(estimate(&p, 30, 2).unwrap(), 1204.0);
        assert_eq!(estimate(&p, 0, 0).unwrap(), 0.0);
        let large = LatencyProfile::new("m6g.large", 66.0, 221.0);
        assert_eq!(estimate(&large, 30, 2).unwrap(), 2422.0);
        assert_eq!(
            estimate(&builtin_profile("xlarge-fine-tuned").unwrap(), 30, 2).unwrap(),
            1204.0
        );
        assert_eq!(builtin_profile("llama-1b-fine-tuned@m6g.large").unwrap(), large);
        assert!(builtin_profile("nope").is_err());
    }

    #[test]
    fn cache_discount_never_goes_negative() {
        let p = LatencyProfile::new("x", 10.0, 100.0).with_cache(200);
        assert_eq!(estimate(&p, 230, 2).unwrap(), 500.0);
        assert_eq!(estimate(&p, 50, 1).unwrap(), 100.0);
        assert!(matches!(estimate(&p, -1, 0), Err(LatencyError::NegativeTokens { .. })));
        assert!(estimate(&LatencyProfile::new("x", -1.0, 0.0), 1, 1).is_err());
    }

    /// Server timing: prompt cost 10 ms/token, generation 20+rep ms/token.
    struct Timed {
        calls: AtomicUsize,
        with_timing: bool,
    }

    impl CompletionBackend for Timed {
        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst) as f64;
            let prompt_tokens = req.prompt.split_whitespace().count() as u64;
            Ok(CompletionResponse {
                tokens: vec![TokenLogprob::new(" a", -0.1), TokenLogprob::new("\n", -0.1)],
                finish_reason: FinishReason::Stop,
                timing: self.with_timing.then_some(Timing {
                    prompt_tokens,
                    prompt_ms: 10.0 * prompt_tokens as f64,
                    gen_tokens: 2,
                    gen_ms: 2.0 * (20.0 + call),
                }),
            })
        }
        fn name(&self) -> &str {
            "timed"
        }
    }

    fn cfg<'a>(probes: &'a [String], reps: usize, warmup: usize, wall: bool) -> MeasureConfig<'a> {
        MeasureConfig {
            environment: "test",
            probes,
            repetitions: reps,
            warmup,
            wall_clock: wall,
            count_tokens: &rough_token_count,
        }
    }

    #[test]
    fn measures_server_timing() {
        let gw = Gateway::new(
            Arc::new(Timed {
                calls: AtomicUsize::new(0),
                with_timing: true,
            }),
            1,
        );
        let probes = vec!["one two three four five six seven eight nine ten".to_string()];
        let p = measure(&gw, &cfg(&probes, 1, 0, false)).unwrap();
        assert_eq!(p.read_ms_per_token, 10.0);
        let m = p.measurement.unwrap();
        assert_eq!(m.read_ms_stddev, None);
        assert_eq!(m.probe_prompt_tokens, vec![10]);

        // Two warm-up calls (pred 20, 21 ms/token) are discarded; kept reps
        // see 22, 23, 24, 25.
        let gw = Gateway::new(
            Arc::new(Timed {
                calls: AtomicUsize::new(0),
                with_timing: true,
            }),
            1,
        );
        let p = measure(&gw, &cfg(&probes, 4, 2, false)).unwrap();
        let samples = [22.0, 23.0, 24.0, 25.0];
        let oracle_mean = samples.iter().sum::<f64>() / 4.0;
        let oracle_std = (samples
            .iter()
            .map(|s| (s - oracle_mean) * (s - oracle_mean))
            .sum::<f64>()
            / 3.0)
            .sqrt();
        assert!((p.pred_ms_per_token - oracle_mean).abs() < 1e-9);
        assert!((p.measurement.unwrap().pred_ms_stddev.unwrap() - oracle_std).abs() < 1e-9);
    }

    #[test]
    fn missing_timing_needs_fallback() {
        let gw = Gateway::new(
            Arc::new(Timed {
                calls: AtomicUsize::new(0),
                with_timing: false,
            }),
            1,
        );
        let probes = vec!["a b c".to_string()];
        assert!(matches!(
            measure(&gw, &cfg(&probes, 1, 0, false)),
            Err(LatencyError::NoTiming)
        ));
        let p = measure(&gw, &cfg(&probes, 2, 0, true)).unwrap();
        assert_eq!(p.measurement.as_ref().unwrap().method, TimingSource::WallClock);
        assert!(p.read_ms_per_token >= 0.0 && p.pred_ms_per_token >= 0.0);
        assert!(matches!(
            measure(&gw, &cfg(&[], 1, 0, true)),
            Err(LatencyError::NoSamples)
        ));
    }

    #[test]
    fn profile_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = LatencyProfile::new("m6g.xlarge", 33.0, 107.0).with_cache(120);
        p.save(&path).unwrap();
        assert_eq!(LatencyProfile::load(&path).unwrap(), p);
    }

    proptest! {
        #[test]
        fn estimate_is_linear_and_monotone(
            read_ms in 0.0f64..500.0,
            pred_ms in 0.0f64..500.0,
            cache in 0u64..50,
            r1 in 0i64..200, r2 in 0i64..200,
            p1 in 0i64..20, p2 in 0i64..20,
        ) {
            let prof = LatencyProfile::new("x", read_ms, pred_ms).with_cache(cache);
            let e = |r, p| estimate(&prof, r, p).unwrap();
            prop_assert!(e(r1, p1) >= 0.0);
            // Linear in predicted tokens.
            prop_assert!((e(r1, p1 + p2) - (e(r1, p1) + p2 as f64 * pred_ms)).abs() < 1e-6);
            // Linear in read tokens once past the cached prefix.
            let base = cache as i64;
            prop_assert!((e(base + r1 + r2, 0) - e(base + r1, 0) - r2 as f64 * read_ms).abs() < 1e-6);
            prop_assert!(e(r1 + r2, p1) >= e(r1, p1));
            prop_assert!(e(r1, p1 + p2) >= e(r1, p1));
        }
    }
}
