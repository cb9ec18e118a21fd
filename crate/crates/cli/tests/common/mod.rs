//! Shared helpers for the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lexsimp_cli::config::{Overrides, RunConfig};
use lexsimp_cli::pipeline::{self, DistillOptions, PredictOptions, ReportOptions};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn toy_config(out: &Path, concurrency: Option<usize>) -> RunConfig {
    let flags = Overrides {
        output: Some(out.to_path_buf()),
        concurrency,
        ..Overrides::default()
    };
    RunConfig::resolve(Some(&fixtures().join("toy/run.toml")), flags, Overrides::default()).expect("toy config")
}

/// Files a full toy run leaves behind, compared byte for byte.
pub const GOLDEN_FILES: &[&str] = &[
    "pairs.jsonl",
    "synth_records.jsonl",
    "train.jsonl",
    "trainer_manifest.json",
    "predictions.jsonl",
    "split.json",
    "metrics.json",
    "safety_report.json",
    "plot_data.csv",
    "synth.manifest.json",
    "distill.manifest.json",
    "predict.manifest.json",
    "evaluate.manifest.json",
    "safety-report.manifest.json",
];

/// synth, distill, predict, evaluate and safety-report on the toy fixtures,
/// answered from the recorded replay store.
pub fn run_toy(out: &Path, concurrency: Option<usize>) -> RunConfig {
    let cfg = toy_config(out, concurrency);
    pipeline::synth(&cfg).expect("synth");
    let gateway = pipeline::gateway(&cfg).expect("gateway");
    pipeline::distill(&cfg, &gateway, &DistillOptions::default()).expect("distill");
    pipeline::predict(&cfg, &gateway, &PredictOptions::default()).expect("predict");
    pipeline::evaluate(&cfg, None).expect("evaluate");
    pipeline::safety_report(
        &cfg,
        &ReportOptions {
            plot_data: Some(out.join(pipeline::PLOT_FILE)),
            ..ReportOptions::default()
        },
    )
    .expect("safety report");
    cfg
}

/// Names of golden files whose bytes differ from the fixture copy.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    let golden = fixtures().join("golden");
    GOLDEN_FILES
        .iter()
        .filter(|f| {
            let got = std::fs::read(out.join(f)).ok();
            let want = std::fs::read(golden.join(f)).ok();
            got.is_none() || got != want
        })
        .map(|f| f.to_string())
        .collect()
}
