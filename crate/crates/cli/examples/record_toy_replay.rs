//! Regenerates `fixtures/toy/replay.jsonl` and `fixtures/toy/annotations.jsonl`.
//!
//! A deterministic stub stands in for both the teacher and the fine-tuned
//! student. It answers from the toy dataset's gold lists and mixes in the
//! awkward cases the pipeline has to handle: unchanged targets, nonsense,
//! empty completions and completions cut off by the token limit.
//!
//! Run with `cargo run -p lexsimp-cli --example record_toy_replay`.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexsimp_cli::config::{Overrides, RunConfig};
use lexsimp_cli::pipeline::{self, DistillOptions, PredictOptions, PromptStyle, SplitChoice};
use lexsimp_core::annotations::{self, Annotation, Run};
use lexsimp_core::dataset::LsInstance;
use lexsimp_core::gateway::{
    request_key, CompletionBackend, CompletionRequest, CompletionResponse, FinishReason, Gateway, GatewayError,
    Prediction, RecordingBackend, TokenLogprob,
};
use lexsimp_core::io;
use lexsimp_core::safety::HarmTag;

const FILLERS: [&str; 6] = ["use", "part", "thing", "way", "help", "make"];
const NONSENSE: [&str; 3] = ["blorf", "zanquil", "ptek"];

struct Stub {
    gold: HashMap<String, Vec<String>>,
}

fn roll(request: &CompletionRequest) -> u64 {
    u64::from_str_radix(&request_key(request)[..12], 16).expect("hex key")
}

fn target_of(prompt: &str) -> &str {
    let at = prompt.rfind("Target Word: ").expect("prompt names a target") + "Target Word: ".len();
    prompt[at..].lines().next().unwrap_or_default().trim()
}

fn tokens(word: &str, h: u64, terminated: bool) -> Vec<TokenLogprob> {
    let base = -((h % 997) as f64) / 400.0 - 0.01;
    let mut out = vec![TokenLogprob::new(format!(" {word}"), base)];
    if terminated {
        out.push(TokenLogprob::new("\n", -(((h >> 10) % 50) as f64) / 500.0));
    } else {
        out.push(TokenLogprob::new(" and", -1.5));
        out.push(TokenLogprob::new(" so", -2.25));
    }
    out
}

impl CompletionBackend for Stub {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let h = roll(request);
        let target = target_of(&request.prompt);
        let gold = self.gold.get(target);
        let (word, finish) = match h % 10 {
            0 => (String::new(), FinishReason::Stop),
            1 => ("however".to_string(), FinishReason::Length),
            2 => (target.to_string(), FinishReason::Stop),
            3 => (NONSENSE[(h / 10 % 3) as usize].to_string(), FinishReason::Stop),
            4 | 5 => (FILLERS[(h / 10 % 6) as usize].to_string(), FinishReason::Stop),
            n => match gold {
                Some(g) if n >= 8 && g.len() > 1 => (g[g.len() - 1].clone(), FinishReason::Stop),
                Some(g) => (g[0].clone(), FinishReason::Stop),
                None => (FILLERS[(h / 7 % 6) as usize].to_string(), FinishReason::Stop),
            },
        };
        let tokens = if word.is_empty() {
            vec![TokenLogprob::new("\n", -0.05)]
        } else {
            tokens(&word, h, finish == FinishReason::Stop)
        };
        Ok(CompletionResponse {
            tokens,
            finish_reason: finish,
            timing: None,
        })
    }

    fn name(&self) -> &str {
        "toy-stub"
    }
}

fn tags_for(alternative: &str, i: usize) -> BTreeSet<HarmTag> {
    if NONSENSE.contains(&alternative) {
        return [HarmTag::Gibberish].into();
    }
    match i % 4 {
        0 => BTreeSet::new(),
        1 => [HarmTag::ChangeOfMeaning].into(),
        2 => [HarmTag::MoreDifficult].into(),
        _ => [HarmTag::GrammarError, HarmTag::ChangeOfMeaning].into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy");
    let replay = root.join("replay.jsonl");
    let annotations_path = root.join("annotations.jsonl");
    for p in [&replay, &annotations_path] {
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    let tmp = tempfile::tempdir()?;
    let out = tmp.path().to_path_buf();
    let flags = Overrides {
        output: Some(out.clone()),
        ..Overrides::default()
    };
    let cfg = RunConfig::resolve(Some(&root.join("run.toml")), flags, Overrides::default())?;

    let instances: Vec<LsInstance> = pipeline::load_dataset(&cfg)?;
    let gold = instances.iter().map(|i| (i.target.clone(), i.gold.clone())).collect();
    let recorder = RecordingBackend::new(Stub { gold }, &replay)?;
    let gateway = Gateway::new(Arc::new(recorder), 1);

    pipeline::synth(&cfg)?;
    pipeline::distill(&cfg, &gateway, &DistillOptions::default())?;
    // Both splits and both prompt styles, so any toy run replays.
    for style in [PromptStyle::Finetune, PromptStyle::Fewshot] {
        pipeline::predict(
            &cfg,
            &gateway,
            &PredictOptions {
                style: Some(style),
                split: Some(SplitChoice::All),
            },
        )?;
    }
    pipeline::predict(&cfg, &gateway, &PredictOptions::default())?;

    let preds: Vec<Prediction> = io::read_jsonl(&out.join(pipeline::PREDICTIONS_FILE))?;
    let run = Run::new(preds, instances)?;
    let judged = run.judged()?;
    let pending: Vec<_> = judged.iter().filter(|j| j.needs_annotation()).collect();
    // The last item stays pending so the queue has work.
    for (i, j) in pending.iter().enumerate().take(pending.len().saturating_sub(1)) {
        let a = Annotation {
            item_id: j.item_id.clone(),
            annotator: if i % 3 == 0 { "ann-b" } else { "ann-a" }.into(),
            tags: tags_for(&j.prediction.alternative, i),
            timestamp: format!("2026-01-05T09:{:02}:00.000Z", i % 60),
        };
        annotations::append(&annotations_path, &a)?;
    }
    println!(
        "recorded {} to {} and {} annotation(s) to {}",
        count_lines(&replay)?,
        replay.display(),
        pending.len().saturating_sub(1),
        annotations_path.display()
    );
    Ok(())
}

fn count_lines(p: &Path) -> std::io::Result<usize> {
    Ok(std::fs::read_to_string(p)?.lines().count())
}
