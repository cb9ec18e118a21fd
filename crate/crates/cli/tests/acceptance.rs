//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every check compares the library against an
//! independent oracle written here.

mod common;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use lexsimp_cli::pipeline;
use lexsimp_core::dataset::{self, Format, LsInstance, Mode};
use lexsimp_core::distillation::filter_top_confidence;
use lexsimp_core::gateway::{probability_score, CompletionResponse, FinishReason, Prediction, TokenLogprob};
use lexsimp_core::latency::{estimate, LatencyProfile};
use lexsimp_core::metrics::judge;
use lexsimp_core::safety::{auc_beneficial_vs_harmful, b_at_h_budget, rates_at, sweep, Category, ScoredItem};
use lexsimp_core::span::CharSpan;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn focal_instance() -> LsInstance {
    let context = "Electronically controlled motorized zoom lenses are placed on both camera and projector, \
and synchronized with one another so that both lenses zoom together and at the same focal length at all times.";
    let start = context.find("focal").unwrap();
    LsInstance {
        id: "focal-lens".into(),
        language: "en".into(),
        context: context.into(),
        target: "focal".into(),
        target_span: CharSpan::new(start, start + "focal".len()),
        gold: ["main", "main", "central", "central", "basic", "primary", "focal"]
            .map(String::from)
            .to_vec(),
    }
}

fn metric_semantics() -> Check {
    let inst = focal_instance();
    let cases = [
        ("main", true, true, false),
        ("central", true, true, false),
        ("primary", false, true, false),
        ("basic", false, true, false),
        ("focal", false, false, true),
        ("Main", true, true, false),
        ("key", false, false, false),
    ];
    for (alt, acc, pot, unchanged) in cases {
        let v = judge(alt, &inst);
        ensure((v.acc, v.pot, v.unchanged) == (acc, pot, unchanged), || {
            format!("{alt}: got acc={} pot={} unchanged={}", v.acc, v.pot, v.unchanged)
        })?;
    }
    let (kept, _) = dataset::select_simplifiable(std::slice::from_ref(&inst));
    ensure(kept.len() == 1, || "instance should be simplifiable".into())?;
    Ok(format!("{} cases", cases.len()))
}

// ----------------------------------------------------------------- safety

const BENEFICIAL: [Category; 3] = [Category::Acc, Category::Pot, Category::Good];
const HARMFUL: [Category; 2] = [Category::Degraded, Category::Gibberish];
const ALL: [Category; 7] = [
    Category::Acc,
    Category::Pot,
    Category::Good,
    Category::Unchanged,
    Category::Degraded,
    Category::Gibberish,
    Category::Pending,
];

/// Scores on a coarse grid so ties are common.
fn random_items(rng: &mut ChaCha8Rng, max: usize) -> Vec<ScoredItem> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| ScoredItem {
            category: ALL[rng.random_range(0..ALL.len())],
            score: -(rng.random_range(0..40) as f64) / 8.0,
        })
        .collect()
}

fn auc_oracle(items: &[ScoredItem]) -> Option<f64> {
    let b: Vec<f64> = items
        .iter()
        .filter(|i| BENEFICIAL.contains(&i.category))
        .map(|i| i.score)
        .collect();
    let h: Vec<f64> = items
        .iter()
        .filter(|i| HARMFUL.contains(&i.category))
        .map(|i| i.score)
        .collect();
    if b.is_empty() || h.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for x in &b {
        for y in &h {
            wins += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (b.len() * h.len()) as f64)
}

fn auc_vs_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut undefined = 0;
    for case in 0..200 {
        let items = random_items(&mut rng, 50);
        match (auc_beneficial_vs_harmful(&items), auc_oracle(&items)) {
            (Ok(got), Some(want)) => ensure((got - want).abs() <= 1e-9, || format!("case {case}: {got} vs {want}"))?,
            (Err(_), None) => undefined += 1,
            (got, want) => return Err(format!("case {case}: {got:?} vs {want:?}")),
        }
    }
    for (b, h, want) in [
        (vec![-1.0, -2.0], vec![-3.0, -4.0], 1.0),
        (vec![-1.0, -3.0], vec![-2.0, -4.0], 0.75),
        (vec![-2.0], vec![-2.0], 0.5),
    ] {
        let items: Vec<ScoredItem> = b
            .iter()
            .map(|&s| ScoredItem {
                category: Category::Good,
                score: s,
            })
            .chain(h.iter().map(|&s| ScoredItem {
                category: Category::Degraded,
                score: s,
            }))
            .collect();
        let got = auc_beneficial_vs_harmful(&items).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("worked example {b:?}/{h:?}: {got}"))?;
    }
    Ok(format!("200 sets, {undefined} with one class empty"))
}

struct Counts {
    n: usize,
    b: usize,
    h: usize,
}

fn count_above(items: &[ScoredItem], t: f64) -> Counts {
    let categorized: Vec<&ScoredItem> = items.iter().filter(|i| i.category != Category::Pending).collect();
    let above = |group: &[Category]| {
        categorized
            .iter()
            .filter(|i| i.score > t && group.contains(&i.category))
            .count()
    };
    Counts {
        n: categorized.len(),
        b: above(&BENEFICIAL),
        h: above(&HARMFUL),
    }
}

fn rate(c: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        c as f64 / n as f64
    }
}

/// Best beneficial rate over every threshold that could matter: −∞, each
/// score and +∞.
fn budget_oracle(items: &[ScoredItem], budget: f64) -> f64 {
    let mut thresholds = vec![f64::NEG_INFINITY, f64::INFINITY];
    thresholds.extend(items.iter().map(|i| i.score));
    thresholds
        .into_iter()
        .map(|t| count_above(items, t))
        .filter(|c| rate(c.h, c.n) <= budget)
        .map(|c| rate(c.b, c.n))
        .fold(0.0, f64::max)
}

fn b_h_vs_exhaustive_search() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..200 {
        let items = random_items(&mut rng, 50);
        let budget = if case % 4 == 0 {
            0.1
        } else {
            rng.random_range(0..=50) as f64 / 100.0
        };
        let got = b_at_h_budget(&sweep(&items), budget);
        let want = budget_oracle(&items, budget);
        ensure(got == want, || format!("case {case} budget {budget}: {got} vs {want}"))?;
    }

    let mut example: Vec<ScoredItem> = [-1.0, -1.5, -2.0, -2.5, -3.0, -3.5]
        .map(|s| ScoredItem {
            category: Category::Good,
            score: s,
        })
        .to_vec();
    example.extend([-4.0, -4.5, -5.0, -5.5].map(|s| ScoredItem {
        category: Category::Degraded,
        score: s,
    }));
    let got = b_at_h_budget(&sweep(&example), 0.10);
    ensure((got - 0.60).abs() < 1e-12, || format!("worked example gave {got}"))?;

    let all_harmful: Vec<ScoredItem> = (0..5)
        .map(|i| ScoredItem {
            category: Category::Gibberish,
            score: -(i as f64),
        })
        .collect();
    let got = b_at_h_budget(&sweep(&all_harmful), 0.0);
    ensure(got == 0.0, || format!("reject-all case gave {got}"))?;
    Ok("200 sets, worked example 0.60, reject-all".into())
}

fn sweep_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..500 {
        let items = random_items(&mut rng, 60);
        let curve = sweep(&items);
        ensure(curve[0].threshold == f64::NEG_INFINITY, || {
            format!("case {case}: curve starts at {}", curve[0].threshold)
        })?;
        for w in curve.windows(2) {
            ensure(
                w[0].threshold < w[1].threshold
                    && w[1].beneficial_rate <= w[0].beneficial_rate
                    && w[1].harmful_rate <= w[0].harmful_rate,
                || format!("case {case}: not monotone at {}", w[1].threshold),
            )?;
        }
        for p in &curve {
            let c = count_above(&items, p.threshold);
            ensure(
                p.beneficial_rate == rate(c.b, c.n) && p.harmful_rate == rate(c.h, c.n),
                || format!("case {case}: point {} differs from recount", p.threshold),
            )?;
        }
        let open = rates_at(&items, f64::NEG_INFINITY);
        let all = count_above(&items, f64::NEG_INFINITY);
        ensure(
            open.beneficial_rate == rate(all.b, all.n) && open.harmful_rate == rate(all.h, all.n),
            || format!("case {case}: −∞ is not the unfiltered rate"),
        )?;
        let max = items.iter().map(|i| i.score).fold(f64::NEG_INFINITY, f64::max);
        for t in [max, max + 0.5] {
            let closed = rates_at(&items, t);
            ensure(closed.beneficial_rate == 0.0 && closed.harmful_rate == 0.0, || {
                format!("case {case}: t={t} accepts something")
            })?;
        }
    }
    Ok("500 cases".into())
}

// ---------------------------------------------------------------- latency

fn latency() -> Check {
    let xlarge = LatencyProfile::new("m6g.xlarge", 33.0, 107.0);
    let ms = estimate(&xlarge, 30, 2).map_err(|e| e.to_string())?;
    ensure(ms == 1204.0, || format!("worked example gave {ms}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..500 {
        let p = LatencyProfile::new(
            "x",
            rng.random_range(1..1000) as f64 / 4.0,
            rng.random_range(1..1000) as f64 / 4.0,
        );
        let (r1, r2, p1, p2) = (
            rng.random_range(0..5000i64),
            rng.random_range(0..5000i64),
            rng.random_range(0..500i64),
            rng.random_range(0..500i64),
        );
        let e = |r, q| estimate(&p, r, q).unwrap();
        let whole = e(r1 + r2, p1 + p2);
        let parts = e(r1, p1) + e(r2, p2);
        ensure((whole - parts).abs() <= 1e-9 * whole.max(1.0), || {
            format!("case {case}: not additive")
        })?;
        let direct = r1 as f64 * p.read_ms_per_token + p1 as f64 * p.pred_ms_per_token;
        ensure((e(r1, p1) - direct).abs() <= 1e-9 * direct.max(1.0), || {
            format!("case {case}: {direct}")
        })?;
    }
    Ok("1204 ms, 500 linearity cases".into())
}

// -------------------------------------------------------------- synthesis

fn fixtures() -> PathBuf {
    common::fixtures()
}

/// Oracle for the synthesis invariants, reading the raw corpus and frequency
/// files without the library.
fn synthesis_properties() -> Check {
    let toy = fixtures().join("toy");
    let freq: HashMap<String, f64> = std::fs::read_to_string(toy.join("freq_en.tsv"))
        .map_err(|e| e.to_string())?
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (w, z) = l.rsplit_once('\t').expect("two columns");
            (w.to_lowercase(), z.parse().expect("number"))
        })
        .collect();
    let mut sentences: HashMap<String, Value> = HashMap::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for line in std::fs::read_to_string(toy.join("corpus_en.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
    {
        let rec: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let doc = rec["doc_id"].as_str().unwrap().to_string();
        let i = index.entry(doc.clone()).or_insert(0);
        sentences.insert(format!("{doc}:{i}"), rec);
        *i += 1;
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    let mut checked = 0;
    for run in ["a", "b"] {
        let mut cfg = common::toy_config(&tmp.path().join(run), None);
        cfg.n_pairs = 10_000;
        let outcome = pipeline::synth(&cfg).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(&outcome.pairs).map_err(|e| e.to_string())?);
        if run == "b" {
            continue;
        }
        let pairs: Vec<Value> = String::from_utf8_lossy(&outputs[0])
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        ensure(!pairs.is_empty(), || "no pairs synthesized".into())?;
        for p in &pairs {
            let id = p["source_id"].as_str().unwrap();
            let rec = sentences.get(id).ok_or_else(|| format!("{id}: unknown sentence"))?;
            let tokens = rec["tokens"].as_array().unwrap();
            let words: Vec<&Value> = tokens.iter().filter(|t| t["is_word"] == true).collect();
            ensure((10..=100).contains(&words.len()), || {
                format!("{id}: {} words", words.len())
            })?;
            let start = p["target_span"]["start"].as_u64().unwrap();
            let tok = tokens
                .iter()
                .find(|t| t["start"].as_u64() == Some(start))
                .ok_or_else(|| format!("{id}: no token at the target span"))?;
            ensure(tok["pos"] != "PROPN", || format!("{id}: proper noun target"))?;
            let target = p["target"].as_str().unwrap().to_lowercase();
            let zipf = *freq
                .get(&target)
                .ok_or_else(|| format!("{id}: {target} not in vocabulary"))?;
            let mut rarer = HashSet::new();
            for w in &words {
                let s = w["surface"].as_str().unwrap().to_lowercase();
                if w["pos"] != "PROPN" && freq.get(&s).is_some_and(|&z| z < zipf) {
                    rarer.insert(s);
                }
            }
            ensure(rarer.len() <= 4, || {
                format!("{id}: {} rarer candidates than {target}", rarer.len())
            })?;
            checked += 1;
        }
    }
    ensure(outputs[0] == outputs[1], || "two runs differ".into())?;
    Ok(format!("{checked} pairs, byte-identical rerun"))
}

// -------------------------------------------------------- top-k filtering

fn confidence_filter() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for case in 0..500 {
        let n = rng.random_range(0..80);
        let items: Vec<(usize, f64)> = (0..n).map(|i| (i, -(rng.random_range(0..30) as f64) / 3.0)).collect();
        let k = rng.random_range(0..=n + 5);
        let (kept, dropped) = filter_top_confidence(&items, k, |x| x.1);
        ensure(kept.len() == k.min(n), || {
            format!("case {case}: kept {} of k={k}", kept.len())
        })?;
        let min_kept = kept.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let max_dropped = dropped.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        ensure(kept.is_empty() || dropped.is_empty() || min_kept >= max_dropped, || {
            format!("case {case}: {min_kept} < {max_dropped}")
        })?;
        let mut union: Vec<usize> = kept.iter().chain(&dropped).map(|x| x.0).collect();
        union.sort_unstable();
        ensure(union == (0..n).collect::<Vec<_>>(), || {
            format!("case {case}: not a partition")
        })?;

        let mut sorted: Vec<f64> = items.iter().map(|x| x.1).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut top: Vec<f64> = kept.iter().map(|x| x.1).collect();
        top.sort_by(|a, b| b.total_cmp(a));
        ensure(top == sorted[..k.min(n)], || {
            format!("case {case}: kept scores differ from a full sort")
        })?;
    }
    Ok("500 cases".into())
}

// ------------------------------------------------------- probability score

fn probability_scores() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for case in 0..500 {
        let n = rng.random_range(1..25);
        let tokens: Vec<TokenLogprob> = (0..n)
            .map(|i| TokenLogprob::new(format!("t{i}"), -rng.random_range(1e-3..12.0)))
            .collect();
        let got = probability_score(&tokens).unwrap();
        let want: f64 = tokens.iter().rev().map(|t| t.logprob).sum();
        ensure((got - want).abs() <= 1e-12, || format!("case {case}: {got} vs {want}"))?;

        let mut longer = tokens.clone();
        longer.push(TokenLogprob::new("x", -rng.random_range(1e-3..12.0)));
        ensure(probability_score(&longer).unwrap() < got, || {
            format!("case {case}: appending did not decrease")
        })?;

        // Through extraction: the score covers tokens up to the newline.
        let stop = rng.random_range(0..n);
        let mut with_stop = tokens.clone();
        with_stop[stop].text = "\n".into();
        let response = CompletionResponse {
            tokens: with_stop.clone(),
            finish_reason: FinishReason::Stop,
            timing: None,
        };
        let p = Prediction::from_response("i", &response, &["\n".to_string()]);
        let want: f64 = with_stop[..=stop].iter().rev().map(|t| t.logprob).sum();
        ensure((p.score - want).abs() <= 1e-12, || {
            format!("case {case}: extracted {} vs {want}", p.score)
        })?;
    }
    ensure(probability_score(&[]).is_none(), || "empty sequence has a score".into())?;
    Ok("500 cases".into())
}

// ----------------------------------------------------------------- golden

fn golden_run() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::run_toy(tmp.path(), None);
    let mismatches = common::golden_mismatches(tmp.path());
    ensure(mismatches.is_empty(), || format!("differs: {}", mismatches.join(", ")))?;
    Ok(format!("{} files", common::GOLDEN_FILES.len()))
}

// ---------------------------------------------------------------- MultiLS

const MULTILS: [(&str, usize); 5] = [("en", 515), ("es", 502), ("ca", 261), ("de", 547), ("ja", 562)];

fn multils() -> Option<Check> {
    let present: Vec<(&str, usize, PathBuf)> = MULTILS
        .iter()
        .filter_map(|&(lang, want)| {
            std::env::var_os(format!("LEXSIMP_MULTILS_{}", lang.to_uppercase())).map(|p| (lang, want, PathBuf::from(p)))
        })
        .collect();
    if present.is_empty() {
        return None;
    }
    let check = || -> Check {
        let mut notes = Vec::new();
        for (lang, want, path) in &present {
            let ingested = dataset::ingest(path, Format::from_path(path), Mode::Lenient, Some(lang))
                .map_err(|e| format!("{lang}: {e}"))?;
            let instances: Vec<LsInstance> = ingested.instances.into_iter().filter(|i| i.language == *lang).collect();
            let (kept, _) = dataset::select_simplifiable(&instances);
            ensure(kept.len() == *want, || {
                format!("{lang}: kept {} of {}, expected {want}", kept.len(), instances.len())
            })?;
            let split = dataset::split_dev_test(&kept, 90, 0).map_err(|e| e.to_string())?;
            let contexts: HashSet<&str> = split.dev.iter().map(|i| i.context.as_str()).collect();
            ensure(split.dev.len() == 90 && contexts.len() == 30, || {
                format!(
                    "{lang}: dev has {} instances over {} contexts",
                    split.dev.len(),
                    contexts.len()
                )
            })?;
            notes.push(format!("{lang}={}", kept.len()));
        }
        Ok(notes.join(" "))
    };
    Some(check())
}

// ------------------------------------------------------------------ runner

fn main() {
    let criteria: Vec<Criterion> = vec![
        (
            "metric semantics on the worked instance",
            Duration::from_secs(1),
            metric_semantics,
        ),
        ("AUC equals pair counting", Duration::from_secs(5), auc_vs_brute_force),
        (
            "B_H equals exhaustive threshold search",
            Duration::from_secs(5),
            b_h_vs_exhaustive_search,
        ),
        (
            "sweep is monotone with open and closed ends",
            Duration::from_secs(5),
            sweep_monotonicity,
        ),
        ("latency estimate and linearity", Duration::from_secs(1), latency),
        (
            "synthesis properties and determinism",
            Duration::from_secs(10),
            synthesis_properties,
        ),
        (
            "confidence filter equals full sort",
            Duration::from_secs(5),
            confidence_filter,
        ),
        (
            "probability score equals summation",
            Duration::from_secs(5),
            probability_scores,
        ),
        ("end-to-end golden run", Duration::from_secs(30), golden_run),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let started = Instant::now();
        let result = check();
        report(name, limit, started.elapsed(), result, &mut failed);
    }
    let name = "MultiLS selection counts and dev split";
    let started = Instant::now();
    match multils() {
        None => println!("SKIP  {name}: set LEXSIMP_MULTILS_EN (and ES, CA, DE, JA) to run"),
        Some(result) => report(name, Duration::from_secs(30), started.elapsed(), result, &mut failed),
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn report(name: &str, limit: Duration, took: Duration, result: Check, failed: &mut usize) {
    let timing = format!("{:.2}s, limit {}s", took.as_secs_f64(), limit.as_secs());
    match result {
        Ok(detail) if took <= limit => println!("PASS  {name}: {detail} ({timing})"),
        Ok(detail) => {
            *failed += 1;
            println!("FAIL  {name}: {detail}, too slow ({timing})");
        }
        Err(why) => {
            *failed += 1;
            println!("FAIL  {name}: {why} ({timing})");
        }
    }
}
