//! Gold LS data: ingest, simplifiability selection and dev/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::metrics::normalize;
use crate::span::CharSpan;

/// One evaluation unit. `gold` keeps duplicates: each entry is one
/// annotator's suggestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsInstance {
    pub id: String,
    pub language: String,
    pub context: String,
    pub target: String,
    pub target_span: CharSpan,
    pub gold: Vec<String>,
}

impl LsInstance {
    fn check(&self) -> Result<(), String> {
        match self.target_span.slice(&self.context) {
            Some(s) if s == self.target => {}
            Some(s) => {
                return Err(format!(
                    "target span {}..{} covers {s:?}, expected {:?}",
                    self.target_span.start, self.target_span.end, self.target
                ))
            }
            None => {
                return Err(format!(
                    "target span {}..{} is out of bounds",
                    self.target_span.start, self.target_span.end
                ))
            }
        }
        if self.gold.iter().all(|g| g.trim().is_empty()) {
            return Err("gold alternatives are empty".into());
        }
        Ok(())
    }
}

/// Annotator frequency of each normalized gold alternative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldProfile {
    pub freq: BTreeMap<String, usize>,
    /// Every alternative sharing the maximal count.
    pub top1: BTreeSet<String>,
}

impl GoldProfile {
    pub fn from_gold(gold: &[String]) -> Self {
        let mut freq = BTreeMap::new();
        for g in gold {
            let key = normalize(g);
            if key.is_empty() {
                continue;
            }
            *freq.entry(key).or_insert(0usize) += 1;
        }
        let max = freq.values().copied().max().unwrap_or(0);
        let top1 = freq.iter().filter(|(_, &c)| c == max).map(|(k, _)| k.clone()).collect();
        Self { freq, top1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Line-delimited `LsInstance` records.
    Jsonl,
    /// `context<TAB>target<TAB>alt1<TAB>alt2...`, one instance per line.
    Tsv,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => Format::Tsv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{} invalid record(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("TSV input needs a language code")]
    MissingLanguage,
    #[error("dev size {dev_size} exceeds the {available} available instances")]
    DevTooLarge { dev_size: usize, available: usize },
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub instances: Vec<LsInstance>,
    /// Records skipped in lenient mode.
    pub diagnostics: Vec<Diagnostic>,
}

/// Load instances from `path`. In strict mode any invalid record aborts the
/// load; in lenient mode it is skipped and reported.
pub fn ingest(path: &Path, format: Format, mode: Mode, language: Option<&str>) -> Result<Ingested, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Ingested::default();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let parsed = match format {
            Format::Jsonl => serde_json::from_str::<LsInstance>(line).map_err(|e| (None, e.to_string())),
            Format::Tsv => {
                let lang = language.ok_or(DatasetError::MissingLanguage)?;
                parse_tsv_line(line, lang, line_no).map_err(|m| (None, m))
            }
        };
        let result = parsed.and_then(|inst| match inst.check() {
            Ok(()) => Ok(inst),
            Err(m) => Err((Some(inst.id), m)),
        });
        match result {
            Ok(inst) => out.instances.push(inst),
            Err((id, message)) => out.diagnostics.push(Diagnostic {
                line: line_no,
                id,
                message,
            }),
        }
    }
    if mode == Mode::Strict && !out.diagnostics.is_empty() {
        return Err(DatasetError::Invalid(out.diagnostics));
    }
    Ok(out)
}

fn parse_tsv_line(line: &str, language: &str, line_no: usize) -> Result<LsInstance, String> {
    let mut cols = line.split('\t');
    let context = cols.next().unwrap_or_default().trim().to_string();
    let target = cols
        .next()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or("missing target column")?;
    let gold: Vec<String> = cols
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(str::to_string)
        .collect();
    let target_span =
        CharSpan::find(&context, &target).ok_or_else(|| format!("target {target:?} does not occur in context"))?;
    Ok(LsInstance {
        id: format!("{language}-{line_no:04}"),
        language: language.to_string(),
        context,
        target,
        target_span,
        gold,
    })
}

pub fn emit(path: &Path, instances: &[LsInstance]) -> Result<(), IoError> {
    io::write_jsonl_atomic(path, instances)
}

/// Split off instances whose target is among the most suggested gold
/// alternatives. Returns `(kept, removed)`, both in input order.
pub fn select_simplifiable(instances: &[LsInstance]) -> (Vec<LsInstance>, Vec<LsInstance>) {
    instances.iter().cloned().partition(|inst| {
        let profile = GoldProfile::from_gold(&inst.gold);
        !profile.top1.contains(&normalize(&inst.target))
    })
}

#[derive(Debug, Clone)]
pub struct Split {
    pub dev: Vec<LsInstance>,
    pub test: Vec<LsInstance>,
    /// Set when `dev_size` could not be hit exactly with whole context groups.
    pub warning: Option<String>,
}

/// Manifest listing instance ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub dev_size: usize,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn manifest(&self, seed: u64, dev_size: usize) -> SplitManifest {
        SplitManifest {
            seed,
            dev_size,
            dev: self.dev.iter().map(|i| i.id.clone()).collect(),
            test: self.test.iter().map(|i| i.id.clone()).collect(),
        }
    }
}

/// Random dev/test split that never separates instances sharing a context.
///
/// Context groups are visited largest first (ties in seeded random order)
/// and taken whenever the remaining groups can still complete the largest
/// reachable total not exceeding `dev_size`.
pub fn split_dev_test(kept: &[LsInstance], dev_size: usize, seed: u64) -> Result<Split, DatasetError> {
    if dev_size > kept.len() {
        return Err(DatasetError::DevTooLarge {
            dev_size,
            available: kept.len(),
        });
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, inst) in kept.iter().enumerate() {
        let g = *index.entry(inst.context.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|&g| std::cmp::Reverse(groups[g].len()));

    let sizes: Vec<usize> = order.iter().map(|&g| groups[g].len()).collect();
    // reachable[i][s]: some subset of sizes[i..] sums to exactly s.
    let mut reachable = vec![vec![false; dev_size + 1]; sizes.len() + 1];
    reachable[sizes.len()][0] = true;
    for i in (0..sizes.len()).rev() {
        for s in 0..=dev_size {
            reachable[i][s] = reachable[i + 1][s] || (s >= sizes[i] && reachable[i + 1][s - sizes[i]]);
        }
    }
    let total = (0..=dev_size).rev().find(|&s| reachable[0][s]).unwrap_or(0);

    let mut in_dev = vec![false; kept.len()];
    let mut remaining = total;
    for (i, &g) in order.iter().enumerate() {
        if sizes[i] <= remaining && reachable[i + 1][remaining - sizes[i]] {
            remaining -= sizes[i];
            for &m in &groups[g] {
                in_dev[m] = true;
            }
        }
    }
    debug_assert_eq!(remaining, 0);

    let (dev, test): (Vec<_>, Vec<_>) = kept.iter().zip(&in_dev).partition(|(_, &d)| d);
    let warning = (total != dev_size)
        .then(|| format!("dev size {dev_size} is not reachable with whole context groups; using {total}"));
    Ok(Split {
        dev: dev.into_iter().map(|(i, _)| i.clone()).collect(),
        test: test.into_iter().map(|(i, _)| i.clone()).collect(),
        warning,
    })
}
