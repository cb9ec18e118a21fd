//! Run configuration.
//!
//! Settings come from three layers. A TOML file is read first, command-line
//! flags override it, and `LEXSIMP_*` environment variables override both.
//! Relative paths in the file resolve against the file's directory; those
//! from flags and the environment resolve against the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lexsimp_core::corpus::DEFAULT_PAIR_COUNT;
use lexsimp_core::distillation::DEFAULT_KEEP;
use lexsimp_core::gateway::Dialect;
use lexsimp_core::safety::DEFAULT_BUDGET;

use crate::error::CliError;

pub const DEFAULT_DEV_SIZE: usize = 90;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_CONCURRENCY: usize = 4;

/// One layer of optional settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub language: Option<String>,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub backend_url: Option<String>,
    pub dialect: Option<Dialect>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub model: Option<String>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub n_pairs: Option<usize>,
    pub k_keep: Option<usize>,
    pub dev_size: Option<usize>,
    pub budgets: Option<Vec<f64>>,
    pub include_unterminated: Option<bool>,
    pub teacher_id: Option<String>,
    pub lenient: Option<bool>,
}

macro_rules! layer {
    ($top:expr, $bottom:expr, $($field:ident),* $(,)?) => {
        Overrides { $($field: $top.$field.or($bottom.$field),)* }
    };
}

impl Overrides {
    /// `self` wins over `below`.
    pub fn over(self, below: Overrides) -> Overrides {
        layer!(
            self,
            below,
            language,
            seed,
            corpus,
            freq,
            dataset,
            examples,
            output,
            annotations,
            backend_url,
            dialect,
            timeout_secs,
            retries,
            model,
            replay,
            record,
            concurrency,
            n_pairs,
            k_keep,
            dev_size,
            budgets,
            include_unterminated,
            teacher_id,
            lenient,
        )
    }

    /// Read `LEXSIMP_*` variables through `get`.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        fn parsed<T: std::str::FromStr>(name: &str, raw: Option<String>) -> Result<Option<T>, CliError>
        where
            T::Err: std::fmt::Display,
        {
            raw.map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|e| CliError::Validation(format!("{name}={v:?}: {e}")))
            })
            .transpose()
        }
        let var = |name: &str| get(name).filter(|v| !v.is_empty());
        let path = |name: &str| var(name).map(PathBuf::from);
        let budgets = match var("LEXSIMP_BUDGETS") {
            Some(raw) => Some(parse_budgets(&raw)?),
            None => None,
        };
        Ok(Self {
            language: var("LEXSIMP_LANGUAGE"),
            seed: parsed("LEXSIMP_SEED", var("LEXSIMP_SEED"))?,
            corpus: path("LEXSIMP_CORPUS"),
            freq: path("LEXSIMP_FREQ"),
            dataset: path("LEXSIMP_DATASET"),
            examples: path("LEXSIMP_EXAMPLES"),
            output: path("LEXSIMP_OUTPUT"),
            annotations: path("LEXSIMP_ANNOTATIONS"),
            backend_url: var("LEXSIMP_BACKEND_URL"),
            dialect: parsed("LEXSIMP_BACKEND_DIALECT", var("LEXSIMP_BACKEND_DIALECT"))?,
            timeout_secs: parsed("LEXSIMP_BACKEND_TIMEOUT", var("LEXSIMP_BACKEND_TIMEOUT"))?,
            retries: parsed("LEXSIMP_BACKEND_RETRIES", var("LEXSIMP_BACKEND_RETRIES"))?,
            model: var("LEXSIMP_BACKEND_MODEL"),
            replay: path("LEXSIMP_REPLAY"),
            record: path("LEXSIMP_RECORD"),
            concurrency: parsed("LEXSIMP_CONCURRENCY", var("LEXSIMP_CONCURRENCY"))?,
            n_pairs: parsed("LEXSIMP_N_PAIRS", var("LEXSIMP_N_PAIRS"))?,
            k_keep: parsed("LEXSIMP_K_KEEP", var("LEXSIMP_K_KEEP"))?,
            dev_size: parsed("LEXSIMP_DEV_SIZE", var("LEXSIMP_DEV_SIZE"))?,
            budgets,
            include_unterminated: parsed("LEXSIMP_INCLUDE_UNTERMINATED", var("LEXSIMP_INCLUDE_UNTERMINATED"))?,
            teacher_id: var("LEXSIMP_TEACHER_ID"),
            lenient: parsed("LEXSIMP_LENIENT", var("LEXSIMP_LENIENT"))?,
        })
    }

    fn rebase(mut self, base: &Path) -> Self {
        for p in [
            &mut self.corpus,
            &mut self.freq,
            &mut self.dataset,
            &mut self.examples,
            &mut self.output,
            &mut self.annotations,
            &mut self.replay,
            &mut self.record,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }
}

pub fn parse_budgets(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|b| {
            let v: f64 = b
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("budget {b:?} is not a number")))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(CliError::Validation(format!("budget {v} is outside [0, 1]")))
            }
        })
        .collect()
}

/// TOML file layout.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub language: Option<String>,
    pub seed: Option<u64>,
    pub lenient: Option<bool>,
    pub paths: FilePaths,
    pub backend: FileBackend,
    pub counts: FileCounts,
    pub safety: FileSafety,
    pub distill: FileDistill,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilePaths {
    pub corpus: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileBackend {
    pub url: Option<String>,
    pub dialect: Option<Dialect>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub model: Option<String>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileCounts {
    pub n_pairs: Option<usize>,
    pub k_keep: Option<usize>,
    pub dev_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileSafety {
    pub budgets: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileDistill {
    pub include_unterminated: Option<bool>,
    pub teacher_id: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Overrides, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let file: FileConfig =
            toml::from_str(&raw).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(file.into_overrides().rebase(base))
    }

    fn into_overrides(self) -> Overrides {
        Overrides {
            language: self.language,
            seed: self.seed,
            corpus: self.paths.corpus,
            freq: self.paths.freq,
            dataset: self.paths.dataset,
            examples: self.paths.examples,
            output: self.paths.output,
            annotations: self.paths.annotations,
            backend_url: self.backend.url,
            dialect: self.backend.dialect,
            timeout_secs: self.backend.timeout_secs,
            retries: self.backend.retries,
            model: self.backend.model,
            replay: self.backend.replay,
            record: self.backend.record,
            concurrency: self.backend.concurrency,
            n_pairs: self.counts.n_pairs,
            k_keep: self.counts.k_keep,
            dev_size: self.counts.dev_size,
            budgets: self.safety.budgets,
            include_unterminated: self.distill.include_unterminated,
            teacher_id: self.distill.teacher_id,
            lenient: self.lenient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendConfig {
    pub url: Option<String>,
    pub dialect: Dialect,
    pub timeout_secs: u64,
    pub retries: u32,
    pub model: Option<String>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub concurrency: usize,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub language: String,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub output: PathBuf,
    pub annotations: PathBuf,
    pub backend: BackendConfig,
    pub n_pairs: usize,
    pub k_keep: usize,
    pub dev_size: usize,
    pub budgets: Vec<f64>,
    pub include_unterminated: bool,
    pub teacher_id: Option<String>,
    pub strict: bool,
}

impl RunConfig {
    /// Merge file, flag and environment layers, lowest priority first.
    pub fn resolve(file: Option<&Path>, flags: Overrides, env: Overrides) -> Result<Self, CliError> {
        let file = match file {
            Some(p) => FileConfig::load(p)?,
            None => Overrides::default(),
        };
        Self::from_overrides(env.over(flags).over(file))
    }

    pub fn from_overrides(o: Overrides) -> Result<Self, CliError> {
        let output = o.output.unwrap_or_else(|| PathBuf::from("out"));
        let language = o.language.unwrap_or_else(|| "en".into());
        if language.trim().is_empty() {
            return Err(CliError::Validation("language must not be empty".into()));
        }
        let concurrency = o.concurrency.unwrap_or(DEFAULT_CONCURRENCY);
        if concurrency == 0 {
            return Err(CliError::Validation("concurrency must be at least 1".into()));
        }
        let budgets = o.budgets.unwrap_or_else(|| vec![DEFAULT_BUDGET]);
        if let Some(b) = budgets.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(CliError::Validation(format!("budget {b} is outside [0, 1]")));
        }
        Ok(Self {
            language,
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            corpus: o.corpus,
            freq: o.freq,
            dataset: o.dataset,
            examples: o.examples,
            annotations: o.annotations.unwrap_or_else(|| output.join("annotations.jsonl")),
            output,
            backend: BackendConfig {
                url: o.backend_url,
                dialect: o.dialect.unwrap_or(Dialect::LlamaCpp),
                timeout_secs: o.timeout_secs.unwrap_or(60),
                retries: o.retries.unwrap_or(2),
                model: o.model,
                replay: o.replay,
                record: o.record,
                concurrency,
            },
            n_pairs: o.n_pairs.unwrap_or(DEFAULT_PAIR_COUNT),
            k_keep: o.k_keep.unwrap_or(DEFAULT_KEEP),
            dev_size: o.dev_size.unwrap_or(DEFAULT_DEV_SIZE),
            budgets,
            include_unterminated: o.include_unterminated.unwrap_or(false),
            teacher_id: o.teacher_id,
            strict: !o.lenient.unwrap_or(false),
        })
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Validation(format!("no {what} path configured")))
    }
}
