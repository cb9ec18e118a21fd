//! Automatic LS metrics: ACC@1@top1 and Potential@1.
//!
//! A prediction that is unchanged from the target never counts as a match,
//! even when the target itself appears among the gold alternatives.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::dataset::{GoldProfile, LsInstance};

/// Canonical form used for every word comparison in the crate: NFC, trimmed,
/// lower-cased, internal whitespace collapsed. No stemming.
pub fn normalize(word: &str) -> String {
    let nfc: String = word.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for (i, part) in nfc.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(part.chars().flat_map(char::to_lowercase));
    }
    // Lower-casing can produce decomposed sequences (e.g. U+0130).
    out.nfc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub acc: bool,
    pub pot: bool,
    pub unchanged: bool,
}

/// Judge one alternative against an instance. An empty alternative is
/// treated as unchanged.
pub fn judge(alternative: &str, instance: &LsInstance) -> MatchVerdict {
    let alt = normalize(alternative);
    if alt.is_empty() || alt == normalize(&instance.target) {
        return MatchVerdict {
            acc: false,
            pot: false,
            unchanged: true,
        };
    }
    let profile = GoldProfile::from_gold(&instance.gold);
    MatchVerdict {
        acc: profile.top1.contains(&alt),
        pot: profile.freq.contains_key(&alt),
        unchanged: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub acc_count: usize,
    pub pot_count: usize,
    pub unchanged_count: usize,
    pub acc_rate: f64,
    pub pot_rate: f64,
    pub unchanged_rate: f64,
    pub display: AggregateDisplay,
}

/// Rates rounded to three decimals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateDisplay {
    pub acc: String,
    pub pot: String,
    pub unchanged: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty list of verdicts")]
    Empty,
}

pub fn aggregate(verdicts: &[MatchVerdict]) -> Result<Aggregate, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = verdicts.len();
    let acc_count = verdicts.iter().filter(|v| v.acc).count();
    let pot_count = verdicts.iter().filter(|v| v.pot).count();
    let unchanged_count = verdicts.iter().filter(|v| v.unchanged).count();
    let rate = |c: usize| c as f64 / n as f64;
    let (acc_rate, pot_rate, unchanged_rate) = (rate(acc_count), rate(pot_count), rate(unchanged_count));
    Ok(Aggregate {
        n,
        acc_count,
        pot_count,
        unchanged_count,
        acc_rate,
        pot_rate,
        unchanged_rate,
        display: AggregateDisplay {
            acc: format!("{acc_rate:.3}"),
            pot: format!("{pot_rate:.3}"),
            unchanged: format!("{unchanged_rate:.3}"),
        },
    })
}

/// Per-instance line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceVerdict {
    pub instance_id: String,
    pub target: String,
    pub alternative: String,
    #[serde(flatten)]
    pub verdict: MatchVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub aggregate: Aggregate,
    pub instances: Vec<InstanceVerdict>,
}
