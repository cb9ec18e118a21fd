//! Harm categories and confidence-threshold filtering analysis.
//!
//! Every prediction falls in one of three groups. Beneficial covers exact
//! gold matches (ACC, POT) and manually approved alternatives (GOOD);
//! Unchanged covers outputs identical to the target; Harmful covers
//! alternatives with at least one harm tag (DEGRADED, or GIBBERISH when that
//! tag is present). Items still waiting for a human are PENDING and stay out
//! of every rate.
//!
//! Filtering accepts an alternative when its score is strictly above the
//! threshold; a rejected alternative leaves the text unchanged and so counts
//! as neither beneficial nor harmful. All rates share the denominator
//! `n_total`, the number of categorized items.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::MatchVerdict;

pub const DEFAULT_BUDGET: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HarmTag {
    GrammarError,
    ChangeOfMeaning,
    MoreDifficult,
    Gibberish,
}

impl HarmTag {
    pub const ALL: [HarmTag; 4] = [
        HarmTag::GrammarError,
        HarmTag::ChangeOfMeaning,
        HarmTag::MoreDifficult,
        HarmTag::Gibberish,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HarmTag::GrammarError => "GRAMMAR_ERROR",
            HarmTag::ChangeOfMeaning => "CHANGE_OF_MEANING",
            HarmTag::MoreDifficult => "MORE_DIFFICULT",
            HarmTag::Gibberish => "GIBBERISH",
        }
    }
}

impl fmt::Display for HarmTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown harm tag {0:?}; expected one of GRAMMAR_ERROR, CHANGE_OF_MEANING, MORE_DIFFICULT, GIBBERISH")]
pub struct UnknownTag(pub String);

impl FromStr for HarmTag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HarmTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Acc,
    Pot,
    Good,
    Unchanged,
    Degraded,
    Gibberish,
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Group {
    Beneficial,
    Unchanged,
    Harmful,
}

impl Category {
    /// `None` for PENDING.
    pub fn group(self) -> Option<Group> {
        match self {
            Category::Acc | Category::Pot | Category::Good => Some(Group::Beneficial),
            Category::Unchanged => Some(Group::Unchanged),
            Category::Degraded | Category::Gibberish => Some(Group::Harmful),
            Category::Pending => None,
        }
    }
}

/// Automatic verdicts take precedence; manual tags only decide the
/// remaining items. An empty tag set means the annotator found no issue.
pub fn categorize(verdict: MatchVerdict, tags: Option<&BTreeSet<HarmTag>>) -> Category {
    if verdict.unchanged {
        Category::Unchanged
    } else if verdict.acc {
        Category::Acc
    } else if verdict.pot {
        Category::Pot
    } else {
        match tags {
            None => Category::Pending,
            Some(t) if t.contains(&HarmTag::Gibberish) => Category::Gibberish,
            Some(t) if !t.is_empty() => Category::Degraded,
            Some(_) => Category::Good,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub category: Category,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SafetyError {
    #[error("AUC is undefined: {beneficial} beneficial and {harmful} harmful items")]
    UndefinedAuc { beneficial: usize, harmful: usize },
}

/// P(score_B > score_H) + ½·P(score_B = score_H) over all Beneficial ×
/// Harmful pairs, computed from mid-ranks in O(n log n).
pub fn auc_beneficial_vs_harmful(items: &[ScoredItem]) -> Result<f64, SafetyError> {
    let mut scored: Vec<(f64, bool)> = items
        .iter()
        .filter_map(|it| match it.category.group() {
            Some(Group::Beneficial) => Some((it.score, true)),
            Some(Group::Harmful) => Some((it.score, false)),
            _ => None,
        })
        .collect();
    let n_b = scored.iter().filter(|s| s.1).count();
    let n_h = scored.len() - n_b;
    if n_b == 0 || n_h == 0 {
        return Err(SafetyError::UndefinedAuc {
            beneficial: n_b,
            harmful: n_h,
        });
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of beneficial ranks, ties sharing their mid-rank (1-based).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let b_in_tie = scored[i..=j].iter().filter(|s| s.1).count();
        rank_sum += mid * b_in_tie as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_b * (n_b + 1)) as f64 / 2.0;
    Ok(u / (n_b as f64 * n_h as f64))
}

/// Rates after accepting only items scored strictly above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `null` in JSON stands for −∞ (accept everything).
    #[serde(with = "neg_inf_as_null")]
    pub threshold: f64,
    /// Fraction of categorized items with score ≤ threshold.
    pub percentile: f64,
    pub beneficial_rate: f64,
    pub harmful_rate: f64,
    pub accepted_count: usize,
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

fn categorized(items: &[ScoredItem]) -> impl Iterator<Item = (&ScoredItem, Group)> {
    items.iter().filter_map(|it| it.category.group().map(|g| (it, g)))
}

/// Rates at a single threshold by direct counting.
pub fn rates_at(items: &[ScoredItem], threshold: f64) -> SweepPoint {
    let mut n = 0usize;
    let (mut below, mut b, mut h, mut accepted) = (0usize, 0usize, 0usize, 0usize);
    for (it, group) in categorized(items) {
        n += 1;
        if it.score > threshold {
            accepted += 1;
            match group {
                Group::Beneficial => b += 1,
                Group::Harmful => h += 1,
                Group::Unchanged => {}
            }
        } else {
            below += 1;
        }
    }
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    SweepPoint {
        threshold,
        percentile: rate(below),
        beneficial_rate: rate(b),
        harmful_rate: rate(h),
        accepted_count: accepted,
    }
}

/// Curve over the thresholds −∞ and every distinct categorized score, in
/// ascending order. Both rates are non-increasing along the curve.
pub fn sweep(items: &[ScoredItem]) -> Vec<SweepPoint> {
    let mut scored: Vec<(f64, Group)> = categorized(items).map(|(it, g)| (it.score, g)).collect();
    let n = scored.len();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };

    let (mut b, mut h) = (0usize, 0usize);
    for (_, g) in &scored {
        match g {
            Group::Beneficial => b += 1,
            Group::Harmful => h += 1,
            Group::Unchanged => {}
        }
    }
    let mut curve = Vec::with_capacity(n + 1);
    curve.push(SweepPoint {
        threshold: f64::NEG_INFINITY,
        percentile: 0.0,
        beneficial_rate: rate(b),
        harmful_rate: rate(h),
        accepted_count: n,
    });
    let mut i = 0;
    while i < n {
        let t = scored[i].0;
        // Moving the threshold up to t rejects every item scored exactly t.
        while i < n && scored[i].0 == t {
            match scored[i].1 {
                Group::Beneficial => b -= 1,
                Group::Harmful => h -= 1,
                Group::Unchanged => {}
            }
            i += 1;
        }
        curve.push(SweepPoint {
            threshold: t,
            percentile: rate(i),
            beneficial_rate: rate(b),
            harmful_rate: rate(h),
            accepted_count: n - i,
        });
    }
    curve
}

/// Best beneficial rate whose harmful rate stays within `budget`, and the
/// lowest threshold achieving it.
pub fn best_under_budget(curve: &[SweepPoint], budget: f64) -> Option<&SweepPoint> {
    curve
        .iter()
        .filter(|p| p.harmful_rate <= budget)
        .fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.beneficial_rate >= p.beneficial_rate => Some(b),
            _ => Some(p),
        })
}

pub fn b_at_h_budget(curve: &[SweepPoint], budget: f64) -> f64 {
    best_under_budget(curve, budget).map_or(0.0, |p| p.beneficial_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub count: usize,
    pub mean_score: f64,
}

/// Mean score per tag over items carrying that tag. Tags with no items are
/// left out.
pub fn per_tag_score_stats<'a, I>(items: I) -> BTreeMap<HarmTag, TagStats>
where
    I: IntoIterator<Item = (&'a BTreeSet<HarmTag>, f64)>,
{
    let mut acc: BTreeMap<HarmTag, (usize, f64)> = BTreeMap::new();
    for (tags, score) in items {
        for tag in tags {
            let e = acc.entry(*tag).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += score;
        }
    }
    acc.into_iter()
        .map(|(t, (c, s))| {
            (
                t,
                TagStats {
                    count: c,
                    mean_score: s / c as f64,
                },
            )
        })
        .collect()
}

/// One prediction prepared for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportItem {
    pub item_id: String,
    pub category: Category,
    pub score: f64,
    /// Tags of the annotation used for categorization, if any.
    pub tags: Option<BTreeSet<HarmTag>>,
}

impl ReportItem {
    pub fn scored(&self) -> ScoredItem {
        ScoredItem {
            category: self.category,
            score: self.score,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub acc: usize,
    pub pot: usize,
    pub good: usize,
    pub unchanged: usize,
    pub degraded: usize,
    pub gibberish: usize,
    pub pending: usize,
}

impl CategoryCounts {
    fn add(&mut self, c: Category) {
        match c {
            Category::Acc => self.acc += 1,
            Category::Pot => self.pot += 1,
            Category::Good => self.good += 1,
            Category::Unchanged => self.unchanged += 1,
            Category::Degraded => self.degraded += 1,
            Category::Gibberish => self.gibberish += 1,
            Category::Pending => self.pending += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: f64,
    pub beneficial_rate: f64,
    #[serde(with = "neg_inf_as_null")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    /// All items, including those awaiting annotation.
    pub n_items: usize,
    /// Categorized items: the denominator of every rate.
    pub n_total: usize,
    pub n_pending: usize,
    /// `n_total / n_items`.
    pub coverage: f64,
    pub counts: CategoryCounts,
    pub r_b: f64,
    pub r_h: f64,
    pub r_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub b_at_budget: Vec<BudgetPoint>,
    /// Mean score over all categorized items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_score: Option<f64>,
    pub per_tag: BTreeMap<HarmTag, TagStats>,
    pub sweep: Vec<SweepPoint>,
}

pub fn build_report(items: &[ReportItem], budgets: &[f64]) -> SafetyReport {
    let mut counts = CategoryCounts::default();
    for it in items {
        counts.add(it.category);
    }
    let scored: Vec<ScoredItem> = items.iter().map(ReportItem::scored).collect();
    let n_items = items.len();
    let n_pending = counts.pending;
    let n_total = n_items - n_pending;
    let rate = |c: usize| if n_total == 0 { 0.0 } else { c as f64 / n_total as f64 };
    let curve = sweep(&scored);
    let b_at_budget = budgets
        .iter()
        .map(|&budget| {
            let best = best_under_budget(&curve, budget);
            BudgetPoint {
                budget,
                beneficial_rate: best.map_or(0.0, |p| p.beneficial_rate),
                threshold: best.map_or(f64::NEG_INFINITY, |p| p.threshold),
            }
        })
        .collect();
    let categorized: Vec<&ReportItem> = items.iter().filter(|it| it.category != Category::Pending).collect();
    let mean_score = (!categorized.is_empty())
        .then(|| categorized.iter().map(|it| it.score).sum::<f64>() / categorized.len() as f64);
    let per_tag = per_tag_score_stats(
        categorized
            .iter()
            .filter_map(|it| it.tags.as_ref().map(|t| (t, it.score))),
    );
    SafetyReport {
        n_items,
        n_total,
        n_pending,
        coverage: if n_items == 0 {
            0.0
        } else {
            n_total as f64 / n_items as f64
        },
        r_b: rate(counts.acc + counts.pot + counts.good),
        r_h: rate(counts.degraded + counts.gibberish),
        r_u: rate(counts.unchanged),
        auc: auc_beneficial_vs_harmful(&scored).ok(),
        b_at_budget,
        mean_score,
        per_tag,
        sweep: curve,
        counts,
    }
}

/// `threshold,percentile,beneficial_rate,harmful_rate,accepted_count` rows
/// for external plotting; −∞ is written as `-inf`.
pub fn plot_data_csv(curve: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,percentile,beneficial_rate,harmful_rate,accepted_count\n");
    for p in curve {
        let t = if p.threshold == f64::NEG_INFINITY {
            "-inf".to_string()
        } else {
            p.threshold.to_string()
        };
        out.push_str(&format!(
            "{t},{},{},{},{}\n",
            p.percentile, p.beneficial_rate, p.harmful_rate, p.accepted_count
        ));
    }
    out
}
