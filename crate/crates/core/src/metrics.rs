//! Confusion counts and the metric registry.
//!
//! Every metric is a ratio of confusion counts. A zero denominator yields
//! `None` (undefined), never a fabricated 0.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DataTable;

/// A metric value; `None` marks a zero denominator.
pub type MetricValue = Option<f64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn record(&mut self, label: bool, prediction: bool) {
        match (label, prediction) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            tp: self.tp + rhs.tp,
            tn: self.tn + rhs.tn,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Tallies outcomes over `members` (row indices into `table`).
pub fn confusion(members: &[u32], table: &DataTable) -> ConfusionCounts {
    let labels = table.labels();
    let predictions = table.predictions();
    let mut counts = ConfusionCounts::default();
    for &row in members {
        counts.record(labels[row as usize], predictions[row as usize]);
    }
    counts
}

/// Fraction of ground-truth positives among `members`.
pub fn label_balance(members: &[u32], table: &DataTable) -> MetricValue {
    let labels = table.labels();
    let positives = members.iter().filter(|&&r| labels[r as usize]).count() as u64;
    ratio(positives, members.len() as u64)
}

/// `num / den`, undefined when `den` is zero.
pub fn ratio(num: u64, den: u64) -> MetricValue {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Orders metric values ascending with undefined values after every defined
/// one.
pub fn cmp_undefined_last(a: MetricValue, b: MetricValue) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

pub type MetricFormula = Arc<dyn Fn(&ConfusionCounts) -> MetricValue + Send + Sync>;

pub const ACCURACY: &str = "accuracy";
pub const RECALL: &str = "recall";
pub const SPECIFICITY: &str = "specificity";
pub const PRECISION: &str = "precision";
pub const NPV: &str = "npv";
pub const FNR: &str = "fnr";
pub const FPR: &str = "fpr";
pub const FDR: &str = "fdr";
pub const FOMR: &str = "fomr";
pub const F1: &str = "f1";

pub const STANDARD_METRICS: [&str; 10] = [
    ACCURACY,
    RECALL,
    SPECIFICITY,
    PRECISION,
    NPV,
    FNR,
    FPR,
    FDR,
    FOMR,
    F1,
];

pub fn accuracy(c: &ConfusionCounts) -> MetricValue {
    ratio(c.tp + c.tn, c.total())
}

pub fn recall(c: &ConfusionCounts) -> MetricValue {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn specificity(c: &ConfusionCounts) -> MetricValue {
    ratio(c.tn, c.tn + c.fp)
}

pub fn precision(c: &ConfusionCounts) -> MetricValue {
    ratio(c.tp, c.tp + c.fp)
}

pub fn npv(c: &ConfusionCounts) -> MetricValue {
    ratio(c.tn, c.tn + c.fn_)
}

pub fn fnr(c: &ConfusionCounts) -> MetricValue {
    ratio(c.fn_, c.fn_ + c.tp)
}

pub fn fpr(c: &ConfusionCounts) -> MetricValue {
    ratio(c.fp, c.fp + c.tn)
}

pub fn fdr(c: &ConfusionCounts) -> MetricValue {
    ratio(c.fp, c.fp + c.tp)
}

pub fn fomr(c: &ConfusionCounts) -> MetricValue {
    ratio(c.fn_, c.fn_ + c.tn)
}

/// Harmonic mean of precision and recall; undefined if either is undefined
/// or both are zero.
pub fn f1(c: &ConfusionCounts) -> MetricValue {
    let p = precision(c)?;
    let r = recall(c)?;
    if p + r == 0.0 {
        None
    } else {
        Some(2.0 * p * r / (p + r))
    }
}

/// Named metric formulas. Lookup is by stable lowercase identifier.
#[derive(Clone)]
pub struct MetricRegistry {
    entries: Vec<(String, MetricFormula)>,
}

impl fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.ids()).finish()
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

type Builtin = fn(&ConfusionCounts) -> MetricValue;

impl MetricRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// The ten built-in metrics.
    pub fn standard() -> Self {
        let builtin: [(&str, Builtin); 10] = [
            (ACCURACY, accuracy),
            (RECALL, recall),
            (SPECIFICITY, specificity),
            (PRECISION, precision),
            (NPV, npv),
            (FNR, fnr),
            (FPR, fpr),
            (FDR, fdr),
            (FOMR, fomr),
            (F1, f1),
        ];
        let mut registry = Self::empty();
        for (id, formula) in builtin {
            registry
                .register(id, formula)
                .expect("built-in identifiers are unique");
        }
        registry
    }

    pub fn register<F>(&mut self, id: impl Into<String>, formula: F) -> Result<()>
    where
        F: Fn(&ConfusionCounts) -> MetricValue + Send + Sync + 'static,
    {
        let id = id.into();
        if self.contains(&id) {
            return Err(Error::DuplicateMetric(id));
        }
        self.entries.push((id, Arc::new(formula)));
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn check(&self, id: &str) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(self.unknown(id))
        }
    }

    fn unknown(&self, id: &str) -> Error {
        Error::UnknownMetric {
            id: id.to_string(),
            known: self.ids().map(str::to_string).collect(),
        }
    }

    pub fn value(&self, counts: &ConfusionCounts, id: &str) -> Result<MetricValue> {
        self.entries
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, f)| f(counts))
            .ok_or_else(|| self.unknown(id))
    }

    pub fn evaluate(&self, counts: &ConfusionCounts) -> MetricSet {
        MetricSet(
            self.entries
                .iter()
                .map(|(k, f)| (k.clone(), f(counts)))
                .collect(),
        )
    }
}

/// Values of every registered metric for one group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricSet(pub BTreeMap<String, MetricValue>);

impl MetricSet {
    /// `None` both for unknown ids and undefined values; use
    /// [`MetricRegistry::check`] first to tell them apart.
    pub fn get(&self, id: &str) -> MetricValue {
        self.0.get(id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Restricts to `ids`, in the given order of keys (map keys are sorted).
    pub fn select(&self, ids: &[String]) -> MetricSet {
        MetricSet(ids.iter().map(|id| (id.clone(), self.get(id))).collect())
    }
}

/// Micro average: the metric over whole-table counts.
pub fn dataset_average(
    table: &DataTable,
    registry: &MetricRegistry,
    metric: &str,
) -> Result<MetricValue> {
    registry.value(&confusion(&table.all_rows(), table), metric)
}
