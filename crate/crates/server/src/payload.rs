//! Response bodies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use slicewise_core::similar::{FeatureDivergence, ValueChange};
use slicewise_core::suggest::{DominantFeature, CARD_FEATURES};
use slicewise_core::{
    Audit, ConfusionCounts, CounterfactualNeighbor, DominantFeatureRanking, FeatureSchema,
    MaterializedGroup, MetricSet, MetricValue, SortOrder, SubgroupKind, Suggestions,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub values: Vec<String>,
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
}

pub fn feature_summaries(audit: &Audit) -> Vec<FeatureSummary> {
    let dist = audit.dataset_distribution();
    audit
        .schema
        .features
        .iter()
        .zip(dist.counts)
        .map(|(f, counts)| FeatureSummary {
            name: f.name.clone(),
            values: f.values.clone(),
            counts,
            thresholds: f.bins.as_ref().map(|b| b.thresholds.clone()),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inertia: f64,
    pub sizes: Vec<u64>,
}

impl ClusterSummary {
    pub fn new(s: &Suggestions) -> Self {
        Self {
            k: s.config.k,
            seed: s.config.seed,
            max_iterations: s.config.max_iterations,
            tolerance: s.config.tolerance,
            iterations: s.model.iterations,
            converged: s.model.converged,
            inertia: s.model.inertia,
            sizes: s.groups.iter().map(|g| g.size()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub row_count: usize,
    pub dropped_rows: usize,
    pub label_column: String,
    pub prediction_column: String,
    pub positive_label: String,
    pub features: Vec<FeatureSummary>,
    pub dataset_confusion: ConfusionCounts,
    pub dataset_averages: MetricSet,
    pub cluster: ClusterSummary,
}

impl DatasetSummary {
    pub fn new(id: &str, audit: &Audit) -> Self {
        Self {
            dataset_id: id.to_string(),
            row_count: audit.row_count(),
            dropped_rows: audit.dropped_rows,
            label_column: audit.schema.label_column.clone(),
            prediction_column: audit.schema.prediction_column.clone(),
            positive_label: audit.schema.positive_label.clone(),
            features: feature_summaries(audit),
            dataset_confusion: audit.dataset_counts(),
            dataset_averages: audit.dataset_averages(),
            cluster: ClusterSummary::new(&audit.suggestions),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSummary {
    pub id: String,
    pub name: String,
    pub kind: SubgroupKind,
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<BTreeMap<String, String>>,
    pub metrics: MetricSet,
    pub label_balance: MetricValue,
}

impl GroupSummary {
    pub fn new(g: &MaterializedGroup, schema: &FeatureSchema, metrics: &[String]) -> Self {
        Self {
            id: g.id().to_string(),
            name: g.spec.display_name().to_string(),
            kind: g.spec.kind(),
            size: g.size(),
            constraints: g.spec.constraint_names(schema),
            metrics: g.metrics.select(metrics),
            label_balance: g.label_balance,
        }
    }
}

fn dominant(g: &MaterializedGroup, schema: &FeatureSchema, n: usize) -> Vec<DominantFeature> {
    DominantFeatureRanking::compute(&g.distribution, schema)
        .map(|r| r.top(n).to_vec())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestionCard {
    #[serde(flatten)]
    pub group: GroupSummary,
    pub dominant_features: Vec<DominantFeature>,
}

impl SuggestionCard {
    pub fn new(g: &MaterializedGroup, schema: &FeatureSchema, metrics: &[String]) -> Self {
        Self {
            group: GroupSummary::new(g, schema, metrics),
            dominant_features: dominant(g, schema, CARD_FEATURES),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestedResponse {
    pub sort: String,
    pub order: SortOrder,
    pub min_size: u64,
    pub groups: Vec<SuggestionCard>,
    pub dataset_averages: MetricSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupsResponse {
    pub groups: Vec<GroupSummary>,
    pub dataset_averages: MetricSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCounts {
    pub feature: String,
    pub counts: Vec<u64>,
}

/// Everything the detail view shows for one group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDetail {
    #[serde(flatten)]
    pub group: GroupSummary,
    pub confusion: ConfusionCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_features: Option<Vec<DominantFeature>>,
    pub distributions: Vec<FeatureCounts>,
}

impl GroupDetail {
    pub fn new(g: &MaterializedGroup, schema: &FeatureSchema, metrics: &[String]) -> Self {
        let dominant_features = match g.spec.kind() {
            SubgroupKind::Cluster => Some(dominant(g, schema, CARD_FEATURES)),
            SubgroupKind::Predicate => None,
        };
        Self {
            group: GroupSummary::new(g, schema, metrics),
            confusion: g.confusion,
            dominant_features,
            distributions: schema
                .features
                .iter()
                .zip(&g.distribution.counts)
                .map(|(f, c)| FeatureCounts {
                    feature: f.name.clone(),
                    counts: c.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetailResponse {
    pub pinned: Option<GroupDetail>,
    pub hovered: Option<GroupDetail>,
    pub dataset_averages: MetricSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarEntry {
    pub group: GroupSummary,
    pub distance: f64,
    pub per_feature: Vec<FeatureDivergence>,
    pub most_divergent_feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual_delta: Option<Vec<ValueChange>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualEntry {
    pub group: GroupSummary,
    pub delta: Vec<ValueChange>,
    pub metric_value: MetricValue,
    pub metric_delta: MetricValue,
    pub empty: bool,
}

impl CounterfactualEntry {
    pub fn new(n: &CounterfactualNeighbor, schema: &FeatureSchema, metrics: &[String]) -> Self {
        Self {
            group: GroupSummary::new(&n.group, schema, metrics),
            delta: n.delta.clone(),
            metric_value: n.metric_value,
            metric_delta: n.metric_delta,
            empty: n.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarResponse {
    pub source: GroupSummary,
    pub similar: Vec<SimilarEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactuals: Option<Counterfactuals>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterfactuals {
    pub metric: String,
    pub radius: usize,
    pub neighbors: Vec<CounterfactualEntry>,
}
