//! The export document shared by the HTTP service and the CLI.
//!
//! Layout: `{tool_version, dataset_id, groups: [{id, kind, constraints?,
//! dominant_features?, size, confusion: {tp, tn, fp, fn}, metrics: {..},
//! label_balance}]}`. Undefined metric values serialize as `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::FeatureSchema;
use crate::metrics::{ConfusionCounts, MetricSet, MetricValue};
use crate::subgroups::{MaterializedGroup, SubgroupKind};
use crate::suggest::{DominantFeature, DominantFeatureRanking, CARD_FEATURES};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub tool_version: String,
    pub dataset_id: String,
    pub groups: Vec<ExportGroup>,
}

impl ExportDocument {
    pub fn new<'a>(
        dataset_id: impl Into<String>,
        groups: impl IntoIterator<Item = &'a MaterializedGroup>,
        schema: &FeatureSchema,
    ) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            dataset_id: dataset_id.into(),
            groups: groups
                .into_iter()
                .map(|g| ExportGroup::new(g, schema))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportGroup {
    pub id: String,
    pub kind: SubgroupKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_features: Option<Vec<DominantFeature>>,
    pub size: u64,
    pub confusion: ConfusionCounts,
    pub metrics: MetricSet,
    pub label_balance: MetricValue,
}

impl ExportGroup {
    /// Predicate groups carry their constraints, cluster groups their top
    /// dominant features.
    pub fn new(group: &MaterializedGroup, schema: &FeatureSchema) -> Self {
        let dominant_features = match group.spec.kind() {
            SubgroupKind::Cluster => DominantFeatureRanking::compute(&group.distribution, schema)
                .map(|r| r.top(CARD_FEATURES).to_vec()),
            SubgroupKind::Predicate => None,
        };
        Self {
            id: group.id().to_string(),
            kind: group.spec.kind(),
            constraints: group.spec.constraint_names(schema),
            dominant_features,
            size: group.size(),
            confusion: group.confusion,
            metrics: group.metrics.clone(),
            label_balance: group.label_balance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DataTable, Feature};
    use crate::metrics::MetricRegistry;
    use crate::subgroups::{materialize, SubgroupSpec};

    #[test]
    fn predicate_group_document_shape() {
        let schema = FeatureSchema::new(
            vec![Feature::categorical("sex", vec!["F".into(), "M".into()])],
            "l",
            "p",
            "1",
        )
        .unwrap();
        let table = DataTable::new(
            &schema,
            vec![vec![0, 0, 1]],
            vec![true, false, true],
            vec![true, true, true],
        )
        .unwrap();
        let registry = MetricRegistry::standard();
        let g = materialize(
            &SubgroupSpec::predicate(&schema, &[("sex", "F")]).unwrap(),
            &table,
            &schema,
            &registry,
        );
        let doc = ExportDocument::new("ds", [&g], &schema);
        let json = serde_json::to_value(&doc).unwrap();
        let group = &json["groups"][0];
        assert_eq!(json["dataset_id"], "ds");
        assert_eq!(group["kind"], "predicate");
        assert_eq!(group["constraints"]["sex"], "F");
        assert!(group.get("dominant_features").is_none());
        assert_eq!(group["size"], 2);
        assert_eq!(
            group["confusion"],
            serde_json::json!({"tp": 1, "tn": 0, "fp": 1, "fn": 0})
        );
        assert_eq!(group["metrics"]["accuracy"], 0.5);
        // no actual negatives
        assert!(group["metrics"]["npv"].is_null());
        assert_eq!(group["label_balance"], 0.5);

        let back: ExportDocument = serde_json::from_value(json).unwrap();
        assert_eq!(back, doc);
    }
}
