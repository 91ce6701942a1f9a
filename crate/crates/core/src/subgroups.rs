//! Subgroup definitions and materialization.
//!
//! A subgroup is either a conjunction of feature = value constraints
//! (predicate group) or an explicit member set produced by clustering
//! (cluster group).

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{DataTable, FeatureSchema};
use crate::metrics::{self, ConfusionCounts, MetricRegistry, MetricSet, MetricValue};

/// Groups smaller than this are hidden by default.
pub const DEFAULT_MIN_SIZE: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub feature: usize,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubgroupKind {
    Predicate,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupDefinition {
    /// Constraints sorted by feature index, at most one per feature.
    Predicate(Vec<Constraint>),
    /// Sorted, deduplicated row indices.
    Cluster(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupSpec {
    id: String,
    display_name: String,
    definition: GroupDefinition,
}

impl SubgroupSpec {
    /// Predicate group from `(feature, value)` names.
    pub fn predicate<S: AsRef<str>>(schema: &FeatureSchema, pairs: &[(S, S)]) -> Result<Self> {
        let constraints = pairs
            .iter()
            .map(|(f, v)| {
                schema
                    .resolve(f.as_ref(), v.as_ref())
                    .map(|(feature, value)| Constraint { feature, value })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_constraints(schema, constraints)
    }

    pub fn from_constraints(
        schema: &FeatureSchema,
        mut constraints: Vec<Constraint>,
    ) -> Result<Self> {
        constraints.sort();
        for c in &constraints {
            let feature = schema
                .features
                .get(c.feature)
                .ok_or_else(|| Error::UnknownFeature(format!("#{}", c.feature)))?;
            if c.value as usize >= feature.values.len() {
                return Err(Error::UnknownValue {
                    feature: feature.name.clone(),
                    value: format!("#{}", c.value),
                });
            }
        }
        if let Some(w) = constraints
            .windows(2)
            .find(|w| w[0].feature == w[1].feature)
        {
            return Err(Error::Config(format!(
                "feature `{}` constrained more than once",
                schema.features[w[0].feature].name
            )));
        }
        let pairs: Vec<String> = constraints
            .iter()
            .map(|c| {
                let f = &schema.features[c.feature];
                format!("{}={}", f.name, f.values[c.value as usize])
            })
            .collect();
        let display_name = if pairs.is_empty() {
            "All instances".to_string()
        } else {
            pairs.join(", ")
        };
        let id = content_id("predicate", pairs.join("\u{1f}").as_bytes());
        Ok(Self {
            id,
            display_name,
            definition: GroupDefinition::Predicate(constraints),
        })
    }

    pub fn cluster(mut members: Vec<u32>, display_name: impl Into<String>) -> Self {
        members.sort_unstable();
        members.dedup();
        let bytes: Vec<u8> = members.iter().flat_map(|m| m.to_le_bytes()).collect();
        Self {
            id: content_id("cluster", &bytes),
            display_name: display_name.into(),
            definition: GroupDefinition::Cluster(members),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn display_name(&self) -> &str {
        &self.display_name
    }

    pub fn definition(&self) -> &GroupDefinition {
        &self.definition
    }

    pub fn kind(&self) -> SubgroupKind {
        match self.definition {
            GroupDefinition::Predicate(_) => SubgroupKind::Predicate,
            GroupDefinition::Cluster(_) => SubgroupKind::Cluster,
        }
    }

    pub fn constraints(&self) -> Option<&[Constraint]> {
        match &self.definition {
            GroupDefinition::Predicate(c) => Some(c),
            GroupDefinition::Cluster(_) => None,
        }
    }

    /// Constraints as `feature name -> value` text.
    pub fn constraint_names(&self, schema: &FeatureSchema) -> Option<BTreeMap<String, String>> {
        self.constraints().map(|cs| {
            cs.iter()
                .map(|c| {
                    let f = &schema.features[c.feature];
                    (f.name.clone(), f.values[c.value as usize].clone())
                })
                .collect()
        })
    }

    pub fn matches(&self, table: &DataTable, row: usize) -> bool {
        match &self.definition {
            GroupDefinition::Predicate(cs) => {
                cs.iter().all(|c| table.code(row, c.feature) == c.value)
            }
            GroupDefinition::Cluster(ids) => ids.binary_search(&(row as u32)).is_ok(),
        }
    }
}

fn content_id(kind: &str, payload: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(kind.as_bytes());
    hasher.update([0u8]);
    hasher.update(payload);
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

/// Per-feature value counts of a group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub size: u64,
    /// `counts[f][v]` = members with value `v` for feature `f`.
    pub counts: Vec<Vec<u64>>,
}

impl FeatureDistribution {
    pub fn compute(members: &[u32], table: &DataTable, schema: &FeatureSchema) -> Self {
        let counts = schema
            .features
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let column = table.column(fi);
                let mut c = vec![0u64; f.values.len()];
                for &row in members {
                    c[column[row as usize] as usize] += 1;
                }
                c
            })
            .collect();
        Self {
            size: members.len() as u64,
            counts,
        }
    }

    /// Normalized distribution `G_{k,f}`; `None` for an empty group.
    pub fn normalized(&self, feature: usize) -> Option<Vec<f64>> {
        if self.size == 0 {
            return None;
        }
        let n = self.size as f64;
        Some(self.counts[feature].iter().map(|&c| c as f64 / n).collect())
    }
}

/// A subgroup with its members and every derived quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedGroup {
    pub spec: SubgroupSpec,
    pub members: Vec<u32>,
    pub confusion: ConfusionCounts,
    pub metrics: MetricSet,
    pub distribution: FeatureDistribution,
    pub label_balance: MetricValue,
}

impl MaterializedGroup {
    pub fn id(&self) -> &str {
        self.spec.id()
    }

    pub fn size(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn metric(&self, id: &str) -> MetricValue {
        self.metrics.get(id)
    }
}

pub fn materialize(
    spec: &SubgroupSpec,
    table: &DataTable,
    schema: &FeatureSchema,
    registry: &MetricRegistry,
) -> MaterializedGroup {
    let members: Vec<u32> = match spec.definition() {
        GroupDefinition::Predicate(_) => (0..table.row_count())
            .filter(|&r| spec.matches(table, r))
            .map(|r| r as u32)
            .collect(),
        GroupDefinition::Cluster(ids) => ids.clone(),
    };
    from_members(spec.clone(), members, table, schema, registry)
}

pub(crate) fn from_members(
    spec: SubgroupSpec,
    members: Vec<u32>,
    table: &DataTable,
    schema: &FeatureSchema,
    registry: &MetricRegistry,
) -> MaterializedGroup {
    let confusion = metrics::confusion(&members, table);
    MaterializedGroup {
        metrics: registry.evaluate(&confusion),
        distribution: FeatureDistribution::compute(&members, table, schema),
        label_balance: metrics::label_balance(&members, table),
        confusion,
        members,
        spec,
    }
}

/// Per-feature value choices for a Cartesian-product request.
pub type Selection = Vec<(String, Vec<String>)>;

/// One predicate group per element of the product of the selected value
/// sets. Features are ordered by schema position; values keep the order they
/// were given in.
pub fn generate_product(
    schema: &FeatureSchema,
    selection: &[(String, Vec<String>)],
) -> Result<Vec<SubgroupSpec>> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut axes: Vec<(usize, Vec<u32>)> = Vec::with_capacity(selection.len());
    let mut seen = HashSet::new();
    for (feature, values) in selection {
        if values.is_empty() {
            return Err(Error::EmptySelection);
        }
        let fi = schema
            .feature_index(feature)
            .ok_or_else(|| Error::UnknownFeature(feature.clone()))?;
        if !seen.insert(fi) {
            return Err(Error::Config(format!("feature `{feature}` selected twice")));
        }
        let mut codes = Vec::with_capacity(values.len());
        for v in values {
            let (_, code) = schema.resolve(feature, v)?;
            if !codes.contains(&code) {
                codes.push(code);
            }
        }
        axes.push((fi, codes));
    }
    axes.sort_by_key(|(fi, _)| *fi);

    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut cursor = vec![0usize; axes.len()];
    for _ in 0..total {
        let constraints = axes
            .iter()
            .zip(&cursor)
            .map(|((fi, codes), &i)| Constraint {
                feature: *fi,
                value: codes[i],
            })
            .collect();
        out.push(SubgroupSpec::from_constraints(schema, constraints)?);
        for pos in (0..axes.len()).rev() {
            cursor[pos] += 1;
            if cursor[pos] < axes[pos].1.len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
    Ok(out)
}

/// Keeps groups with at least `min_size` members, preserving order.
pub fn filter_by_size<G: Borrow<MaterializedGroup>>(groups: Vec<G>, min_size: u64) -> Vec<G> {
    groups
        .into_iter()
        .filter(|g| g.borrow().size() >= min_size)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Feature;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                Feature::categorical("sex", vec!["F".into(), "M".into()]),
                Feature::categorical("race", vec!["A".into(), "B".into(), "C".into()]),
            ],
            "l",
            "p",
            "1",
        )
        .unwrap()
    }

    fn table(schema: &FeatureSchema) -> DataTable {
        DataTable::new(
            schema,
            vec![vec![0, 1, 0, 0, 1], vec![0, 1, 1, 0, 2]],
            vec![true, false, true, false, true],
            vec![true, true, false, false, true],
        )
        .unwrap()
    }

    fn sel(pairs: &[(&str, &[&str])]) -> Selection {
        pairs
            .iter()
            .map(|(f, vs)| (f.to_string(), vs.iter().map(|v| v.to_string()).collect()))
            .collect()
    }

    #[test]
    fn product_of_two_features() {
        let s = schema();
        let groups =
            generate_product(&s, &sel(&[("sex", &["M", "F"]), ("race", &["A", "B"])])).unwrap();
        let names: Vec<_> = groups
            .iter()
            .map(|g| g.display_name().to_string())
            .collect();
        assert_eq!(
            names,
            vec![
                "sex=M, race=A",
                "sex=M, race=B",
                "sex=F, race=A",
                "sex=F, race=B"
            ]
        );
    }

    #[test]
    fn singleton_product() {
        let s = schema();
        let groups = generate_product(&s, &sel(&[("race", &["B"]), ("sex", &["M"])])).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].display_name(), "sex=M, race=B");
    }

    #[test]
    fn product_errors() {
        let s = schema();
        assert!(matches!(
            generate_product(&s, &[]),
            Err(Error::EmptySelection)
        ));
        assert!(matches!(
            generate_product(&s, &sel(&[("sex", &[])])),
            Err(Error::EmptySelection)
        ));
        assert!(matches!(
            generate_product(&s, &sel(&[("age", &["1"])])),
            Err(Error::UnknownFeature(_))
        ));
        assert!(matches!(
            generate_product(&s, &sel(&[("sex", &["X"])])),
            Err(Error::UnknownValue { .. })
        ));
    }

    #[test]
    fn materialize_predicate_and_cluster() {
        let s = schema();
        let t = table(&s);
        let r = MetricRegistry::standard();
        let female = SubgroupSpec::predicate(&s, &[("sex", "F")]).unwrap();
        let g = materialize(&female, &t, &s, &r);
        assert_eq!(g.members, vec![0, 2, 3]);
        assert_eq!(g.size(), 3);
        assert_eq!(g.distribution.counts[0], vec![3, 0]);
        assert_eq!(g.distribution.counts[1], vec![2, 1, 0]);

        let cluster = SubgroupSpec::cluster(vec![2, 0], "Group 1");
        let g = materialize(&cluster, &t, &s, &r);
        assert_eq!(g.members, vec![0, 2]);
        assert_eq!(g.distribution.counts[1], vec![1, 1, 0]);
        assert_eq!(g.confusion, ConfusionCounts::new(1, 0, 0, 1));
    }

    #[test]
    fn empty_group_is_kept_with_undefined_metrics() {
        let s = schema();
        let t = table(&s);
        let r = MetricRegistry::standard();
        let spec = SubgroupSpec::predicate(&s, &[("sex", "F"), ("race", "C")]).unwrap();
        let g = materialize(&spec, &t, &s, &r);
        assert!(g.is_empty());
        assert_eq!(g.confusion, ConfusionCounts::default());
        assert!(g.metrics.0.values().all(Option::is_none));
        assert_eq!(g.label_balance, None);
    }

    #[test]
    fn ids_are_content_hashes() {
        let s = schema();
        let a = SubgroupSpec::predicate(&s, &[("sex", "F"), ("race", "A")]).unwrap();
        let b = SubgroupSpec::predicate(&s, &[("race", "A"), ("sex", "F")]).unwrap();
        assert_eq!(a.id(), b.id());
        let c = SubgroupSpec::cluster(vec![1, 0], "x");
        let d = SubgroupSpec::cluster(vec![0, 1], "y");
        assert_eq!(c.id(), d.id());
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn size_filter() {
        let s = schema();
        let t = table(&s);
        let r = MetricRegistry::standard();
        let groups: Vec<_> = [vec![0u32], vec![0, 1], vec![0, 1, 2]]
            .into_iter()
            .map(|m| materialize(&SubgroupSpec::cluster(m, "g"), &t, &s, &r))
            .collect();
        assert_eq!(filter_by_size(groups.iter().collect(), 0).len(), 3);
        let sizes: Vec<u64> = filter_by_size(groups.iter().collect(), 2)
            .iter()
            .map(|g| g.size())
            .collect();
        assert_eq!(sizes, vec![2, 3]);
    }
}
