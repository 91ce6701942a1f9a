//! Subgroup similarity: summed Jensen-Shannon divergence over per-feature
//! value distributions, and counterfactual neighbors of predicate groups.

use std::borrow::Borrow;
use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DataTable, FeatureSchema};
use crate::metrics::{cmp_undefined_last, MetricRegistry, MetricValue};
use crate::subgroups::{materialize, Constraint, MaterializedGroup, SubgroupSpec};

const NORMALIZATION_SLACK: f64 = 1e-9;

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_SLACK || p.iter().any(|&x| x < 0.0) {
        return Err(Error::NotNormalized(sum));
    }
    Ok(())
}

/// `Σ p log2(p / q)` over the support of `p`.
fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).log2())
        .sum()
}

/// Jensen-Shannon divergence in bits, bounded by `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_bits(p, &m) + 0.5 * kl_bits(q, &m);
    Ok(js.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueChange {
    pub feature: String,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDivergence {
    pub feature: String,
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub source: String,
    pub candidate: String,
    pub distance: f64,
    pub per_feature: Vec<FeatureDivergence>,
    pub most_divergent_feature: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterfactual_delta: Option<Vec<ValueChange>>,
}

/// Constraint differences between two predicate groups, in schema order.
pub fn constraint_delta(
    schema: &FeatureSchema,
    from: &[Constraint],
    to: &[Constraint],
) -> Vec<ValueChange> {
    let value_of = |cs: &[Constraint], fi: usize| {
        cs.iter()
            .find(|c| c.feature == fi)
            .map(|c| schema.features[fi].values[c.value as usize].clone())
    };
    (0..schema.len())
        .filter_map(|fi| {
            let a = value_of(from, fi);
            let b = value_of(to, fi);
            (a != b).then(|| ValueChange {
                feature: schema.features[fi].name.clone(),
                from: a,
                to: b,
            })
        })
        .collect()
}

/// Summed per-feature JS divergence between two non-empty groups.
pub fn subgroup_distance(
    source: &MaterializedGroup,
    candidate: &MaterializedGroup,
    schema: &FeatureSchema,
) -> Result<SimilarityResult> {
    for g in [source, candidate] {
        if g.is_empty() {
            return Err(Error::EmptyGroup(g.id().to_string()));
        }
    }
    let mut per_feature = Vec::with_capacity(schema.len());
    for (fi, feature) in schema.features.iter().enumerate() {
        let p = source.distribution.normalized(fi).expect("non-empty");
        let q = candidate.distribution.normalized(fi).expect("non-empty");
        per_feature.push(FeatureDivergence {
            feature: feature.name.clone(),
            divergence: js_divergence(&p, &q)?,
        });
    }
    let distance = per_feature.iter().map(|d| d.divergence).sum();
    let most_divergent_feature = per_feature
        .iter()
        .min_by(|a, b| {
            b.divergence
                .total_cmp(&a.divergence)
                .then_with(|| a.feature.cmp(&b.feature))
        })
        .map(|d| d.feature.clone())
        .unwrap_or_default();
    let counterfactual_delta = match (source.spec.constraints(), candidate.spec.constraints()) {
        (Some(a), Some(b)) => Some(constraint_delta(schema, a, b)),
        _ => None,
    };
    Ok(SimilarityResult {
        source: source.id().to_string(),
        candidate: candidate.id().to_string(),
        distance,
        per_feature,
        most_divergent_feature,
        counterfactual_delta,
    })
}

#[derive(Debug, Clone)]
pub struct SimilarQuery<'a> {
    pub source: &'a str,
    pub sort_metric: Option<&'a str>,
    pub min_size: u64,
    pub limit: Option<usize>,
}

/// The nearest candidates to `source` by summed JS divergence.
///
/// Candidates below `min_size` or with no members are skipped and the source
/// itself is excluded. The `limit` nearest are kept; when a sort metric is
/// given they are then presented in ascending metric order.
pub fn find_similar<G: Borrow<MaterializedGroup>>(
    query: &SimilarQuery<'_>,
    universe: &[G],
    schema: &FeatureSchema,
    registry: &MetricRegistry,
) -> Result<Vec<SimilarityResult>> {
    if let Some(m) = query.sort_metric {
        registry.check(m)?;
    }
    let source = universe
        .iter()
        .map(Borrow::borrow)
        .find(|g| g.id() == query.source)
        .ok_or_else(|| Error::UnknownGroup(query.source.to_string()))?;
    if source.is_empty() {
        return Err(Error::EmptyGroup(source.id().to_string()));
    }

    let candidates: Vec<&MaterializedGroup> = universe
        .iter()
        .map(Borrow::borrow)
        .filter(|g| g.id() != query.source && !g.is_empty() && g.size() >= query.min_size)
        .collect();
    let mut scored = candidates
        .into_iter()
        .map(|g| subgroup_distance(source, g, schema).map(|r| (g, r)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        a.1.distance
            .total_cmp(&b.1.distance)
            .then_with(|| a.1.candidate.cmp(&b.1.candidate))
    });
    if let Some(limit) = query.limit {
        scored.truncate(limit);
    }
    if let Some(metric) = query.sort_metric {
        scored.sort_by(|a, b| cmp_undefined_last(a.0.metric(metric), b.0.metric(metric)));
    }
    Ok(scored.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualNeighbor {
    pub group: MaterializedGroup,
    pub delta: Vec<ValueChange>,
    pub metric_value: MetricValue,
    /// `|metric(source) - metric(neighbor)|`, undefined if either side is.
    pub metric_delta: MetricValue,
}

impl CounterfactualNeighbor {
    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Every predicate group reachable by changing exactly `radius` of the
/// source's constrained values, ranked by how far `metric` moves.
///
/// Largest `|Δ metric|` first; neighbors whose delta is undefined come last.
/// Ties keep enumeration order (constrained features in schema order,
/// replacement values in vocabulary order).
pub fn counterfactual_neighbors(
    source: &SubgroupSpec,
    radius: usize,
    metric: &str,
    table: &DataTable,
    schema: &FeatureSchema,
    registry: &MetricRegistry,
) -> Result<Vec<CounterfactualNeighbor>> {
    if !(1..=2).contains(&radius) {
        return Err(Error::InvalidRadius(radius));
    }
    registry.check(metric)?;
    let constraints = source
        .constraints()
        .ok_or_else(|| Error::NotPredicate(source.id().to_string()))?;
    let source_value = materialize(source, table, schema, registry).metric(metric);

    let mut neighbors = Vec::new();
    for positions in combinations(constraints.len(), radius) {
        let alternatives: Vec<Vec<u32>> = positions
            .iter()
            .map(|&p| {
                let c = constraints[p];
                (0..schema.features[c.feature].values.len() as u32)
                    .filter(|&v| v != c.value)
                    .collect()
            })
            .collect();
        let mut cursor = vec![0usize; positions.len()];
        let total: usize = alternatives.iter().map(Vec::len).product();
        for _ in 0..total {
            let mut flipped = constraints.to_vec();
            for ((&p, alts), &i) in positions.iter().zip(&alternatives).zip(&cursor) {
                flipped[p].value = alts[i];
            }
            let spec = SubgroupSpec::from_constraints(schema, flipped)?;
            let group = materialize(&spec, table, schema, registry);
            let metric_value = group.metric(metric);
            let metric_delta = match (source_value, metric_value) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            neighbors.push(CounterfactualNeighbor {
                delta: constraint_delta(schema, constraints, spec.constraints().unwrap_or(&[])),
                group,
                metric_value,
                metric_delta,
            });
            for pos in (0..cursor.len()).rev() {
                cursor[pos] += 1;
                if cursor[pos] < alternatives[pos].len() {
                    break;
                }
                cursor[pos] = 0;
            }
        }
    }
    neighbors.sort_by(|a, b| match (a.metric_delta, b.metric_delta) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    Ok(neighbors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Feature;
    use crate::metrics::ACCURACY;

    #[test]
    fn js_basic_values() {
        assert_eq!(js_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let v = js_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 0.311_278_124_459_132_8).abs() < 1e-12, "{v}");
    }

    #[test]
    fn js_rejects_bad_input() {
        assert!(matches!(
            js_divergence(&[1.0], &[0.5, 0.5]),
            Err(Error::SupportMismatch(1, 2))
        ));
        assert!(matches!(
            js_divergence(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(1, 2), Vec::<Vec<usize>>::new());
    }

    fn fixture() -> (FeatureSchema, DataTable) {
        let schema = FeatureSchema::new(
            vec![
                Feature::categorical("race", vec!["A".into(), "B".into()]),
                Feature::categorical("sex", vec!["F".into(), "M".into()]),
            ],
            "l",
            "p",
            "1",
        )
        .unwrap();
        let table = DataTable::new(
            &schema,
            vec![vec![0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0]],
            vec![true, true, false, true, false],
            vec![true, false, false, true, true],
        )
        .unwrap();
        (schema, table)
    }

    #[test]
    fn radius_one_neighbors() {
        let (s, t) = fixture();
        let r = MetricRegistry::standard();
        let source = SubgroupSpec::predicate(&s, &[("sex", "F"), ("race", "B")]).unwrap();
        let n = counterfactual_neighbors(&source, 1, ACCURACY, &t, &s, &r).unwrap();
        let mut names: Vec<_> = n
            .iter()
            .map(|x| x.group.spec.display_name().to_string())
            .collect();
        names.sort();
        assert_eq!(names, vec!["race=A, sex=F", "race=B, sex=M"]);
        assert!(n.iter().all(|x| x.delta.len() == 1));
    }

    #[test]
    fn counterfactual_errors() {
        let (s, t) = fixture();
        let r = MetricRegistry::standard();
        let source = SubgroupSpec::predicate(&s, &[("sex", "F")]).unwrap();
        assert!(matches!(
            counterfactual_neighbors(&source, 3, ACCURACY, &t, &s, &r),
            Err(Error::InvalidRadius(3))
        ));
        let cluster = SubgroupSpec::cluster(vec![0, 1], "Group 1");
        assert!(matches!(
            counterfactual_neighbors(&cluster, 1, ACCURACY, &t, &s, &r),
            Err(Error::NotPredicate(_))
        ));
        assert!(counterfactual_neighbors(&source, 1, "nope", &t, &s, &r).is_err());
        // Radius larger than the constraint count leaves nothing to flip.
        assert!(counterfactual_neighbors(&source, 2, ACCURACY, &t, &s, &r)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn distance_of_predicate_groups() {
        let (s, t) = fixture();
        let r = MetricRegistry::standard();
        let a = materialize(
            &SubgroupSpec::predicate(&s, &[("race", "B"), ("sex", "F")]).unwrap(),
            &t,
            &s,
            &r,
        );
        let b = materialize(
            &SubgroupSpec::predicate(&s, &[("race", "B"), ("sex", "M")]).unwrap(),
            &t,
            &s,
            &r,
        );
        let res = subgroup_distance(&a, &b, &s).unwrap();
        assert_eq!(res.distance, 1.0);
        assert_eq!(res.most_divergent_feature, "sex");
        let delta = res.counterfactual_delta.unwrap();
        assert_eq!(
            delta,
            vec![ValueChange {
                feature: "sex".into(),
                from: Some("F".into()),
                to: Some("M".into())
            }]
        );
        assert_eq!(subgroup_distance(&a, &a, &s).unwrap().distance, 0.0);
    }

    #[test]
    fn similar_excludes_source_and_sorts() {
        let (s, t) = fixture();
        let r = MetricRegistry::standard();
        let a = materialize(
            &SubgroupSpec::predicate(&s, &[("race", "B")]).unwrap(),
            &t,
            &s,
            &r,
        );
        let query = SimilarQuery {
            source: a.id(),
            sort_metric: None,
            min_size: 0,
            limit: None,
        };
        assert!(find_similar(&query, &[&a], &s, &r).unwrap().is_empty());
        let unknown = SimilarQuery {
            source: "zzz",
            ..query.clone()
        };
        assert!(matches!(
            find_similar(&unknown, &[&a], &s, &r),
            Err(Error::UnknownGroup(_))
        ));
    }
}
