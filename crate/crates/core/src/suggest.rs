//! Suggested subgroups: K-means over the one-hot matrix, entropy-ranked
//! cluster descriptions, and metric ordering of the resulting groups.

use std::borrow::Borrow;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DataTable, FeatureSchema, OneHotMatrix};
use crate::metrics::{cmp_undefined_last, MetricRegistry};
use crate::subgroups::{self, FeatureDistribution, MaterializedGroup, SubgroupSpec};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 0;
/// Dominant features shown on a suggestion card.
pub const CARD_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            seed: DEFAULT_SEED,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config("tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each row to its assigned centroid.
    pub inertia: f64,
    /// Inertia after every assignment step, seeding included.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.k()];
        for (row, &c) in self.assignments.iter().enumerate() {
            out[c].push(row as u32);
        }
        out
    }
}

struct Centroid {
    coords: Vec<f64>,
    norm2: f64,
}

impl Centroid {
    fn new(coords: Vec<f64>) -> Self {
        let norm2 = coords.iter().map(|x| x * x).sum();
        Self { coords, norm2 }
    }

    /// Squared distance to a one-hot row given by its active columns:
    /// |x|^2 - 2 x.c + |c|^2 with |x|^2 = number of features.
    fn dist2(&self, active: &[u32]) -> f64 {
        let dot: f64 = active.iter().map(|&i| self.coords[i as usize]).sum();
        (active.len() as f64 - 2.0 * dot + self.norm2).max(0.0)
    }
}

fn nearest(centroids: &[Centroid], active: &[u32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = c.dist2(active);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(matrix: &OneHotMatrix, centroids: &[Centroid]) -> (Vec<usize>, f64) {
    let nearest: Vec<(usize, f64)> = (0..matrix.row_count())
        .into_par_iter()
        .map(|r| nearest(centroids, matrix.active(r)))
        .collect();
    let inertia = nearest.iter().map(|(_, d)| d).sum();
    (nearest.into_iter().map(|(j, _)| j).collect(), inertia)
}

/// Rows sorted by their one-hot content, so seeding does not depend on the
/// order rows arrived in.
fn canonical_order(matrix: &OneHotMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matrix.row_count()).collect();
    order.sort_by(|&a, &b| matrix.active(a).cmp(matrix.active(b)));
    order
}

fn kmeans_plus_plus(matrix: &OneHotMatrix, k: usize, seed: u64) -> Vec<Centroid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = canonical_order(matrix);
    let n = order.len();
    let mut centroids = Vec::with_capacity(k);

    let first = order[rng.random_range(0..n)];
    centroids.push(Centroid::new(matrix.dense_row(first)));
    let mut d2: Vec<f64> = (0..n)
        .map(|r| centroids[0].dist2(matrix.active(r)))
        .collect();

    while centroids.len() < k {
        let total: f64 = order.iter().map(|&r| d2[r]).sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for &r in &order {
            if d2[r] <= 0.0 {
                continue;
            }
            acc += d2[r];
            chosen = Some(r);
            if acc > target {
                break;
            }
        }
        let chosen = chosen.expect("at least k distinct rows");
        let c = Centroid::new(matrix.dense_row(chosen));
        for (r, d) in d2.iter_mut().enumerate() {
            *d = d.min(c.dist2(matrix.active(r)));
        }
        centroids.push(c);
    }
    centroids
}

/// Means of the assigned rows. A cluster left empty is moved onto the row
/// farthest from its own cluster's new mean.
fn update(matrix: &OneHotMatrix, assignments: &[usize], k: usize) -> Vec<Centroid> {
    let dim = matrix.dim();
    let mut counts = vec![0u64; k];
    let mut sums = vec![vec![0u64; dim]; k];
    for (r, &j) in assignments.iter().enumerate() {
        counts[j] += 1;
        for &i in matrix.active(r) {
            sums[j][i as usize] += 1;
        }
    }
    let mut centroids: Vec<Option<Centroid>> = counts
        .iter()
        .zip(&sums)
        .map(|(&n, s)| {
            (n > 0).then(|| Centroid::new(s.iter().map(|&x| x as f64 / n as f64).collect()))
        })
        .collect();

    if centroids.iter().any(Option::is_none) {
        let mut far: Vec<(f64, usize)> = assignments
            .iter()
            .enumerate()
            .filter_map(|(r, &j)| {
                centroids[j]
                    .as_ref()
                    .map(|c| (c.dist2(matrix.active(r)), r))
            })
            .collect();
        // Farthest first; ties broken by row content so the choice does not
        // depend on row order.
        far.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| matrix.active(a.1).cmp(matrix.active(b.1)))
        });
        let mut taken = HashSet::new();
        let mut candidates = far.into_iter();
        for slot in centroids.iter_mut().filter(|c| c.is_none()) {
            let row = loop {
                match candidates.next() {
                    Some((_, r)) if taken.insert(matrix.active(r).to_vec()) => break r,
                    Some(_) => continue,
                    None => break 0,
                }
            };
            *slot = Some(Centroid::new(matrix.dense_row(row)));
        }
    }
    centroids.into_iter().map(|c| c.expect("filled")).collect()
}

fn max_shift(old: &[Centroid], new: &[Centroid]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| {
            a.coords
                .iter()
                .zip(&b.coords)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Lloyd's algorithm from K-means++ seeds on squared Euclidean distance.
///
/// Stops when assignments stop changing, when no centroid moves by
/// `tolerance` or more, or after `max_iterations` updates.
pub fn kmeans(matrix: &OneHotMatrix, config: &ClusterConfig) -> Result<ClusterModel> {
    config.validate()?;
    let n = matrix.row_count();
    if n == 0 {
        return Err(Error::Cluster("cannot cluster an empty matrix".into()));
    }
    if config.k > n {
        return Err(Error::Cluster(format!(
            "k = {} exceeds the {n} available rows",
            config.k
        )));
    }
    let distinct: HashSet<&[u32]> = (0..n).map(|r| matrix.active(r)).collect();
    if distinct.len() < config.k {
        return Err(Error::Cluster(format!(
            "k = {} exceeds the {} distinct rows",
            config.k,
            distinct.len()
        )));
    }

    let mut centroids = kmeans_plus_plus(matrix, config.k, config.seed);
    let (mut assignments, mut inertia) = assign(matrix, &centroids);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let next = update(matrix, &assignments, config.k);
        let shift = max_shift(&centroids, &next);
        centroids = next;
        let (next_assignments, next_inertia) = assign(matrix, &centroids);
        let changed = next_assignments != assignments;
        assignments = next_assignments;
        inertia = next_inertia;
        trace.push(inertia);

        let mut occupied = vec![false; config.k];
        for &j in &assignments {
            occupied[j] = true;
        }
        if occupied.iter().all(|&o| o) && (!changed || shift < config.tolerance) {
            converged = true;
            break;
        }
    }

    Ok(ClusterModel {
        centroids: centroids.into_iter().map(|c| c.coords).collect(),
        assignments,
        inertia,
        inertia_trace: trace,
        iterations,
        converged,
    })
}

/// One cluster-kind group per cluster, named `Group 1..k`.
pub fn clusters_to_subgroups(
    model: &ClusterModel,
    table: &DataTable,
    schema: &FeatureSchema,
    registry: &MetricRegistry,
) -> Vec<MaterializedGroup> {
    model
        .members()
        .into_par_iter()
        .enumerate()
        .map(|(j, members)| {
            let spec = SubgroupSpec::cluster(members.clone(), format!("Group {}", j + 1));
            subgroups::from_members(spec, members, table, schema, registry)
        })
        .collect()
}

/// Shannon entropy in bits of a count vector; `None` when all counts are 0.
pub fn entropy_bits(counts: &[u64]) -> Option<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // Normalizes -0.0 from a point mass.
    Some(h + 0.0)
}

/// Entropy of `feature`'s value distribution inside a group.
pub fn feature_entropy(distribution: &FeatureDistribution, feature: usize) -> Option<f64> {
    if distribution.size == 0 {
        return None;
    }
    entropy_bits(&distribution.counts[feature])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantFeature {
    pub feature: String,
    pub entropy: f64,
    pub value: String,
    pub fraction: f64,
}

/// Features of a group ordered from most to least concentrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DominantFeatureRanking(pub Vec<DominantFeature>);

impl DominantFeatureRanking {
    /// Ascending entropy; equal entropies keep schema order. The dominant
    /// value is the most frequent one, lowest vocabulary index on ties.
    pub fn compute(distribution: &FeatureDistribution, schema: &FeatureSchema) -> Option<Self> {
        if distribution.size == 0 {
            return None;
        }
        let n = distribution.size as f64;
        let mut ranked: Vec<DominantFeature> = schema
            .features
            .iter()
            .zip(&distribution.counts)
            .map(|(f, counts)| {
                let (best, &count) = counts
                    .iter()
                    .enumerate()
                    .rev()
                    .max_by_key(|(_, &c)| c)
                    .expect("non-empty vocabulary");
                DominantFeature {
                    feature: f.name.clone(),
                    entropy: entropy_bits(counts).expect("non-empty group"),
                    value: f.values[best].clone(),
                    fraction: count as f64 / n,
                }
            })
            .collect();
        ranked.sort_by(|a, b| a.entropy.total_cmp(&b.entropy));
        Some(Self(ranked))
    }

    pub fn top(&self, n: usize) -> &[DominantFeature] {
        &self.0[..n.min(self.0.len())]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    #[default]
    Ascending,
    Descending,
}

/// Size-filtered groups in ascending order of `sort_metric`, undefined
/// values last. Equal values keep their input order.
pub fn rank_suggestions<G: Borrow<MaterializedGroup>>(
    groups: Vec<G>,
    sort_metric: &str,
    min_size: u64,
    registry: &MetricRegistry,
) -> Result<Vec<G>> {
    rank_suggestions_ordered(
        groups,
        sort_metric,
        SortOrder::Ascending,
        min_size,
        registry,
    )
}

/// As [`rank_suggestions`], with the direction of defined values chosen by
/// `order`. Undefined values stay last either way.
pub fn rank_suggestions_ordered<G: Borrow<MaterializedGroup>>(
    groups: Vec<G>,
    sort_metric: &str,
    order: SortOrder,
    min_size: u64,
    registry: &MetricRegistry,
) -> Result<Vec<G>> {
    registry.check(sort_metric)?;
    let mut kept = subgroups::filter_by_size(groups, min_size);
    kept.sort_by(|a, b| {
        let (x, y) = (
            a.borrow().metric(sort_metric),
            b.borrow().metric(sort_metric),
        );
        match (order, x, y) {
            (SortOrder::Descending, Some(x), Some(y)) => y.total_cmp(&x),
            _ => cmp_undefined_last(x, y),
        }
    });
    Ok(kept)
}
