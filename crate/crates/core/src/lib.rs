//! Intersectional performance auditing for binary classifiers.
//!
//! Load a table of features, ground-truth labels and model predictions
//! ([`ingest`]), carve it into subgroups ([`subgroups`]), score each group on
//! confusion-matrix metrics ([`metrics`]), let K-means propose groups worth a
//! look ([`suggest`]), and compare groups by feature-distribution divergence
//! or by counterfactual value flips ([`similar`]).

pub mod audit;
pub mod error;
pub mod export;
pub mod ingest;
pub mod metrics;
pub mod similar;
pub mod subgroups;
pub mod suggest;

pub use audit::{Audit, Suggestions};
pub use error::{Error, Result};
pub use export::{ExportDocument, ExportGroup};
pub use ingest::{
    load_dataset, one_hot, DataTable, Feature, FeatureSchema, IngestConfig, LoadedDataset,
    OneHotMatrix,
};
pub use metrics::{ConfusionCounts, MetricRegistry, MetricSet, MetricValue};
pub use similar::{
    counterfactual_neighbors, find_similar, js_divergence, subgroup_distance,
    CounterfactualNeighbor, SimilarQuery, SimilarityResult,
};
pub use subgroups::{
    filter_by_size, generate_product, materialize, FeatureDistribution, MaterializedGroup,
    SubgroupKind, SubgroupSpec,
};
pub use suggest::{
    clusters_to_subgroups, feature_entropy, kmeans, rank_suggestions, rank_suggestions_ordered,
    ClusterConfig, ClusterModel, DominantFeatureRanking, SortOrder,
};
