//! A loaded dataset together with its one-hot encoding, metric registry and
//! suggested subgroups.

use std::io::Read;

use crate::error::Result;
use crate::ingest::{self, DataTable, FeatureSchema, IngestConfig, LoadedDataset, OneHotMatrix};
use crate::metrics::{self, ConfusionCounts, MetricRegistry, MetricSet};
use crate::subgroups::{self, FeatureDistribution, MaterializedGroup, SubgroupSpec};
use crate::suggest::{self, ClusterConfig, ClusterModel};

#[derive(Debug, Clone)]
pub struct Suggestions {
    pub config: ClusterConfig,
    pub model: ClusterModel,
    pub groups: Vec<MaterializedGroup>,
}

#[derive(Debug, Clone)]
pub struct Audit {
    pub schema: FeatureSchema,
    pub table: DataTable,
    pub one_hot: OneHotMatrix,
    pub dropped_rows: usize,
    pub registry: MetricRegistry,
    pub suggestions: Suggestions,
}

impl Audit {
    pub fn load<R: Read>(
        source: R,
        ingest: &IngestConfig,
        cluster: &ClusterConfig,
        registry: MetricRegistry,
    ) -> Result<Self> {
        Self::from_dataset(ingest::load_dataset(source, ingest)?, cluster, registry)
    }

    pub fn from_dataset(
        dataset: LoadedDataset,
        cluster: &ClusterConfig,
        registry: MetricRegistry,
    ) -> Result<Self> {
        let one_hot = ingest::one_hot(&dataset.table, &dataset.schema);
        let suggestions = cluster_dataset(
            &dataset.schema,
            &dataset.table,
            &one_hot,
            &registry,
            cluster,
        )?;
        Ok(Self {
            schema: dataset.schema,
            table: dataset.table,
            one_hot,
            dropped_rows: dataset.dropped_rows,
            registry,
            suggestions,
        })
    }

    /// Clusters again with a new configuration; `self` is left untouched.
    pub fn recluster(&self, cluster: &ClusterConfig) -> Result<Suggestions> {
        cluster_dataset(
            &self.schema,
            &self.table,
            &self.one_hot,
            &self.registry,
            cluster,
        )
    }

    pub fn row_count(&self) -> usize {
        self.table.row_count()
    }

    pub fn dataset_counts(&self) -> ConfusionCounts {
        metrics::confusion(&self.table.all_rows(), &self.table)
    }

    /// Micro averages of every registered metric.
    pub fn dataset_averages(&self) -> MetricSet {
        self.registry.evaluate(&self.dataset_counts())
    }

    pub fn dataset_distribution(&self) -> FeatureDistribution {
        FeatureDistribution::compute(&self.table.all_rows(), &self.table, &self.schema)
    }

    pub fn materialize(&self, spec: &SubgroupSpec) -> MaterializedGroup {
        subgroups::materialize(spec, &self.table, &self.schema, &self.registry)
    }
}

fn cluster_dataset(
    schema: &FeatureSchema,
    table: &DataTable,
    one_hot: &OneHotMatrix,
    registry: &MetricRegistry,
    config: &ClusterConfig,
) -> Result<Suggestions> {
    let model = suggest::kmeans(one_hot, config)?;
    let groups = suggest::clusters_to_subgroups(&model, table, schema, registry);
    Ok(Suggestions {
        config: *config,
        model,
        groups,
    })
}
