//! `key = value` config files merged with command-line overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use slicewise_core::{ClusterConfig, IngestConfig};

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// File of `key = value` lines; flags below override it.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub prediction_column: Option<String>,
    #[arg(long)]
    pub positive_label: Option<String>,
    #[arg(long)]
    pub max_categorical_cardinality: Option<usize>,
    #[arg(long)]
    pub numeric_bins: Option<usize>,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Comma-separated feature columns (default: all but label and prediction).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Comma-separated cell values treated as missing.
    #[arg(long, value_delimiter = ',')]
    pub missing_values: Option<Vec<String>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Default)]
struct FileConfig {
    pairs: Vec<(String, String, usize)>,
}

const KEYS: [&str; 12] = [
    "label_column",
    "prediction_column",
    "positive_label",
    "max_categorical_cardinality",
    "numeric_bins",
    "delimiter",
    "features",
    "missing_values",
    "k",
    "seed",
    "max_iterations",
    "tolerance",
];

fn read_file(path: &Path) -> Result<FileConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!(
                "{}:{}: unknown key `{key}` (valid keys: {})",
                path.display(),
                i + 1,
                KEYS.join(", ")
            );
        }
        pairs.push((key, value.trim().to_string(), i + 1));
    }
    Ok(FileConfig { pairs })
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl DataArgs {
    /// Ingest and clustering settings: defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<(IngestConfig, ClusterConfig)> {
        let mut ingest = IngestConfig::new("", "", "");
        let mut cluster = ClusterConfig::default();
        if let Some(path) = &self.config {
            for (key, value, line) in read_file(path)?.pairs {
                let at = || format!("{}:{line}: bad value for `{key}`", path.display());
                match key.as_str() {
                    "label_column" => ingest.label_column = value,
                    "prediction_column" => ingest.prediction_column = value,
                    "positive_label" => ingest.positive_label = value,
                    "max_categorical_cardinality" => {
                        ingest.max_categorical_cardinality = value.parse().with_context(at)?
                    }
                    "numeric_bins" => ingest.numeric_bins = value.parse().with_context(at)?,
                    "delimiter" => {
                        ingest.delimiter = match value.as_str() {
                            "\\t" | "tab" => '\t',
                            v => v.parse().with_context(at)?,
                        }
                    }
                    "features" => ingest.feature_columns = Some(list(&value)),
                    "missing_values" => ingest.missing_values = list(&value),
                    "k" => cluster.k = value.parse().with_context(at)?,
                    "seed" => cluster.seed = value.parse().with_context(at)?,
                    "max_iterations" => cluster.max_iterations = value.parse().with_context(at)?,
                    "tolerance" => cluster.tolerance = value.parse().with_context(at)?,
                    _ => unreachable!(),
                }
            }
        }
        if let Some(v) = &self.label_column {
            ingest.label_column = v.clone();
        }
        if let Some(v) = &self.prediction_column {
            ingest.prediction_column = v.clone();
        }
        if let Some(v) = &self.positive_label {
            ingest.positive_label = v.clone();
        }
        if let Some(v) = self.max_categorical_cardinality {
            ingest.max_categorical_cardinality = v;
        }
        if let Some(v) = self.numeric_bins {
            ingest.numeric_bins = v;
        }
        if let Some(v) = self.delimiter {
            ingest.delimiter = v;
        }
        if let Some(v) = &self.features {
            ingest.feature_columns = Some(v.clone());
        }
        if let Some(v) = &self.missing_values {
            ingest.missing_values = v.clone();
        }
        if let Some(v) = self.k {
            cluster.k = v;
        }
        if let Some(v) = self.seed {
            cluster.seed = v;
        }
        if let Some(v) = self.max_iterations {
            cluster.max_iterations = v;
        }
        if let Some(v) = self.tolerance {
            cluster.tolerance = v;
        }
        ingest.validate()?;
        cluster.validate()?;
        Ok((ingest, cluster))
    }
}
