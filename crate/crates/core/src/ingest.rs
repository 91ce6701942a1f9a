//! Tabular ingest: delimited text in, an all-categorical schema and an
//! integer-coded columnar table out.
//!
//! Every feature column becomes categorical. Columns that parse as numbers
//! and have more than `max_categorical_cardinality` distinct values are cut
//! into `numeric_bins` quantile intervals; everything else keeps its raw
//! (trimmed) text values. Value vocabularies are sorted lexicographically and
//! a row's code for a feature is the index of its value in that vocabulary.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_CATEGORICAL_CARDINALITY: usize = 20;
pub const DEFAULT_NUMERIC_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub label_column: String,
    pub prediction_column: String,
    pub positive_label: String,
    #[serde(default = "default_cardinality")]
    pub max_categorical_cardinality: usize,
    #[serde(default = "default_bins")]
    pub numeric_bins: usize,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Restrict the feature set to these columns. `None` uses every column
    /// other than the label and prediction columns.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Cell values (after trimming) treated as missing. The empty string is
    /// always missing.
    #[serde(default)]
    pub missing_values: Vec<String>,
}

fn default_cardinality() -> usize {
    DEFAULT_MAX_CATEGORICAL_CARDINALITY
}

fn default_bins() -> usize {
    DEFAULT_NUMERIC_BINS
}

fn default_delimiter() -> char {
    ','
}

impl IngestConfig {
    pub fn new(
        label_column: impl Into<String>,
        prediction_column: impl Into<String>,
        positive_label: impl Into<String>,
    ) -> Self {
        Self {
            label_column: label_column.into(),
            prediction_column: prediction_column.into(),
            positive_label: positive_label.into(),
            max_categorical_cardinality: DEFAULT_MAX_CATEGORICAL_CARDINALITY,
            numeric_bins: DEFAULT_NUMERIC_BINS,
            delimiter: ',',
            feature_columns: None,
            missing_values: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_column.trim().is_empty() {
            return Err(Error::Config("label_column must be set".into()));
        }
        if self.prediction_column.trim().is_empty() {
            return Err(Error::Config("prediction_column must be set".into()));
        }
        if self.label_column == self.prediction_column {
            return Err(Error::Config(
                "label_column and prediction_column must differ".into(),
            ));
        }
        if self.positive_label.trim().is_empty() {
            return Err(Error::Config("positive_label must be set".into()));
        }
        if self.numeric_bins < 1 {
            return Err(Error::Config("numeric_bins must be at least 1".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!(
                "delimiter `{}` is not a single-byte character",
                self.delimiter
            )));
        }
        Ok(())
    }
}

/// Quantile cut points for a binned numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericBins {
    /// Ascending lower bounds of bins 1.., bin 0 covers everything below
    /// `thresholds[0]`.
    pub thresholds: Vec<f64>,
    /// Interval label of each bin, in numeric order.
    pub labels: Vec<String>,
}

impl NumericBins {
    pub fn bin_of(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<NumericBins>,
}

impl Feature {
    pub fn categorical(name: impl Into<String>, values: Vec<String>) -> Self {
        Self {
            name: name.into(),
            values,
            bins: None,
        }
    }

    pub fn code_of(&self, value: &str) -> Option<u32> {
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    pub label_column: String,
    pub prediction_column: String,
    pub positive_label: String,
}

impl FeatureSchema {
    /// Builds a schema, checking name uniqueness and vocabulary shape.
    pub fn new(
        features: Vec<Feature>,
        label_column: impl Into<String>,
        prediction_column: impl Into<String>,
        positive_label: impl Into<String>,
    ) -> Result<Self> {
        let schema = Self {
            features,
            label_column: label_column.into(),
            prediction_column: prediction_column.into(),
            positive_label: positive_label.into(),
        };
        let mut names = HashSet::new();
        for f in &schema.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            if f.values.is_empty() {
                return Err(Error::Schema(format!("feature `{}` has no values", f.name)));
            }
            let distinct: HashSet<_> = f.values.iter().collect();
            if distinct.len() != f.values.len() {
                return Err(Error::Schema(format!(
                    "feature `{}` has duplicate values",
                    f.name
                )));
            }
        }
        if names.contains(schema.label_column.as_str())
            || names.contains(schema.prediction_column.as_str())
        {
            return Err(Error::Schema(
                "label and prediction columns cannot be features".into(),
            ));
        }
        Ok(schema)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn resolve(&self, feature: &str, value: &str) -> Result<(usize, u32)> {
        let fi = self
            .feature_index(feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
        let code = self.features[fi]
            .code_of(value)
            .ok_or_else(|| Error::UnknownValue {
                feature: feature.to_string(),
                value: value.to_string(),
            })?;
        Ok((fi, code))
    }

    /// Total one-hot width, the sum of all vocabulary sizes.
    pub fn one_hot_dim(&self) -> usize {
        self.features.iter().map(|f| f.values.len()).sum()
    }

    /// Start offset of each feature's block in the one-hot layout, plus a
    /// trailing entry equal to [`Self::one_hot_dim`].
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.features.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for f in &self.features {
            acc += f.values.len();
            offsets.push(acc);
        }
        offsets
    }
}

/// Immutable integer-coded columnar store.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    row_count: usize,
    columns: Vec<Vec<u32>>,
    labels: Vec<bool>,
    predictions: Vec<bool>,
}

impl DataTable {
    pub fn new(
        schema: &FeatureSchema,
        columns: Vec<Vec<u32>>,
        labels: Vec<bool>,
        predictions: Vec<bool>,
    ) -> Result<Self> {
        let row_count = labels.len();
        if predictions.len() != row_count {
            return Err(Error::Schema(format!(
                "{} labels but {} predictions",
                row_count,
                predictions.len()
            )));
        }
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} features",
                columns.len(),
                schema.len()
            )));
        }
        for (col, feature) in columns.iter().zip(&schema.features) {
            if col.len() != row_count {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {}",
                    feature.name,
                    col.len(),
                    row_count
                )));
            }
            if let Some(bad) = col.iter().find(|&&c| c as usize >= feature.values.len()) {
                return Err(Error::Schema(format!(
                    "code {bad} out of range for feature `{}`",
                    feature.name
                )));
            }
        }
        Ok(Self {
            row_count,
            columns,
            labels,
            predictions,
        })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, feature: usize) -> &[u32] {
        &self.columns[feature]
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.columns
    }

    pub fn code(&self, row: usize, feature: usize) -> u32 {
        self.columns[feature][row]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn predictions(&self) -> &[bool] {
        &self.predictions
    }

    pub fn all_rows(&self) -> Vec<u32> {
        (0..self.row_count as u32).collect()
    }
}

/// Result of [`load_dataset`].
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub schema: FeatureSchema,
    pub table: DataTable,
    /// Data rows dropped for a missing value in a required column.
    pub dropped_rows: usize,
}

impl LoadedDataset {
    pub fn input_rows(&self) -> usize {
        self.table.row_count() + self.dropped_rows
    }
}

pub fn load_dataset<R: Read>(source: R, config: &IngestConfig) -> Result<LoadedDataset> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers: Vec<String> = reader
        .headers()
        .map_err(malformed)?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }

    let column_of = |name: &str| -> Result<usize> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name);
        let (idx, _) = hits
            .next()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        if hits.next().is_some() {
            return Err(Error::Schema(format!(
                "column `{name}` appears more than once"
            )));
        }
        Ok(idx)
    };

    let label_idx = column_of(&config.label_column)?;
    let prediction_idx = column_of(&config.prediction_column)?;
    let feature_names: Vec<String> = match &config.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .filter(|h| **h != config.label_column && **h != config.prediction_column)
            .cloned()
            .collect(),
    };
    let feature_idx = feature_names
        .iter()
        .map(|n| {
            if *n == config.label_column || *n == config.prediction_column {
                Err(Error::Schema(format!(
                    "column `{n}` cannot be both a feature and the label/prediction"
                )))
            } else {
                column_of(n)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let is_missing =
        |cell: &str| cell.is_empty() || config.missing_values.iter().any(|m| m == cell);

    let mut raw_columns: Vec<Vec<String>> = vec![Vec::new(); feature_idx.len()];
    let mut raw_labels = Vec::new();
    let mut raw_predictions = Vec::new();
    let mut dropped = 0usize;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(malformed)? {
        let line = record.position().map(|p| p.line());
        let cell = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Malformed {
                line,
                message: format!("record has no field {}", idx + 1),
            })
        };
        let label = cell(label_idx)?;
        let prediction = cell(prediction_idx)?;
        let mut missing = is_missing(label) || is_missing(prediction);
        for &fi in &feature_idx {
            missing |= is_missing(cell(fi)?);
        }
        if missing {
            dropped += 1;
            continue;
        }
        raw_labels.push(label.to_string());
        raw_predictions.push(prediction.to_string());
        for (col, &fi) in raw_columns.iter_mut().zip(&feature_idx) {
            col.push(cell(fi)?.to_string());
        }
    }

    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset { dropped });
    }

    let (labels, predictions) = normalize_outcomes(&raw_labels, &raw_predictions, config)?;

    let mut features = Vec::with_capacity(feature_names.len());
    let mut columns = Vec::with_capacity(feature_names.len());
    for (name, raw) in feature_names.into_iter().zip(raw_columns) {
        let (feature, codes) = categorize(name, &raw, config);
        features.push(feature);
        columns.push(codes);
    }

    let schema = FeatureSchema::new(
        features,
        config.label_column.clone(),
        config.prediction_column.clone(),
        config.positive_label.clone(),
    )?;
    let table = DataTable::new(&schema, columns, labels, predictions)?;
    Ok(LoadedDataset {
        schema,
        table,
        dropped_rows: dropped,
    })
}

fn malformed(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Malformed {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn normalize_outcomes(
    labels: &[String],
    predictions: &[String],
    config: &IngestConfig,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let positive = config.positive_label.trim();
    let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    if distinct.len() < 2 {
        return Err(Error::Label(format!(
            "label column `{}` has fewer than 2 distinct values",
            config.label_column
        )));
    }
    if distinct.len() > 2 {
        return Err(Error::Label(format!(
            "label column `{}` has {} distinct values, expected 2",
            config.label_column,
            distinct.len()
        )));
    }
    if !distinct.contains(positive) {
        return Err(Error::Label(format!(
            "positive label `{positive}` does not occur in column `{}`",
            config.label_column
        )));
    }
    if let Some(bad) = predictions.iter().find(|p| !distinct.contains(p.as_str())) {
        return Err(Error::Label(format!(
            "prediction value `{bad}` is not one of the label values {distinct:?}"
        )));
    }
    Ok((
        labels.iter().map(|v| v == positive).collect(),
        predictions.iter().map(|v| v == positive).collect(),
    ))
}

fn categorize(name: String, raw: &[String], config: &IngestConfig) -> (Feature, Vec<u32>) {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.len() > config.max_categorical_cardinality {
        let parsed: Option<Vec<f64>> = raw
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        if let Some(numbers) = parsed {
            return bin_numeric(name, &numbers, config.numeric_bins);
        }
    }
    let values: Vec<String> = distinct.iter().map(|v| v.to_string()).collect();
    let codes = raw
        .iter()
        .map(|v| values.binary_search(v).expect("value from vocabulary") as u32)
        .collect();
    (Feature::categorical(name, values), codes)
}

/// Quantile cut points: the sorted sample at ranks `j * n / bins` for
/// `j = 1..bins`, deduplicated, excluding the minimum.
pub fn quantile_thresholds(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let min = sorted[0];
    let mut thresholds: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
    for j in 1..bins {
        let t = sorted[(j * n / bins).min(n - 1)];
        if t > min && thresholds.last().is_none_or(|&last| t > last) {
            thresholds.push(t);
        }
    }
    thresholds
}

fn bin_numeric(name: String, numbers: &[f64], bins: usize) -> (Feature, Vec<u32>) {
    let thresholds = quantile_thresholds(numbers, bins);
    let min = numbers.iter().copied().fold(f64::INFINITY, f64::min);
    let max = numbers.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut bounds = Vec::with_capacity(thresholds.len() + 2);
    bounds.push(min);
    bounds.extend_from_slice(&thresholds);
    bounds.push(max);
    let last = bounds.len() - 2;
    let labels: Vec<String> = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if i == last {
                format!("[{}, {}]", w[0], w[1])
            } else {
                format!("[{}, {})", w[0], w[1])
            }
        })
        .collect();

    let mut values = labels.clone();
    values.sort();
    let bin_code: Vec<u32> = labels
        .iter()
        .map(|l| values.binary_search(l).expect("label in vocabulary") as u32)
        .collect();
    let binning = NumericBins { thresholds, labels };
    let codes = numbers
        .iter()
        .map(|&x| bin_code[binning.bin_of(x)])
        .collect();
    (
        Feature {
            name,
            values,
            bins: Some(binning),
        },
        codes,
    )
}

/// One-hot layout of a table: per row, exactly one active position inside
/// each feature block. Stored sparsely as the active column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotMatrix {
    row_count: usize,
    offsets: Vec<usize>,
    active: Vec<u32>,
}

impl OneHotMatrix {
    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn feature_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn block_offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Column indices holding a 1 in `row`, one per feature, ascending.
    pub fn active(&self, row: usize) -> &[u32] {
        let f = self.feature_count();
        &self.active[row * f..(row + 1) * f]
    }

    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &c in self.active(row) {
            out[c as usize] = 1.0;
        }
        out
    }

    /// Recovers the integer codes of `row` block by block.
    pub fn decode(&self, row: usize) -> Vec<u32> {
        self.active(row)
            .iter()
            .zip(&self.offsets)
            .map(|(&c, &off)| c - off as u32)
            .collect()
    }
}

pub fn one_hot(table: &DataTable, schema: &FeatureSchema) -> OneHotMatrix {
    let offsets = schema.block_offsets();
    let f = schema.len();
    let mut active = Vec::with_capacity(table.row_count() * f);
    for row in 0..table.row_count() {
        for (fi, col) in table.columns().iter().enumerate() {
            active.push(offsets[fi] as u32 + col[row]);
        }
    }
    OneHotMatrix {
        row_count: table.row_count(),
        offsets,
        active,
    }
}
