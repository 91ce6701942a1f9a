//! Fixture builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::PathBuf;

use flate2::read::GzDecoder;
use slicewise_core::{DataTable, Feature, FeatureSchema, IngestConfig};

/// Fixtures live under the core crate; other crates include this module by
/// path and resolve them from their sibling directory.
pub fn fixture_path(name: &str) -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let local = here.join("tests").join("fixtures").join(name);
    if local.exists() {
        return local;
    }
    here.join("../core/tests/fixtures").join(name)
}

pub fn read_gz(name: &str) -> String {
    let mut out = String::new();
    GzDecoder::new(File::open(fixture_path(name)).expect("fixture present"))
        .read_to_string(&mut out)
        .expect("gzip fixture");
    out
}

pub const COMPAS_FEATURES: [&str; 8] = [
    "sex",
    "age_cat",
    "race",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "priors_count",
    "c_charge_degree",
];

/// ProPublica two-year COMPAS extract, filtered the way the original
/// ProPublica analysis does, with a binary prediction column: decile score
/// above 4 ("above low risk") is a positive prediction of recidivism.
pub fn compas_csv() -> String {
    let raw = read_gz("compas-scores-two-years.csv.gz");
    let mut reader = csv::Reader::from_reader(raw.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let days = col("days_b_screening_arrest");
    let is_recid = col("is_recid");
    let degree = col("c_charge_degree");
    let score_text = col("score_text");
    let decile = col("decile_score");
    let features: Vec<usize> = COMPAS_FEATURES.iter().map(|f| col(f)).collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = COMPAS_FEATURES.to_vec();
    header.extend(["is_recid", "predicted"]);
    writer.write_record(&header).unwrap();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let Ok(d) = rec[days].parse::<i64>() else {
            continue;
        };
        if !(-30..=30).contains(&d)
            || &rec[is_recid] == "-1"
            || &rec[degree] == "O"
            || &rec[score_text] == "N/A"
        {
            continue;
        }
        let predicted = if rec[decile].parse::<i64>().unwrap() > 4 {
            "1"
        } else {
            "0"
        };
        let mut row: Vec<&str> = features.iter().map(|&i| &rec[i]).collect();
        row.push(&rec[is_recid]);
        row.push(predicted);
        writer.write_record(&row).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

pub fn compas_config() -> IngestConfig {
    IngestConfig::new("is_recid", "predicted", "1")
}

pub const ADULT_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

const ADULT_AUDIT_FEATURES: [&str; 12] = [
    "age",
    "workclass",
    "education",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
];

fn adult_rows(name: &str) -> Vec<Vec<String>> {
    read_gz(name)
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('|'))
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().trim_end_matches('.').to_string())
                .collect::<Vec<_>>()
        })
        .filter(|r| r.len() == ADULT_COLUMNS.len())
        .collect()
}

/// Coarse discretization used only by the naive Bayes model.
fn nb_token(column: usize, value: &str) -> String {
    let num = || value.parse::<f64>().unwrap_or(0.0);
    match ADULT_COLUMNS[column] {
        "age" => format!("{}", (num() / 5.0).floor()),
        "hours-per-week" => format!("{}", (num() / 5.0).floor()),
        "capital-gain" | "capital-loss" => {
            let x = num();
            if x == 0.0 {
                "0".into()
            } else {
                format!("{}", x.log10().floor())
            }
        }
        _ => value.to_string(),
    }
}

/// Categorical naive Bayes with add-one smoothing.
pub struct NaiveBayes {
    classes: Vec<String>,
    priors: Vec<f64>,
    likelihood: Vec<HashMap<(usize, String), f64>>,
    unseen: Vec<Vec<f64>>,
    columns: Vec<usize>,
}

impl NaiveBayes {
    pub fn fit(rows: &[Vec<String>], columns: &[usize], target: usize) -> Self {
        let mut classes: Vec<String> = rows.iter().map(|r| r[target].clone()).collect();
        classes.sort();
        classes.dedup();
        let mut priors = Vec::new();
        let mut likelihood = Vec::new();
        let mut unseen = Vec::new();
        for class in &classes {
            let in_class: Vec<&Vec<String>> = rows.iter().filter(|r| &r[target] == class).collect();
            priors.push((in_class.len() as f64 / rows.len() as f64).ln());
            let mut table = HashMap::new();
            let mut unseen_c = Vec::new();
            for &c in columns {
                let mut counts: HashMap<String, f64> = HashMap::new();
                for r in rows {
                    counts.entry(nb_token(c, &r[c])).or_insert(0.0);
                }
                for r in &in_class {
                    *counts.get_mut(&nb_token(c, &r[c])).unwrap() += 1.0;
                }
                let denom = in_class.len() as f64 + counts.len() as f64 + 1.0;
                for (tok, n) in counts {
                    table.insert((c, tok), ((n + 1.0) / denom).ln());
                }
                unseen_c.push((1.0 / denom).ln());
            }
            likelihood.push(table);
            unseen.push(unseen_c);
        }
        Self {
            classes,
            priors,
            likelihood,
            unseen,
            columns: columns.to_vec(),
        }
    }

    pub fn predict(&self, row: &[String]) -> &str {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.classes.len() {
            let mut score = self.priors[k];
            for (i, &c) in self.columns.iter().enumerate() {
                score += self.likelihood[k]
                    .get(&(c, nb_token(c, &row[c])))
                    .copied()
                    .unwrap_or(self.unseen[k][i]);
            }
            if score > best.1 {
                best = (k, score);
            }
        }
        &self.classes[best.0]
    }
}

/// UCI Adult test split with predictions from a naive Bayes model trained
/// on the training split. Returns the CSV text and the model's accuracy.
pub fn adult_csv() -> (String, f64) {
    let train = adult_rows("adult.data.gz");
    let test = adult_rows("adult.test.gz");
    let target = ADULT_COLUMNS.len() - 1;
    let feature_cols: Vec<usize> = ADULT_AUDIT_FEATURES
        .iter()
        .map(|f| ADULT_COLUMNS.iter().position(|c| c == f).unwrap())
        .collect();
    let model = NaiveBayes::fit(&train, &feature_cols, target);

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ADULT_AUDIT_FEATURES.to_vec();
    header.extend(["income", "predicted"]);
    writer.write_record(&header).unwrap();
    let mut correct = 0usize;
    for r in &test {
        let p = model.predict(r);
        if p == r[target] {
            correct += 1;
        }
        let mut row: Vec<&str> = feature_cols.iter().map(|&c| r[c].as_str()).collect();
        row.push(&r[target]);
        row.push(p);
        writer.write_record(&row).unwrap();
    }
    (
        String::from_utf8(writer.into_inner().unwrap()).unwrap(),
        correct as f64 / test.len() as f64,
    )
}

pub fn adult_config() -> IngestConfig {
    IngestConfig::new("income", "predicted", "<=50K")
}

/// Builds a schema of features `f0..` with values `v0..` and a table from
/// explicit rows of codes.
pub fn synthetic(
    sizes: &[usize],
    rows: &[Vec<u32>],
    labels: &[bool],
    predictions: &[bool],
) -> (FeatureSchema, DataTable) {
    let features = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            Feature::categorical(format!("f{i}"), (0..m).map(|v| format!("v{v}")).collect())
        })
        .collect();
    let schema = FeatureSchema::new(features, "label", "prediction", "1").unwrap();
    let columns = (0..sizes.len())
        .map(|f| rows.iter().map(|r| r[f]).collect())
        .collect();
    let table = DataTable::new(&schema, columns, labels.to_vec(), predictions.to_vec()).unwrap();
    (schema, table)
}
