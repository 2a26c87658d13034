//! Tabular ingestion, min-max normalization and patient splits.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub mod synthetic;

/// Binary diagnosis. `Malignant` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Malignant
    }
}

/// How a feature column's cells are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Numeric,
    /// Ordered levels; a cell equal to `levels[k]` is encoded as `k`.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    /// Declared level order for categorical columns; absent means numeric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            levels: None,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.into(),
            levels: Some(levels.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn kind(&self) -> ColumnKind {
        match &self.levels {
            Some(levels) => ColumnKind::Categorical {
                levels: levels.clone(),
            },
            None => ColumnKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub column: String,
    /// Cell values mapped to [`Label::Malignant`].
    pub positive: Vec<String>,
    /// Cell values mapped to [`Label::Benign`].
    pub negative: Vec<String>,
}

/// Column roles of an input table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column names for header-less files, in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    /// Sample ID column; when absent, IDs are 1-based row ordinals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub features: Vec<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelSpec>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Drop rows with a missing cell instead of failing.
    #[serde(default)]
    pub drop_missing_rows: bool,
}

fn default_true() -> bool {
    true
}

fn default_delimiter() -> char {
    ','
}

impl TableSchema {
    /// Schema of the UCI post-operative patient file (`post-operative.data`).
    ///
    /// The file has no header and no ID column. `COMFORT` contains `?` in a
    /// few rows; it is declared as the top level of that column so that all
    /// 90 patients are kept. Admission decision `A` (general hospital floor)
    /// is the positive class; `S` and `I` are negative.
    pub fn post_operative() -> Self {
        let three = ["low", "mid", "high"];
        let stability = ["unstable", "mod-stable", "stable"];
        TableSchema {
            has_header: false,
            column_names: Some(
                [
                    "L-CORE",
                    "L-SURF",
                    "L-O2",
                    "L-BP",
                    "SURF-STBL",
                    "CORE-STBL",
                    "BP-STBL",
                    "COMFORT",
                    "ADM-DECS",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ),
            id_column: None,
            features: vec![
                FeatureSpec::categorical("L-CORE", &three),
                FeatureSpec::categorical("L-SURF", &three),
                FeatureSpec::categorical("L-O2", &["poor", "fair", "good", "excellent"]),
                FeatureSpec::categorical("L-BP", &three),
                FeatureSpec::categorical("SURF-STBL", &stability),
                FeatureSpec::categorical("CORE-STBL", &stability),
                FeatureSpec::categorical("BP-STBL", &stability),
                FeatureSpec::categorical("COMFORT", &["05", "07", "10", "15", "?"]),
            ],
            label: Some(LabelSpec {
                column: "ADM-DECS".into(),
                positive: vec!["A".into()],
                negative: vec!["S".into(), "I".into()],
            }),
            delimiter: ',',
            drop_missing_rows: false,
        }
    }
}

/// Dense samples × features table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub values: Array2<f64>,
    pub labels: Option<Vec<Label>>,
}

impl FeatureMatrix {
    pub fn new(
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Array2<f64>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let kinds = vec![ColumnKind::Numeric; feature_names.len()];
        Self::with_kinds(sample_ids, feature_names, kinds, values, labels)
    }

    pub fn with_kinds(
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        kinds: Vec<ColumnKind>,
        values: Array2<f64>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        if values.nrows() != sample_ids.len()
            || values.ncols() != feature_names.len()
            || kinds.len() != feature_names.len()
        {
            return Err(Error::InvalidParameter(format!(
                "values are {}x{} but there are {} ids, {} features and {} column kinds",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                feature_names.len(),
                kinds.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != sample_ids.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    sample_ids.len()
                )));
            }
        }
        let mut seen = HashSet::with_capacity(sample_ids.len());
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(FeatureMatrix {
            sample_ids,
            feature_names,
            kinds,
            values,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Restriction to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            kinds: self.kinds.clone(),
            values: self.values.select(Axis(0), rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }
}

/// Reads a delimited table according to `schema`. Values are left raw.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<FeatureMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Same as [`load_table`] over any reader.
pub fn read_table<R: std::io::Read>(reader: R, schema: &TableSchema) -> Result<FeatureMatrix> {
    if schema.features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let csv_err = |source| Error::Csv {
        path: "<reader>".into(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let header: Vec<String> = if schema.has_header {
        rdr.headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        schema.column_names.clone().ok_or_else(|| {
            Error::Config("header-less table needs `column_names` in the schema".into())
        })?
    };
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let id_col = schema.id_column.as_deref().map(position).transpose()?;
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| position(&f.name))
        .collect::<Result<_>>()?;
    let label_col = schema
        .label
        .as_ref()
        .map(|l| position(&l.column))
        .transpose()?;
    if let Some(lc) = label_col {
        if feature_cols.contains(&lc) {
            return Err(Error::Config(
                "label column cannot also be a feature column".into(),
            ));
        }
    }

    let n = schema.features.len();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    // 1-based line number of the data row, counting the header.
    let first_line = if schema.has_header { 2 } else { 1 };

    'rows: for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = first_line + k;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let mut parsed = Vec::with_capacity(n);
        for (spec, &c) in schema.features.iter().zip(&feature_cols) {
            match parse_cell(cell(c), spec) {
                Ok(v) => parsed.push(v),
                Err(CellError::Missing) if schema.drop_missing_rows => continue 'rows,
                Err(CellError::Missing) => {
                    return Err(Error::MissingCell {
                        row,
                        column: spec.name.clone(),
                    })
                }
                Err(CellError::Unparsable) => {
                    return Err(Error::UnparsableCell {
                        row,
                        column: spec.name.clone(),
                        value: cell(c).to_string(),
                    })
                }
            }
        }
        if let (Some(spec), Some(lc)) = (&schema.label, label_col) {
            let value = cell(lc);
            let label = if spec.positive.iter().any(|p| p == value) {
                Label::Malignant
            } else if spec.negative.iter().any(|p| p == value) {
                Label::Benign
            } else if value.is_empty() && schema.drop_missing_rows {
                continue 'rows;
            } else {
                return Err(Error::UnknownLabel {
                    row,
                    value: value.to_string(),
                });
            };
            labels.push(label);
        }
        ids.push(match id_col {
            Some(c) => cell(c).to_string(),
            None => format!("{:04}", ids.len() + 1),
        });
        flat.extend(parsed);
    }

    let values = Array2::from_shape_vec((ids.len(), n), flat)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    FeatureMatrix::with_kinds(
        ids,
        schema.features.iter().map(|f| f.name.clone()).collect(),
        schema.features.iter().map(FeatureSpec::kind).collect(),
        values,
        schema.label.as_ref().map(|_| labels),
    )
}

enum CellError {
    Missing,
    Unparsable,
}

fn parse_cell(cell: &str, spec: &FeatureSpec) -> std::result::Result<f64, CellError> {
    if let Some(levels) = &spec.levels {
        if let Some(k) = levels.iter().position(|l| l == cell) {
            return Ok(k as f64);
        }
    } else if let Ok(v) = cell.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
    }
    if is_missing_token(cell) {
        Err(CellError::Missing)
    } else {
        Err(CellError::Unparsable)
    }
}

fn is_missing_token(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "NaN" | "nan")
}

/// Per-column minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxStats {
    /// Statistics over `rows`, or over every row when `rows` is `None`.
    pub fn fit(matrix: &FeatureMatrix, rows: Option<&[usize]>) -> Self {
        let n = matrix.n_features();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        let mut visit = |r: usize| {
            for (j, &v) in matrix.values.row(r).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        };
        match rows {
            Some(rows) => rows.iter().copied().for_each(&mut visit),
            None => (0..matrix.n_samples()).for_each(&mut visit),
        }
        MinMaxStats { min, max }
    }

    /// Rescales each column to `[0, 1]`. Constant columns become 0; values
    /// outside the fitted range are clamped.
    pub fn apply(&self, matrix: &FeatureMatrix) -> FeatureMatrix {
        let mut out = matrix.clone();
        for (j, mut col) in out.values.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            col.mapv_inplace(|v| {
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            });
        }
        out
    }
}

/// Min-max normalization with statistics over the whole matrix.
pub fn normalize_minmax(matrix: &FeatureMatrix) -> FeatureMatrix {
    MinMaxStats::fit(matrix, None).apply(matrix)
}

/// Disjoint train/test partition of the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub ratio: f64,
    pub seed: u64,
    /// Row indices, ascending.
    pub train: Vec<usize>,
    /// Row indices, ascending.
    pub test: Vec<usize>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Number of training samples for `ratio` of `m`.
pub fn train_size(m: usize, ratio: f64) -> usize {
    (ratio * m as f64).round() as usize
}

/// Shuffles the samples with a seeded stream and takes the first
/// `round(ratio * m)` as the training side.
pub fn split_by_ratio(matrix: &FeatureMatrix, ratio: f64, seed: u64) -> Result<SplitPlan> {
    let m = matrix.n_samples();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidSplit(format!("ratio {ratio} outside (0, 1)")));
    }
    if m < 2 {
        return Err(Error::InvalidSplit(format!("{m} samples")));
    }
    let n_train = train_size(m, ratio);
    if n_train == 0 || n_train == m {
        return Err(Error::InvalidSplit(format!(
            "ratio {ratio} of {m} samples leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let ids = |rows: &[usize]| rows.iter().map(|&r| matrix.sample_ids[r].clone()).collect();
    Ok(SplitPlan {
        ratio,
        seed,
        train_ids: ids(&train),
        test_ids: ids(&test),
        train,
        test,
    })
}
