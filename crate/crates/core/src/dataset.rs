//! Loading, cleaning and encoding of the three tabular benchmarks, plus the
//! stratified holdout split and k-fold partition used by the pipeline.
//!
//! Files are read in the comma-delimited layouts published by the UCI
//! repository:
//!
//! | schema     | file                        | header | label                      |
//! |------------|-----------------------------|--------|----------------------------|
//! | `heart`    | `processed.cleveland.data`  | no     | `num`, 0 vs. grades 1..4   |
//! | `credit`   | `crx.data`                  | no     | `A16`, `+` approved        |
//! | `diabetes` | `diabetes_data_upload.csv`  | yes    | `class`, `Positive`        |
//!
//! Missing cells are marked `?` (or left empty).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ForceError, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Diabetes,
    Heart,
    Credit,
}

impl Schema {
    pub const ALL: [Schema; 3] = [Schema::Diabetes, Schema::Heart, Schema::Credit];

    pub fn name(self) -> &'static str {
        match self {
            Schema::Diabetes => "diabetes",
            Schema::Heart => "heart",
            Schema::Credit => "credit",
        }
    }

    /// File name of the dataset as distributed by UCI.
    pub fn file_name(self) -> &'static str {
        match self {
            Schema::Diabetes => "diabetes_data_upload.csv",
            Schema::Heart => "processed.cleveland.data",
            Schema::Credit => "crx.data",
        }
    }

    fn has_header(self) -> bool {
        matches!(self, Schema::Diabetes)
    }

    fn columns(self) -> Vec<(&'static str, ColumnKind)> {
        use ColumnKind::{Categorical as D, Continuous as C, Label as L};
        match self {
            Schema::Heart => vec![
                ("age", C),
                ("sex", D),
                ("cp", D),
                ("trestbps", C),
                ("chol", C),
                ("fbs", D),
                ("restecg", D),
                ("thalach", C),
                ("exang", D),
                ("oldpeak", C),
                ("slope", D),
                ("ca", C),
                ("thal", D),
                ("num", L),
            ],
            Schema::Credit => vec![
                ("A1", D),
                ("A2", C),
                ("A3", C),
                ("A4", D),
                ("A5", D),
                ("A6", D),
                ("A7", D),
                ("A8", C),
                ("A9", D),
                ("A10", D),
                ("A11", C),
                ("A12", D),
                ("A13", D),
                ("A14", C),
                ("A15", C),
                ("A16", L),
            ],
            Schema::Diabetes => vec![
                ("Age", C),
                ("Gender", D),
                ("Polyuria", D),
                ("Polydipsia", D),
                ("sudden weight loss", D),
                ("weakness", D),
                ("Polyphagia", D),
                ("Genital thrush", D),
                ("visual blurring", D),
                ("Itching", D),
                ("Irritability", D),
                ("delayed healing", D),
                ("partial paresis", D),
                ("muscle stiffness", D),
                ("Alopecia", D),
                ("Obesity", D),
                ("class", L),
            ],
        }
    }

    /// Maps a raw label cell to 0/1, or `None` when the cell is not a valid label.
    fn binarize(self, cell: &str) -> Option<u8> {
        match self {
            Schema::Heart => {
                let grade: f64 = cell.parse().ok()?;
                if !grade.is_finite() || grade < 0.0 {
                    None
                } else if grade == 0.0 {
                    Some(0)
                } else {
                    Some(1)
                }
            }
            Schema::Credit => match cell {
                "+" => Some(1),
                "-" => Some(0),
                _ => None,
            },
            Schema::Diabetes => match cell.to_ascii_lowercase().as_str() {
                "positive" => Some(1),
                "negative" => Some(0),
                _ => None,
            },
        }
    }
}

impl FromStr for Schema {
    type Err = ForceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diabetes" => Ok(Schema::Diabetes),
            "heart" => Ok(Schema::Heart),
            "credit" => Ok(Schema::Credit),
            other => Err(ForceError::UnknownSchema(other.to_string())),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Label,
}

/// String cells as read from disk. Label cells are stored binarized as `"0"`/`"1"`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub column_kinds: Vec<ColumnKind>,
    pub rows: Vec<Vec<String>>,
}

pub fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn label_column(&self) -> usize {
        self.column_kinds
            .iter()
            .position(|k| *k == ColumnKind::Label)
            .expect("RawTable always carries a label column")
    }

    pub fn n_features(&self) -> usize {
        self.column_kinds.len() - 1
    }

    pub fn labels(&self) -> Vec<u8> {
        let li = self.label_column();
        self.rows.iter().map(|r| u8::from(r[li] == "1")).collect()
    }

    fn validate(&self) -> Result<()> {
        let labels = self
            .column_kinds
            .iter()
            .filter(|k| **k == ColumnKind::Label)
            .count();
        if labels != 1 || self.column_names.len() != self.column_kinds.len() {
            return Err(ForceError::InvalidArgument(
                "table must have exactly one label column".into(),
            ));
        }
        let width = self.column_kinds.len();
        if let Some(i) = self.rows.iter().position(|r| r.len() != width) {
            return Err(ForceError::Parse {
                line: i + 1,
                column: self.rows[i].len(),
                message: format!("expected {width} cells"),
            });
        }
        Ok(())
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ForceError::io(path, e))?;
    parse_dataset(&text, schema)
}

pub fn parse_dataset(text: &str, schema: Schema) -> Result<RawTable> {
    let columns = schema.columns();
    let width = columns.len();
    let label_col = width - 1;
    let mut rows = Vec::new();
    let mut header_seen = !schema.has_header();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != width {
            return Err(ForceError::Parse {
                line: line_no,
                column: cells.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", cells.len()),
            });
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let mut row = cells;
        for (j, (_, kind)) in columns.iter().enumerate() {
            let cell = &row[j];
            match kind {
                ColumnKind::Continuous if !is_missing(cell) => {
                    let ok = cell.parse::<f64>().map(f64::is_finite).unwrap_or(false);
                    if !ok {
                        return Err(ForceError::Parse {
                            line: line_no,
                            column: j + 1,
                            message: format!("'{cell}' is not a finite number"),
                        });
                    }
                }
                ColumnKind::Label => {
                    let bit = schema.binarize(cell).ok_or_else(|| ForceError::Parse {
                        line: line_no,
                        column: j + 1,
                        message: format!("'{cell}' is not a valid label"),
                    })?;
                    row[label_col] = bit.to_string();
                }
                _ => {}
            }
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(ForceError::Parse {
            line: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }

    let table = RawTable {
        column_names: columns.iter().map(|(n, _)| n.to_string()).collect(),
        column_kinds: columns.iter().map(|(_, k)| *k).collect(),
        rows,
    };
    let labels = table.labels();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ForceError::SingleClass);
    }
    Ok(table)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingAudit {
    pub imputed: usize,
    pub per_column: Vec<usize>,
}

/// Imputes missing cells: median for continuous columns, mode (first-seen on
/// ties) for categorical ones. Statistics use every row.
pub fn handle_missing(mut table: RawTable) -> Result<(RawTable, MissingAudit)> {
    table.validate()?;
    let width = table.column_kinds.len();
    let mut audit = MissingAudit {
        imputed: 0,
        per_column: vec![0; width],
    };

    for j in 0..width {
        let n_missing = table.rows.iter().filter(|r| is_missing(&r[j])).count();
        if n_missing == 0 {
            continue;
        }
        let name = &table.column_names[j];
        let fill = match table.column_kinds[j] {
            ColumnKind::Label => {
                return Err(ForceError::InvalidArgument(format!(
                    "label column '{name}' has missing cells"
                )))
            }
            ColumnKind::Continuous => {
                let mut observed: Vec<f64> = table
                    .rows
                    .iter()
                    .filter(|r| !is_missing(&r[j]))
                    .map(|r| r[j].parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        ForceError::InvalidArgument(format!("non-numeric cell in '{name}'"))
                    })?;
                if observed.is_empty() {
                    return Err(ForceError::ColumnAllMissing(name.clone()));
                }
                observed.sort_by(f64::total_cmp);
                let m = observed.len();
                let median = if m % 2 == 1 {
                    observed[m / 2]
                } else {
                    0.5 * (observed[m / 2 - 1] + observed[m / 2])
                };
                median.to_string()
            }
            ColumnKind::Categorical => {
                let mut counts: Vec<(&str, usize)> = Vec::new();
                for r in &table.rows {
                    let c = r[j].as_str();
                    if is_missing(c) {
                        continue;
                    }
                    match counts.iter_mut().find(|(v, _)| *v == c) {
                        Some(entry) => entry.1 += 1,
                        None => counts.push((c, 1)),
                    }
                }
                // max_by_key keeps the last maximum; scan manually for first-seen.
                let mut best: Option<(&str, usize)> = None;
                for &(v, n) in &counts {
                    if best.is_none_or(|(_, bn)| n > bn) {
                        best = Some((v, n));
                    }
                }
                best.ok_or_else(|| ForceError::ColumnAllMissing(name.clone()))?
                    .0
                    .to_string()
            }
        };
        for r in table.rows.iter_mut() {
            if is_missing(&r[j]) {
                r[j] = fill.clone();
            }
        }
        audit.per_column[j] = n_missing;
        audit.imputed += n_missing;
    }
    Ok((table, audit))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub source: String,
    /// Category level for one-hot indicators; `None` for scaled continuous columns.
    pub level: Option<String>,
}

impl fmt::Display for ColumnMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.level {
            Some(level) => write!(f, "{}={}", self.source, level),
            None => f.write_str(&self.source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParam {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

/// Dense row-major design matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    pub labels: Vec<u8>,
    pub column_meta: Vec<ColumnMeta>,
    pub scaler_params: Vec<ScalerParam>,
}

impl FeatureMatrix {
    /// Builds a matrix directly from rows; used for synthetic data.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if labels.len() != n_rows {
            return Err(ForceError::Dimension {
                expected: n_rows,
                got: labels.len(),
            });
        }
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(ForceError::Dimension {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(ForceError::NonFinite("feature matrix"));
            }
            values.extend_from_slice(r);
        }
        let column_meta = (0..n_cols)
            .map(|j| ColumnMeta {
                source: format!("x{j}"),
                level: None,
            })
            .collect();
        Ok(FeatureMatrix {
            values,
            n_rows,
            n_cols,
            labels,
            column_meta,
            scaler_params: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column_names(&self) -> Vec<String> {
        self.column_meta.iter().map(ToString::to_string).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let mut header = self.column_names();
        header.push("label".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n_rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push(',');
            out.push_str(&self.labels[i].to_string());
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| ForceError::io(path, e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| ForceError::io(path, e))
    }
}

/// Standard-scales continuous columns with statistics from `training_rows`
/// (population standard deviation) and one-hot encodes categorical columns
/// with levels enumerated over all rows in first-appearance order.
pub fn fit_transform(table: &RawTable, training_rows: &[usize]) -> Result<FeatureMatrix> {
    table.validate()?;
    if training_rows.is_empty() {
        return Err(ForceError::InvalidArgument("no training rows".into()));
    }
    let n = table.n_rows();
    if let Some(&bad) = training_rows.iter().find(|&&i| i >= n) {
        return Err(ForceError::InvalidArgument(format!(
            "training row {bad} out of range"
        )));
    }

    enum Encoder {
        Scale { mean: f64, std: f64 },
        OneHot(Vec<String>),
    }

    let mut encoders: Vec<(usize, Encoder)> = Vec::new();
    let mut column_meta = Vec::new();
    let mut scaler_params = Vec::new();

    for (j, kind) in table.column_kinds.iter().enumerate() {
        let name = &table.column_names[j];
        match kind {
            ColumnKind::Label => {}
            ColumnKind::Continuous => {
                let mut parsed = Vec::with_capacity(n);
                for (i, r) in table.rows.iter().enumerate() {
                    let v: f64 = r[j].parse().map_err(|_| ForceError::Parse {
                        line: i + 1,
                        column: j + 1,
                        message: format!("'{}' is not numeric (impute missing cells first)", r[j]),
                    })?;
                    parsed.push(v);
                }
                let m = training_rows.len() as f64;
                let mean = training_rows.iter().map(|&i| parsed[i]).sum::<f64>() / m;
                let var = training_rows
                    .iter()
                    .map(|&i| (parsed[i] - mean).powi(2))
                    .sum::<f64>()
                    / m;
                let std = var.sqrt();
                if !(std > 1e-12 * mean.abs().max(1.0)) {
                    return Err(ForceError::ZeroVariance(name.clone()));
                }
                scaler_params.push(ScalerParam {
                    column: name.clone(),
                    mean,
                    std,
                });
                column_meta.push(ColumnMeta {
                    source: name.clone(),
                    level: None,
                });
                encoders.push((j, Encoder::Scale { mean, std }));
            }
            ColumnKind::Categorical => {
                let mut levels: Vec<String> = Vec::new();
                for (i, r) in table.rows.iter().enumerate() {
                    if is_missing(&r[j]) {
                        return Err(ForceError::Parse {
                            line: i + 1,
                            column: j + 1,
                            message: "missing cell (impute first)".into(),
                        });
                    }
                    if !levels.contains(&r[j]) {
                        levels.push(r[j].clone());
                    }
                }
                for level in &levels {
                    column_meta.push(ColumnMeta {
                        source: name.clone(),
                        level: Some(level.clone()),
                    });
                }
                encoders.push((j, Encoder::OneHot(levels)));
            }
        }
    }

    let n_cols = column_meta.len();
    let mut values = Vec::with_capacity(n * n_cols);
    for r in &table.rows {
        for (j, enc) in &encoders {
            match enc {
                Encoder::Scale { mean, std } => {
                    let v: f64 = r[*j].parse().expect("validated above");
                    values.push((v - mean) / std);
                }
                Encoder::OneHot(levels) => {
                    values.extend(levels.iter().map(|l| if *l == r[*j] { 1.0 } else { 0.0 }));
                }
            }
        }
    }

    Ok(FeatureMatrix {
        values,
        n_rows: n,
        n_cols,
        labels: table.labels(),
        column_meta,
        scaler_params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub holdout_fraction: f64,
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            holdout_fraction: 0.2,
            n_folds: 5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(ForceError::InvalidArgument(
                "holdout_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.n_folds < 2 {
            return Err(ForceError::InvalidArgument("n_folds must be at least 2".into()));
        }
        Ok(())
    }
}

fn class_members(rows: &[usize], labels: &[u8], spec: &SplitSpec) -> Result<[Vec<usize>; 2]> {
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for &i in rows {
        let l = *labels
            .get(i)
            .ok_or_else(|| ForceError::InvalidArgument(format!("row {i} out of range")))?;
        if l > 1 {
            return Err(ForceError::InvalidArgument(format!("label {l} is not binary")));
        }
        members[l as usize].push(i);
    }
    for (class, m) in members.iter().enumerate() {
        if m.len() < spec.n_folds + 1 {
            return Err(ForceError::ClassTooSmall {
                class: class as u8,
                count: m.len(),
                required: spec.n_folds + 1,
            });
        }
    }
    Ok(members)
}

/// Stratified holdout split. Returns `(train, test)`, both sorted ascending.
/// The test size is `round(holdout_fraction * n)`, apportioned across classes
/// by largest remainder.
pub fn split_holdout(labels: &[u8], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n = labels.len();
    if n < 10 {
        return Err(ForceError::InvalidArgument(format!(
            "need at least 10 rows to split, got {n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let mut members = class_members(&all, labels, spec)?;

    let n_test = (spec.holdout_fraction * n as f64).round() as usize;
    let quotas: Vec<f64> = members
        .iter()
        .map(|m| n_test as f64 * m.len() as f64 / n as f64)
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n_test - take.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        take[c] += 1;
        remaining -= 1;
    }

    let mut rng = seed::rng(seed::derive(spec.seed, seed::tags::HOLDOUT));
    let mut train = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (c, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut rng);
        test.extend_from_slice(&m[..take[c]]);
        train.extend_from_slice(&m[take[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold over `train`. Class members are shuffled, laid out class
/// after class, and dealt round-robin, so per-class counts differ by at most
/// one across folds and leftover rows land in the earliest folds.
pub fn stratified_kfold(train: &[usize], labels: &[u8], spec: &SplitSpec) -> Result<Vec<Fold>> {
    spec.validate()?;
    let mut members = class_members(train, labels, spec)?;
    let mut rng = seed::rng(seed::derive(spec.seed, seed::tags::FOLDS));
    let mut validation: Vec<Vec<usize>> = vec![Vec::new(); spec.n_folds];
    let mut position = 0usize;
    for m in members.iter_mut() {
        m.sort_unstable();
        m.shuffle(&mut rng);
        for &i in m.iter() {
            validation[position % spec.n_folds].push(i);
            position += 1;
        }
    }
    let mut sorted_train = train.to_vec();
    sorted_train.sort_unstable();
    Ok(validation
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let fit = sorted_train
                .iter()
                .copied()
                .filter(|i| val.binary_search(i).is_err())
                .collect();
            Fold {
                fit,
                validation: val,
            }
        })
        .collect())
}
