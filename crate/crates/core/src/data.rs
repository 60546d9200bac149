//! Datasets: the synthetic generator, CSV schemas for the real datasets,
//! seeded train/test splits and min-max scaling.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub immutable: bool,
}

/// Per-feature min-max scaler onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    /// Fits on the rows of `features`. Constant columns get unit range.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a scaler on zero rows"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for row in &features[1..] {
            for (j, v) in row.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    fn range(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.min[j]) / self.range(j))
            .collect()
    }

    pub fn unscale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| v * self.range(j) + self.min[j])
            .collect()
    }
}

/// Feature matrix with binary labels. When `scaler` is set the features are
/// stored in scaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub meta: Vec<FeatureMeta>,
    pub scaler: Option<Scaler>,
}

impl Dataset {
    /// Builds and validates a dataset.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>, meta: Vec<FeatureMeta>) -> Result<Self> {
        let d = Self {
            features,
            labels,
            meta,
            scaler: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.meta.len();
        if self.features.is_empty() || p == 0 {
            return Err(Error::invalid("dataset needs at least one row and one feature"));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                got: self.labels.len(),
            });
        }
        for row in &self.features {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("features must be finite"));
            }
        }
        if let Some(l) = self.labels.iter().find(|l| **l > 1) {
            return Err(Error::invalid(format!("labels must be 0 or 1, got {l}")));
        }
        if let Some(s) = &self.scaler {
            if s.dim() != p || s.max.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: s.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.len()
    }

    /// Immutability flags in feature order.
    pub fn frozen_mask(&self) -> Vec<bool> {
        self.meta.iter().map(|m| m.immutable).collect()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Rows at `indices`, in that order, sharing meta and scaler.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
            scaler: self.scaler.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`. Both must be in the same units.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if self.scaler != other.scaler {
            return Err(Error::invalid("cannot concatenate datasets with different scalers"));
        }
        let mut out = self.clone();
        out.features.extend(other.features.iter().cloned());
        out.labels.extend(&other.labels);
        Ok(out)
    }

    /// Re-expresses raw features in the units of `scaler`.
    pub fn with_scaler(&self, scaler: &Scaler) -> Result<Self> {
        if self.scaler.is_some() {
            return Err(Error::invalid("dataset is already scaled"));
        }
        if scaler.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: scaler.dim(),
            });
        }
        Ok(Self {
            features: self.features.iter().map(|r| scaler.scale(r)).collect(),
            labels: self.labels.clone(),
            meta: self.meta.clone(),
            scaler: Some(scaler.clone()),
        })
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Dataset = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        d.validate()?;
        Ok(d)
    }
}

/// Synthetic decision boundary `x2 = 1 + x1 + 2 x1^2 + x1^3 - x1^4`.
pub fn synthetic_boundary(x1: f64) -> f64 {
    let x2 = x1 * x1;
    1.0 + x1 + 2.0 * x2 + x2 * x1 - x2 * x2
}

/// Noise-free synthetic label.
pub fn synthetic_label(x: &[f64]) -> u8 {
    u8::from(x[1] >= synthetic_boundary(x[0]))
}

/// `n` points uniform on `[-2,4] x [-2,7]`, labelled 1 above the quartic
/// boundary shifted by `N(0, noise_std^2)` noise.
pub fn generate_synthetic(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid(format!(
            "noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated");
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = rng.random_range(-2.0..4.0);
        let x2 = rng.random_range(-2.0..7.0);
        let eps = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        labels.push(u8::from(x2 >= synthetic_boundary(x1) + eps));
        features.push(vec![x1, x2]);
    }
    let meta = ["x1", "x2"]
        .iter()
        .map(|name| FeatureMeta {
            name: (*name).to_string(),
            immutable: false,
        })
        .collect();
    Dataset::new(features, labels, meta)
}

/// Seeded train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Fit a min-max scaler on the training side and apply it to both sides.
    #[serde(default = "default_true")]
    pub scale: bool,
}

fn default_true() -> bool {
    true
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            scale: true,
        }
    }

    pub fn unscaled(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            scale: false,
        }
    }
}

/// Shuffles row indices with the spec's seed and cuts at
/// `round(train_fraction * n)`. Each side keeps original row order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "train_fraction {} leaves an empty side with n = {n}",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits `dataset` (raw units) and, if `spec.scale`, scales both sides by a
/// scaler fitted on the training side.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if dataset.scaler.is_some() {
        return Err(Error::invalid("split expects an unscaled dataset"));
    }
    let (tr, te) = split_indices(dataset.len(), spec)?;
    let train = dataset.subset(&tr);
    let test = dataset.subset(&te);
    if !spec.scale {
        return Ok((train, test));
    }
    let scaler = Scaler::fit(&train.features)?;
    Ok((train.with_scaler(&scaler)?, test.with_scaler(&scaler)?))
}

/// Supported CSV layouts. Every file has a header row with exactly the
/// schema's feature columns plus `label`, in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// German Credit. `label`: 1 = good risk (favorable); 0 or 2 = bad risk.
    German,
    /// Small Business Administration. `label`: 1 = loan repaid (favorable), 0 = charged off.
    Sba,
    /// Give Me Some Credit. `label` is `SeriousDlqin2yrs`: 0 = no distress
    /// (favorable, mapped to 1), 1 = distress (mapped to 0).
    Gmc,
}

const GERMAN_COLUMNS: &[&str] = &["duration", "amount", "personal_status_sex", "age"];
const SBA_COLUMNS: &[&str] = &[
    "Term",
    "NoEmp",
    "CreateJob",
    "RetainedJob",
    "UrbanRural",
    "ChgOffPrinGr",
    "GrAppv",
    "SBA_Appv",
    "New",
    "RealEstate",
    "Portion",
    "Recession",
];
const GMC_COLUMNS: &[&str] = &[
    "RevolvingUtilizationOfUnsecuredLines",
    "age",
    "NumberOfTime30-59DaysPastDueNotWorse",
    "DebtRatio",
    "MonthlyIncome",
    "NumberOfOpenCreditLinesAndLoans",
    "NumberOfTimes90DaysLate",
    "NumberRealEstateLoansOrLines",
    "NumberOfTime60-89DaysPastDueNotWorse",
    "NumberOfDependents",
];

pub const LABEL_COLUMN: &str = "label";

impl Schema {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::German => GERMAN_COLUMNS,
            Schema::Sba => SBA_COLUMNS,
            Schema::Gmc => GMC_COLUMNS,
        }
    }

    fn is_categorical(self, column: &str) -> bool {
        self == Schema::German && column == "personal_status_sex"
    }

    fn is_immutable(self, column: &str) -> bool {
        self == Schema::German && column == "personal_status_sex"
    }

    fn map_label(self, raw: f64) -> Option<u8> {
        match (self, raw as i64, raw.fract() == 0.0) {
            (_, _, false) => None,
            (Schema::German, 1, _) => Some(1),
            (Schema::German, 0 | 2, _) => Some(0),
            (Schema::Sba, v @ (0 | 1), _) => Some(v as u8),
            (Schema::Gmc, 0, _) => Some(1),
            (Schema::Gmc, 1, _) => Some(0),
            _ => None,
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "german" => Ok(Schema::German),
            "sba" => Ok(Schema::Sba),
            "gmc" => Ok(Schema::Gmc),
            other => Err(Error::invalid(format!("unknown dataset schema `{other}`"))),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Loads a CSV file in one of the documented schemas.
///
/// Categorical columns are integer-coded by first appearance; empty, `NA`
/// or `NaN` numeric cells are replaced by the column median. Parse errors
/// report the 0-based data row and 0-based file column.
pub fn load_csv(path: &Path, schema: Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let columns = schema.columns();
    let mut position = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if name != LABEL_COLUMN && !columns.contains(&name.as_str()) {
            return Err(Error::UnexpectedColumn { column: name.clone() });
        }
        if position.insert(name.as_str(), i).is_some() {
            return Err(Error::UnexpectedColumn { column: name.clone() });
        }
    }
    for name in columns.iter().chain(std::iter::once(&LABEL_COLUMN)) {
        if !position.contains_key(name) {
            return Err(Error::MissingColumn {
                column: (*name).to_string(),
            });
        }
    }

    let p = columns.len();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut labels = Vec::new();
    let mut codes: Vec<HashMap<String, usize>> = vec![HashMap::new(); p];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut parsed = Vec::with_capacity(p);
        for (j, name) in columns.iter().enumerate() {
            let col = position[name];
            let cell = record.get(col).unwrap_or("");
            let value = if schema.is_categorical(name) {
                if is_missing(cell) {
                    return Err(Error::Parse {
                        row,
                        column: col,
                        message: "missing categorical value".into(),
                    });
                }
                let next = codes[j].len();
                Some(*codes[j].entry(cell.to_string()).or_insert(next) as f64)
            } else if is_missing(cell) {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: col,
                    message: format!("cannot parse `{cell}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: col,
                        message: format!("non-finite value `{cell}`"),
                    });
                }
                Some(v)
            };
            parsed.push(value);
        }
        let col = position[LABEL_COLUMN];
        let cell = record.get(col).unwrap_or("");
        let label = cell
            .parse::<f64>()
            .ok()
            .and_then(|v| schema.map_label(v))
            .ok_or_else(|| Error::Parse {
                row,
                column: col,
                message: format!("invalid label `{cell}` for schema {schema:?}"),
            })?;
        cells.push(parsed);
        labels.push(label);
    }
    if cells.is_empty() {
        return Err(Error::invalid("csv file has no data rows"));
    }

    let mut fill = vec![0.0; p];
    for (j, f) in fill.iter_mut().enumerate() {
        if cells.iter().all(|r| r[j].is_some()) {
            continue;
        }
        let mut present: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
        *f = median(&mut present)
            .ok_or_else(|| Error::DegenerateData(format!("column `{}` has no values to impute from", columns[j])))?;
    }
    let features = cells
        .into_iter()
        .map(|r| r.into_iter().enumerate().map(|(j, v)| v.unwrap_or(fill[j])).collect())
        .collect();
    let meta = columns
        .iter()
        .map(|name| FeatureMeta {
            name: (*name).to_string(),
            immutable: schema.is_immutable(name),
        })
        .collect();
    Dataset::new(features, labels, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_examples() {
        assert_eq!(synthetic_label(&[0.0, 2.0]), 1);
        assert_eq!(synthetic_label(&[0.0, 0.5]), 0);
        let d = generate_synthetic(1000, 0.0, 3).unwrap();
        assert_eq!(d.len(), 1000);
        for (x, y) in d.features.iter().zip(&d.labels) {
            assert!((-2.0..=4.0).contains(&x[0]) && (-2.0..=7.0).contains(&x[1]));
            assert_eq!(*y, synthetic_label(x));
        }
        assert_eq!(d, generate_synthetic(1000, 0.0, 3).unwrap());
        assert!(generate_synthetic(0, 0.0, 3).is_err());
    }

    #[test]
    fn noisy_labels_differ_somewhere() {
        let clean = generate_synthetic(500, 0.0, 1).unwrap();
        let noisy = generate_synthetic(500, 1.0, 1).unwrap();
        assert!(clean.labels != noisy.labels);
    }

    #[test]
    fn split_contract() {
        let d = generate_synthetic(10, 0.0, 0).unwrap();
        let spec = SplitSpec::new(0.8, 9);
        let (tr, te) = split(&d, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (a, b) = split_indices(10, &spec).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split(&d, &spec).unwrap(), (tr.clone(), te));
        for row in &tr.features {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(split(&d, &SplitSpec::new(0.999, 9)).is_err());
        assert!(split(&d, &SplitSpec::new(0.01, 9)).is_err());
    }

    #[test]
    fn scaler_round_trip() {
        let d = generate_synthetic(50, 0.0, 5).unwrap();
        let s = Scaler::fit(&d.features).unwrap();
        for row in &d.features {
            let back = s.unscale(&s.scale(row));
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let flat = Scaler::fit(&[vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(flat.scale(&[2.0]), vec![0.0]);
    }

    #[test]
    fn german_csv() {
        let text = "duration,amount,personal_status_sex,age,label\n\
                    6,1169,A93,67,1\n48,5951,A92,22,2\n12,2096,A93,49,1\n";
        let d = read_csv(text.as_bytes(), Schema::German).unwrap();
        assert_eq!((d.len(), d.dim()), (3, 4));
        assert_eq!(d.labels, vec![1, 0, 1]);
        assert_eq!(d.features[1][2], 1.0);
        assert_eq!(d.features[2][2], 0.0);
        assert_eq!(d.frozen_mask(), vec![false, false, true, false]);
    }

    #[test]
    fn csv_schema_errors() {
        let text = "duration,amount,personal_status_sex,label\n6,1169,A93,1\n";
        match read_csv(text.as_bytes(), Schema::German) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "age"),
            other => panic!("{other:?}"),
        }
        let text = "duration,amount,personal_status_sex,age,label,extra\n6,1,A,2,1,0\n";
        assert!(matches!(
            read_csv(text.as_bytes(), Schema::German),
            Err(Error::UnexpectedColumn { .. })
        ));
        let text = "duration,amount,personal_status_sex,age,label\n6,abc,A93,67,1\n";
        match read_csv(text.as_bytes(), Schema::German) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (0, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gmc_median_imputation() {
        let header = GMC_COLUMNS.join(",") + ",label\n";
        let incomes = ["3000", "", "5000", "1000", "9000"];
        let mut text = header;
        for inc in incomes {
            text += &format!("0.5,40,0,0.3,{inc},5,0,1,0,2,0\n");
        }
        let d = read_csv(text.as_bytes(), Schema::Gmc).unwrap();
        // present values 1000, 3000, 5000, 9000
        assert_eq!(d.features[1][4], 4000.0);
        assert!(d.labels.iter().all(|l| *l == 1));
    }
}
