//! Synthetic benchmark data, agent assignments and target/feature transforms.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::FeatureAssignment;
use crate::rng::SeededStream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("dataset must have at least one row and one feature")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target {value} at row {row} is not strictly positive")]
    NonPositiveTarget { row: usize, value: f64 },
    #[error("requested {requested} rows but dataset has {available}")]
    InsufficientRows { requested: usize, available: usize },
    #[error("invalid assignment system {0}; expected 1, 2 or 3")]
    InvalidSystem(u8),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("provenance record: {0}")]
    Provenance(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Friedman1,
    Friedman2,
    Friedman3,
    /// `y = x1 · x2` with independent standard Gaussian features.
    ProductXy,
    /// Externally supplied data; cannot be generated.
    Custom,
}

impl Rule {
    pub fn parse(s: &str) -> Option<Rule> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "friedman1" => Some(Rule::Friedman1),
            "friedman2" => Some(Rule::Friedman2),
            "friedman3" => Some(Rule::Friedman3),
            "productxy" | "product" => Some(Rule::ProductXy),
            "custom" => Some(Rule::Custom),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Rule::Friedman1 => "friedman1",
            Rule::Friedman2 => "friedman2",
            Rule::Friedman3 => "friedman3",
            Rule::ProductXy => "product_xy",
            Rule::Custom => "custom",
        }
    }

    /// Uniform sampling ranges per feature, or `None` for Gaussian features.
    fn ranges(self) -> Option<&'static [(f64, f64)]> {
        const F1: [(f64, f64); 5] = [(0.0, 1.0); 5];
        const F23: [(f64, f64); 5] = [(1.0, 100.0), (40.0 * PI, 560.0 * PI), (0.0, 1.0), (1.0, 11.0), (0.0, 1.0)];
        match self {
            Rule::Friedman1 => Some(&F1),
            Rule::Friedman2 | Rule::Friedman3 => Some(&F23),
            _ => None,
        }
    }

    fn n_features(self) -> usize {
        match self {
            Rule::Friedman1 | Rule::Friedman2 | Rule::Friedman3 => 5,
            Rule::ProductXy => 2,
            Rule::Custom => 0,
        }
    }

    /// Noise-free target for one feature row.
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Rule::Friedman1 => friedman1(x),
            Rule::Friedman2 => friedman2(x),
            Rule::Friedman3 => friedman3(x),
            Rule::ProductXy => x[0] * x[1],
            Rule::Custom => f64::NAN,
        }
    }
}

pub fn friedman1(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

fn friedman_inner(x: &[f64]) -> f64 {
    x[1] * x[2] - 1.0 / (x[1] * x[3])
}

pub fn friedman2(x: &[f64]) -> f64 {
    (x[0] * x[0] + friedman_inner(x).powi(2)).sqrt()
}

pub fn friedman3(x: &[f64]) -> f64 {
    (friedman_inner(x) / x[0]).atan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub rule: Rule,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub normalize_targets: bool,
}

impl GeneratorSpec {
    pub fn new(rule: Rule, n: usize, seed: u64) -> Self {
        GeneratorSpec { rule, n, noise_sd: 0.0, seed, normalize_targets: false }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 {
            return Err(DataError::InvalidSpec("n must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(DataError::InvalidSpec("noise_sd must be finite and non-negative".into()));
        }
        if self.rule == Rule::Custom {
            return Err(DataError::InvalidSpec("custom data is loaded, not generated".into()));
        }
        Ok(())
    }
}

/// Affine target map onto `[0, 1]` fitted on a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn fit(targets: &[f64]) -> Self {
        let min = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Normalization { min, max }
    }

    pub fn apply(&self, t: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (t - self.min) / span
        } else {
            0.0
        }
    }

    pub fn invert(&self, t: f64) -> f64 {
        self.min + t * (self.max - self.min)
    }
}

/// Column-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    /// `columns[j][i]` is feature `j` of row `i`.
    pub columns: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub provenance: Option<GeneratorSpec>,
    /// Set when `targets` have been mapped onto `[0, 1]`.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, DataError> {
        let ds = Dataset { names, columns, targets, provenance: None, normalization: None };
        ds.validate()?;
        Ok(ds)
    }

    /// Features named `x1..xM`.
    pub fn from_columns(columns: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, DataError> {
        let names = (1..=columns.len()).map(|j| format!("x{j}")).collect();
        Self::new(names, columns, targets)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.targets.len();
        if n == 0 || self.columns.is_empty() {
            return Err(DataError::Empty);
        }
        if self.names.len() != self.columns.len() {
            return Err(DataError::Shape(format!(
                "{} names for {} columns",
                self.names.len(),
                self.columns.len()
            )));
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.len() != n {
                return Err(DataError::Shape(format!("column {name} has {} rows, expected {n}", col.len())));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite(name.clone()));
            }
        }
        if self.targets.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite("target".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Copies of the selected columns, in the given order.
    pub fn select_columns(&self, features: &[usize]) -> Vec<Vec<f64>> {
        features.iter().map(|&f| self.columns[f].clone()).collect()
    }

    pub fn target_variance(&self) -> f64 {
        variance(&self.targets)
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            provenance: self.provenance.clone(),
            normalization: self.normalization,
        }
    }

    fn raw_targets(&self) -> Vec<f64> {
        match &self.normalization {
            Some(norm) => self.targets.iter().map(|&t| norm.invert(t)).collect(),
            None => self.targets.clone(),
        }
    }

    fn with_normalization(mut self, norm: Option<Normalization>) -> Dataset {
        let raw = self.raw_targets();
        self.targets = match &norm {
            Some(nm) => raw.iter().map(|&t| nm.apply(t)).collect(),
            None => raw,
        };
        self.normalization = norm;
        self
    }
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Draws `spec.n` rows. Per row, features are drawn in column order, then one
/// standard-normal noise draw (always consumed, scaled by `noise_sd`).
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let m = spec.rule.n_features();
    let mut stream = SeededStream::new(spec.seed);
    let mut columns = vec![Vec::with_capacity(spec.n); m];
    let mut targets = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; m];
    for _ in 0..spec.n {
        match spec.rule.ranges() {
            Some(ranges) => {
                for (x, &(lo, hi)) in row.iter_mut().zip(ranges) {
                    *x = stream.uniform_in(lo, hi);
                }
            }
            None => {
                for x in row.iter_mut() {
                    *x = stream.std_normal();
                }
            }
        }
        let noise = stream.std_normal();
        targets.push(spec.rule.eval(&row) + spec.noise_sd * noise);
        for (c, &x) in columns.iter_mut().zip(&row) {
            c.push(x);
        }
    }
    let mut ds = Dataset::from_columns(columns, targets)?;
    ds.provenance = Some(spec.clone());
    if spec.normalize_targets {
        let norm = Normalization::fit(&ds.targets);
        ds = ds.with_normalization(Some(norm));
    }
    Ok(ds)
}

/// The three reference agent layouts (0-based feature indices).
pub fn assignment_system(k: u8) -> Result<FeatureAssignment, DataError> {
    let sets: Vec<Vec<usize>> = match k {
        1 => vec![vec![0], vec![1], vec![2], vec![3], vec![4]],
        2 => vec![vec![0, 1], vec![1, 2], vec![3, 4]],
        3 => vec![vec![0, 1, 2], vec![1, 3, 4]],
        _ => return Err(DataError::InvalidSystem(k)),
    };
    Ok(FeatureAssignment::new(sets, 5).expect("reference systems are valid"))
}

/// Appends `Σ_j combo[j] · x_j` for every combination as a new column.
pub fn virtual_features(ds: &Dataset, combos: &[Vec<f64>]) -> Result<Dataset, DataError> {
    let mut out = ds.clone();
    for (k, combo) in combos.iter().enumerate() {
        if combo.len() != ds.m() {
            return Err(DataError::Shape(format!(
                "combination {k} has {} coefficients for {} features",
                combo.len(),
                ds.m()
            )));
        }
        let col: Vec<f64> = (0..ds.n())
            .map(|i| combo.iter().zip(&ds.columns).map(|(c, x)| c * x[i]).sum())
            .collect();
        let name = format!("v{}", k + 1);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(name));
        }
        out.names.push(name);
        out.columns.push(col);
    }
    Ok(out)
}

/// Maps model outputs back to the original target scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    Log,
}

impl TargetTransform {
    pub fn invert(&self, v: f64) -> f64 {
        match self {
            TargetTransform::Identity => v,
            TargetTransform::Log => v.exp(),
        }
    }
}

/// Replaces every target by its natural logarithm.
pub fn log_transform_targets(ds: &Dataset) -> Result<(Dataset, TargetTransform), DataError> {
    if let Some((row, &value)) = ds.targets.iter().enumerate().find(|(_, &t)| t <= 0.0) {
        return Err(DataError::NonPositiveTarget { row, value });
    }
    let mut out = ds.clone();
    out.targets = ds.targets.iter().map(|t| t.ln()).collect();
    out.normalization = None;
    Ok((out, TargetTransform::Log))
}

/// Deterministic shuffled split. If `ds` carries a target normalization it is
/// refitted on the training part and applied to both parts.
pub fn split(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let requested = n_train + n_test;
    if requested > ds.n() || n_train == 0 {
        return Err(DataError::InsufficientRows { requested, available: ds.n() });
    }
    let mut order: Vec<usize> = (0..ds.n()).collect();
    SeededStream::new(seed).shuffle(&mut order);
    let train = ds.subset(&order[..n_train]);
    let test = ds.subset(&order[n_train..requested]);
    if ds.normalization.is_some() {
        let norm = Normalization::fit(&train.raw_targets());
        return Ok((train.with_normalization(Some(norm)), test.with_normalization(Some(norm))));
    }
    Ok((train, test))
}

/// Normalizes both parts by the training targets' min/max.
pub fn normalize_by_train(train: Dataset, test: Dataset) -> (Dataset, Dataset, Normalization) {
    let norm = Normalization::fit(&train.raw_targets());
    (train.with_normalization(Some(norm)), test.with_normalization(Some(norm)), norm)
}

/// Sidecar record written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: Option<GeneratorSpec>,
    pub normalization: Option<Normalization>,
    pub rows: usize,
    pub features: Vec<String>,
}

pub fn provenance_path(csv_path: &Path) -> PathBuf {
    let mut p = csv_path.as_os_str().to_owned();
    p.push(".provenance.json");
    PathBuf::from(p)
}

/// Writes `<path>` (header: feature names then `target`) and its provenance sidecar.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.names.clone();
    header.push("target".into());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.columns.iter().map(|c| c[i].to_string()).collect();
        rec.push(ds.targets[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.to_owned(), source })?;
    let prov = Provenance {
        spec: ds.provenance.clone(),
        normalization: ds.normalization,
        rows: ds.n(),
        features: ds.names.clone(),
    };
    let side = provenance_path(path);
    let mut text = serde_json::to_string_pretty(&prov)?;
    text.push('\n');
    fs::write(&side, text).map_err(|source| DataError::Io { path: side, source })?;
    Ok(())
}

/// Reads a dataset CSV; the last column is the target. The provenance sidecar
/// is picked up when present.
pub fn read_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 {
        return Err(DataError::Shape("need at least one feature column and a target".into()));
    }
    let m = header.len() - 1;
    let names: Vec<String> = header.iter().take(m).map(str::to_owned).collect();
    let mut columns = vec![Vec::new(); m];
    let mut targets = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != m + 1 {
            return Err(DataError::Shape(format!("row {row} has {} fields", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| DataError::Shape(format!("row {row}: `{field}` is not a number")))?;
            if j < m {
                columns[j].push(v);
            } else {
                targets.push(v);
            }
        }
    }
    let mut ds = Dataset::new(names, columns, targets)?;
    let side = provenance_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|source| DataError::Io { path: side.clone(), source })?;
        let prov: Provenance = serde_json::from_str(&text)?;
        ds.provenance = prov.spec;
        ds.normalization = prov.normalization;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn friedman_formulas_at_fixed_points() {
        assert!(friedman1(&[1.0, 1.0, 0.5, 0.0, 0.0]).abs() < 1e-12);
        // x2·x3 = 1/(x2·x4) with x2 = 2, x4 = 1/2, x3 = 1/2
        let x = [7.0, 2.0, 0.5, 0.5, 0.9];
        assert_eq!(friedman_inner(&x), 0.0);
        assert_eq!(friedman2(&x), 7.0);
        assert_eq!(friedman3(&x), 0.0);
    }

    #[test]
    fn generation_is_reproducible_and_in_range() {
        let spec = GeneratorSpec::new(Rule::Friedman2, 500, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 5);
        let ranges = Rule::Friedman2.ranges().unwrap();
        for (col, &(lo, hi)) in a.columns.iter().zip(ranges) {
            assert!(col.iter().all(|&v| v >= lo && v < hi));
        }
        for i in 0..a.n() {
            assert_eq!(a.targets[i], friedman2(&a.row(i)));
        }
    }

    #[test]
    fn x5_is_irrelevant_for_friedman2_and_3() {
        let mut x = [50.0, 300.0, 0.3, 4.0, 0.1];
        let (a2, a3) = (friedman2(&x), friedman3(&x));
        x[4] = 0.95;
        assert_eq!(friedman2(&x), a2);
        assert_eq!(friedman3(&x), a3);
    }

    #[test]
    fn normalized_targets_span_unit_interval() {
        let mut spec = GeneratorSpec::new(Rule::Friedman1, 300, 1);
        spec.normalize_targets = true;
        let ds = generate(&spec).unwrap();
        let lo = ds.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GeneratorSpec::new(Rule::Friedman1, 0, 1)).is_err());
        let mut s = GeneratorSpec::new(Rule::Friedman1, 10, 1);
        s.noise_sd = -1.0;
        assert!(generate(&s).is_err());
        assert!(generate(&GeneratorSpec::new(Rule::Custom, 10, 1)).is_err());
    }

    #[test]
    fn systems() {
        assert_eq!(assignment_system(1).unwrap().sets(), &[vec![0], vec![1], vec![2], vec![3], vec![4]]);
        assert_eq!(assignment_system(2).unwrap().sets(), &[vec![0, 1], vec![1, 2], vec![3, 4]]);
        assert_eq!(assignment_system(3).unwrap().sets(), &[vec![0, 1, 2], vec![1, 3, 4]]);
        assert!(assignment_system(4).is_err());
        assert!(assignment_system(0).is_err());
    }

    #[test]
    fn virtual_feature_columns() {
        let ds = Dataset::from_columns(vec![vec![1.0, 2.0], vec![3.0, 5.0]], vec![0.0, 0.0]).unwrap();
        let out = virtual_features(&ds, &[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(out.m(), 4);
        assert_eq!(out.columns[2], vec![4.0, 7.0]);
        assert_eq!(out.columns[3], vec![-2.0, -3.0]);
        assert_eq!(out.columns[..2], ds.columns[..]);
        assert_eq!(virtual_features(&ds, &[]).unwrap(), ds);
        assert_eq!(virtual_features(&ds, &[vec![0.0, 0.0]]).unwrap().columns[2], vec![0.0, 0.0]);
        assert!(virtual_features(&ds, &[vec![1.0]]).is_err());
    }

    #[test]
    fn log_transform() {
        let ds = Dataset::from_columns(vec![vec![1.0, 2.0]], vec![1.0, 1.0]).unwrap();
        let (t, inv) = log_transform_targets(&ds).unwrap();
        assert_eq!(t.targets, vec![0.0, 0.0]);
        assert_eq!(inv.invert(0.0), 1.0);

        let (a, b) = (vec![0.5, 2.0, 3.0], vec![4.0, 0.25, 1.5]);
        let y: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
        let ds = Dataset::from_columns(vec![a.clone(), b.clone()], y).unwrap();
        let (t, _) = log_transform_targets(&ds).unwrap();
        for i in 0..3 {
            assert!((t.targets[i] - (a[i].ln() + b[i].ln())).abs() < 1e-12);
        }

        let zero = Dataset::from_columns(vec![vec![1.0]], vec![0.0]).unwrap();
        assert!(matches!(log_transform_targets(&zero), Err(DataError::NonPositiveTarget { row: 0, .. })));
    }

    #[test]
    fn split_shape_and_determinism() {
        let ds = generate(&GeneratorSpec::new(Rule::Friedman3, 6000, 5)).unwrap();
        let (tr, te) = split(&ds, 2000, 4000, 9).unwrap();
        assert_eq!((tr.n(), te.n()), (2000, 4000));
        let (tr2, te2) = split(&ds, 2000, 4000, 9).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert!(split(&ds, 5000, 2000, 9).is_err());
    }

    #[test]
    fn split_refits_normalization_on_train() {
        let mut spec = GeneratorSpec::new(Rule::Friedman1, 1000, 2);
        spec.normalize_targets = true;
        let ds = generate(&spec).unwrap();
        let (tr, te) = split(&ds, 300, 700, 1).unwrap();
        let lo = tr.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tr.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert_eq!(tr.normalization, te.normalization);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = std::env::temp_dir().join(format!("icea-ds-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        let ds = generate(&GeneratorSpec::new(Rule::Friedman1, 50, 3)).unwrap();
        write_csv(&ds, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, ds);
        fs::remove_dir_all(&dir).ok();
    }
}
