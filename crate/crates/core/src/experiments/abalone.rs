//! UCI abalone ingestion and the embedding classification protocol.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RawOutput;
use crate::error::{Error, Result};
use crate::inference::{fit_one_vs_rest, misclassification_rate, FitOptions, Loss};
use crate::kernels::KernelSpec;
use crate::lpgraph::{sample_graph, DENSE_MAX_VERTICES};
use crate::oos::oos_embed_lists;
use crate::seeds::{derive_seed, rng};
use crate::spectral::ase;

pub const ABALONE_ROWS: usize = 4177;
pub const ABALONE_TRAIN: usize = 3133;
const FEATURES: [&str; 7] =
    ["length", "diameter", "height", "whole_weight", "shucked_weight", "viscera_weight", "shell_weight"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub sha256: String,
    pub rows: usize,
    pub standardized: bool,
}

/// Features, labels and a fixed train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// `n x 7`, the physical measurements in file order.
    pub features: DMatrix<f64>,
    /// 1, 2 or 3.
    pub labels: Vec<i64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub provenance: Provenance,
}

/// Ring count to age class: at most 8 rings is class 1, 9 or 10 is class 2, more is class 3.
pub fn ring_class(rings: u32) -> i64 {
    match rings {
        0..=8 => 1,
        9 | 10 => 2,
        _ => 3,
    }
}

/// Parses the abalone CSV (sex, seven measurements, rings; no header).
/// Any row count is accepted here; see [`load_abalone`] for the canonical checks.
pub fn parse_abalone(bytes: &[u8], source: &str) -> Result<DatasetBundle> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 1;
        let rec = rec.map_err(|e| Error::Ingestion { line, message: e.to_string() })?;
        if rec.len() != 9 {
            return Err(Error::Ingestion { line, message: format!("expected 9 fields, found {}", rec.len()) });
        }
        let sex = rec[0].trim();
        if !matches!(sex, "M" | "F" | "I") {
            return Err(Error::Ingestion { line, message: format!("unknown sex {sex:?}") });
        }
        for (j, name) in FEATURES.iter().enumerate() {
            let v: f64 = rec[j + 1].trim().parse().map_err(|_| Error::Ingestion {
                line,
                message: format!("{name} is not a number: {:?}", &rec[j + 1]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion { line, message: format!("{name} is not finite") });
            }
            values.push(v);
        }
        let rings: u32 = rec[8]
            .trim()
            .parse()
            .map_err(|_| Error::Ingestion { line, message: format!("rings is not a count: {:?}", &rec[8]) })?;
        labels.push(ring_class(rings));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Ingestion { line: 1, message: "no rows".into() });
    }
    let train_len = if n == ABALONE_ROWS { ABALONE_TRAIN } else { (n * 3) / 4 };
    Ok(DatasetBundle {
        features: DMatrix::from_row_slice(n, FEATURES.len(), &values),
        labels,
        train: (0..train_len).collect(),
        test: (train_len..n).collect(),
        provenance: Provenance { source: source.to_string(), sha256: hex_digest(bytes), rows: n, standardized: false },
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Loads the canonical UCI file: 4177 rows, the first 3133 for training.
pub fn load_abalone(path: &Path) -> Result<DatasetBundle> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Provenance(format!("cannot read abalone data at {}: {e}", path.display())))?;
    let bundle = parse_abalone(&bytes, &path.display().to_string())?;
    if bundle.labels.len() != ABALONE_ROWS {
        return Err(Error::Provenance(format!(
            "{} has {} rows; the canonical abalone file has {ABALONE_ROWS}",
            path.display(),
            bundle.labels.len()
        )));
    }
    Ok(bundle)
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Centers and scales each feature by its training-set mean and standard deviation.
    pub fn standardize(&mut self) {
        let m = self.train.len() as f64;
        for j in 0..self.features.ncols() {
            let mean = self.train.iter().map(|&i| self.features[(i, j)]).sum::<f64>() / m;
            let var = self.train.iter().map(|&i| (self.features[(i, j)] - mean).powi(2)).sum::<f64>() / m;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..self.features.nrows() {
                self.features[(i, j)] = (self.features[(i, j)] - mean) / sd;
            }
        }
        self.provenance.standardized = true;
    }

    /// Features and class label, one row per observation, shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut s = FEATURES.join(",");
        s.push_str(",class\n");
        for i in 0..self.n() {
            for j in 0..self.features.ncols() {
                let _ = write!(s, "{},", self.features[(i, j)]);
            }
            let _ = writeln!(s, "{}", self.labels[i]);
        }
        s
    }
}

fn default_sigma() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

fn default_d() -> usize {
    50
}

fn default_m_values() -> Vec<usize> {
    (0..7).map(|k| 200 + 400 * k).collect()
}

fn default_svm_c() -> f64 {
    1.0
}

fn default_rho() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbaloneConfig {
    pub path: PathBuf,
    /// Expected SHA-256 of the file, checked when given.
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default)]
    pub standardize: bool,
    /// Gaussian kernel width; the default gives `exp(-2 |x - y|^2)`.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_m_values")]
    pub m_values: Vec<usize>,
    /// SVM cost; the hinge objective uses `l2 = 1 / (C m)` for `m` training rows.
    #[serde(default = "default_svm_c")]
    pub svm_c: f64,
}

impl AbaloneConfig {
    pub fn new(path: PathBuf) -> Self {
        Self {
            path,
            sha256: None,
            standardize: false,
            sigma: default_sigma(),
            rho: default_rho(),
            d: default_d(),
            m_values: default_m_values(),
            svm_c: default_svm_c(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.path.exists() {
            return Err(Error::config(format!("abalone data not found at {}", self.path.display())));
        }
        if !(self.sigma > 0.0) || !(self.rho > 0.0 && self.rho <= 1.0) || !(self.svm_c > 0.0) {
            return Err(Error::config("sigma and svm_c must be positive and rho must lie in (0, 1]"));
        }
        if self.d == 0 {
            return Err(Error::config("d must be positive"));
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m <= self.d || m >= ABALONE_TRAIN) {
            return Err(Error::config(format!("m = {m} must lie in ({}, {ABALONE_TRAIN})", self.d)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbaloneReport {
    pub provenance: Provenance,
    pub insample_error: f64,
    /// `(m, error)` per subgraph size.
    pub oos_errors: Vec<(usize, f64)>,
}

impl AbaloneReport {
    pub fn oos_error(&self, m: usize) -> Option<f64> {
        self.oos_errors.iter().find(|(k, _)| *k == m).map(|(_, e)| *e)
    }

    /// Rows `protocol,m,error`; `m` is the number of vertices embedded directly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("protocol,m,error\n");
        let _ = writeln!(s, "in-sample,{},{}", self.provenance.rows, self.insample_error);
        for (m, e) in &self.oos_errors {
            let _ = writeln!(s, "out-of-sample,{m},{e}");
        }
        s
    }
}

fn svm_error(train_z: &DMatrix<f64>, train_y: &[i64], test_z: &DMatrix<f64>, test_y: &[i64], c: f64) -> Result<f64> {
    let opts = FitOptions { l2: 1.0 / (c * train_z.nrows() as f64), ..FitOptions::default() };
    let model = fit_one_vs_rest(train_z, train_y, Loss::Hinge, None, &opts)?;
    misclassification_rate(&model.predict(test_z)?, test_y)
}

fn pick(labels: &[i64], idx: &[usize]) -> Vec<i64> {
    idx.iter().map(|&i| labels[i]).collect()
}

pub fn run_abalone(cfg: &AbaloneConfig, seed: u64) -> Result<AbaloneReport> {
    cfg.validate()?;
    let mut data = load_abalone(&cfg.path)?;
    if let Some(want) = &cfg.sha256 {
        if !want.eq_ignore_ascii_case(&data.provenance.sha256) {
            return Err(Error::Provenance(format!(
                "checksum mismatch for {}: expected {want}, found {}",
                cfg.path.display(),
                data.provenance.sha256
            )));
        }
    }
    if cfg.standardize {
        data.standardize();
    }
    let spec = KernelSpec::gaussian(cfg.sigma, data.features.ncols())?;
    let a = sample_graph(&spec, &data.features, cfg.rho, derive_seed(seed, &[1]))?;
    let test_y = pick(&data.labels, &data.test);

    let full = ase(&a, cfg.d)?;
    let insample_error = svm_error(
        &full.rows(&data.train),
        &pick(&data.labels, &data.train),
        &full.rows(&data.test),
        &test_y,
        cfg.svm_c,
    )?;

    let mut oos_errors = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        let mut order = data.train.clone();
        order.shuffle(&mut rng(derive_seed(seed, &[2, m as u64])));
        let (inside, rest) = order.split_at(m);
        let sub = ase(&a.induced_subgraph(inside, DENSE_MAX_VERTICES)?, cfg.d)?;
        let rest_z = oos_embed_lists(&sub, &a.connection_lists(inside, rest)?)?;
        let test_z = oos_embed_lists(&sub, &a.connection_lists(inside, &data.test)?)?;
        let err = svm_error(&rest_z, &pick(&data.labels, rest), &test_z, &test_y, cfg.svm_c)?;
        log::info!("abalone m = {m}: error {err:.4}");
        oos_errors.push((m, err));
    }
    Ok(AbaloneReport { provenance: data.provenance, insample_error, oos_errors })
}

pub(crate) fn raw_output(report: &AbaloneReport) -> Result<RawOutput> {
    Ok(RawOutput { tables: vec![("abalone.csv".into(), report.to_csv())], results: serde_json::to_value(report)? })
}
