//! Two-component Gaussian mixture: in-sample vs out-of-sample classification.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{scaled, RawOutput};
use crate::error::{Error, Result};
use crate::inference::{fit_linear, misclassification_rate, predict, Loss};
use crate::kernels::KernelSpec;
use crate::lpgraph::{sample_graph, sample_latent, LatentDistribution, DENSE_MAX_VERTICES};
use crate::oos::oos_embed_lists;
use crate::seeds::{derive_seed, rng};
use crate::spectral::{ase, select_dimension};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureConfig {
    /// Total number of vertices.
    pub n: usize,
    /// Vertices in the training set (and in the embedded subgraph).
    pub n_in: usize,
    /// Embedding dimensions `1..=d_max` are evaluated.
    pub d_max: usize,
    pub sigma: f64,
    pub rho: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { n: 10_000, n_in: 2000, d_max: 50, sigma: 1.0, rho: 1.0 }
    }
}

impl MixtureConfig {
    pub(crate) fn validate(&self, scale: f64) -> Result<()> {
        let (n, n_in, d_max) = self.effective(scale);
        if n_in < 2 || n_in >= n {
            return Err(Error::config(format!("need 2 <= n_in < n, got n_in = {n_in}, n = {n}")));
        }
        if d_max == 0 {
            return Err(Error::config("d_max must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma must be positive"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config("rho must lie in (0, 1]"));
        }
        Ok(())
    }

    /// `(n, n_in, d_max)` after scaling; `d_max` is capped below `n_in`.
    pub fn effective(&self, scale: f64) -> (usize, usize, usize) {
        let n = scaled(self.n, scale, 3);
        let n_in = scaled(self.n_in, scale, 2);
        (n, n_in, self.d_max.min(n_in.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub d: usize,
    pub insample_err: f64,
    pub oos_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub n: usize,
    pub n_in: usize,
    pub rows: Vec<MixtureRow>,
    /// Largest `oos_err - insample_err` over `d`.
    pub max_gap: f64,
    /// Scree-plot elbow of the full-graph spectrum.
    pub elbow_d: usize,
    pub insample_eigenvalues: Vec<f64>,
    pub subgraph_eigenvalues: Vec<f64>,
}

impl MixtureReport {
    pub fn row(&self, d: usize) -> Option<&MixtureRow> {
        self.rows.iter().find(|r| r.d == d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("d,insample_err,oos_err\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.d, r.insample_err, r.oos_err);
        }
        s
    }
}

/// The mixture `N((1,1), I)` and `N((-1,-1), I)` with equal weights.
pub fn mixture_distribution() -> LatentDistribution {
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    LatentDistribution::GaussianMixture {
        weights: vec![0.5, 0.5],
        means: vec![vec![1.0, 1.0], vec![-1.0, -1.0]],
        covariances: vec![eye.clone(), eye],
    }
}

/// `sign(a b)` for a point `(a, b)`, with zero mapped to `+1`.
fn label(a: f64, b: f64) -> i8 {
    if a * b < 0.0 {
        -1
    } else {
        1
    }
}

fn classify(train: &DMatrix<f64>, y_train: &[i8], test: &DMatrix<f64>, y_test: &[i8]) -> Result<f64> {
    let model = fit_linear(train, y_train, Loss::Squared, None)?;
    misclassification_rate(&predict(&model, test)?, y_test)
}

fn leading(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    m.columns(0, d).into_owned()
}

pub fn run_mixture(cfg: &MixtureConfig, seed: u64, scale: f64) -> Result<MixtureReport> {
    cfg.validate(scale)?;
    let (n, n_in, d_max) = cfg.effective(scale);
    let spec = KernelSpec::gaussian(cfg.sigma, 2)?;
    let x = sample_latent(&mixture_distribution(), n, derive_seed(seed, &[0]))?;
    let y: Vec<i8> = (0..n).map(|i| label(x[(i, 0)], x[(i, 1)])).collect();
    let a = sample_graph(&spec, &x, cfg.rho, derive_seed(seed, &[1]))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(derive_seed(seed, &[2])));
    let (train, test) = order.split_at(n_in);
    let y_train: Vec<i8> = train.iter().map(|&i| y[i]).collect();
    let y_test: Vec<i8> = test.iter().map(|&i| y[i]).collect();

    let full = ase(&a, d_max)?;
    let sub = ase(&a.induced_subgraph(train, DENSE_MAX_VERTICES)?, d_max)?;
    let lists = a.connection_lists(train, test)?;
    let oos = oos_embed_lists(&sub, &lists)?;
    let in_train = full.rows(train);
    let in_test = full.rows(test);

    let rows = (1..=d_max)
        .map(|d| {
            let insample_err = classify(&leading(&in_train, d), &y_train, &leading(&in_test, d), &y_test)?;
            let oos_err = classify(&leading(&sub.z, d), &y_train, &leading(&oos, d), &y_test)?;
            Ok(MixtureRow { d, insample_err, oos_err })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_gap = rows.iter().map(|r| r.oos_err - r.insample_err).fold(f64::NEG_INFINITY, f64::max);
    let elbow_d = if d_max >= 3 { select_dimension(&full.eigenvalues)? } else { 1 };
    Ok(MixtureReport {
        n,
        n_in,
        rows,
        max_gap,
        elbow_d,
        insample_eigenvalues: full.eigenvalues.clone(),
        subgraph_eigenvalues: sub.eigenvalues.clone(),
    })
}

pub(crate) fn raw_output(report: &MixtureReport) -> Result<RawOutput> {
    Ok(RawOutput { tables: vec![("mixture.csv".into(), report.to_csv())], results: serde_json::to_value(report)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Embedding;

    /// Out-of-sample coordinates at dimension `d` equal the leading `d`
    /// coordinates of the `d_max` solution, because the columns of `Z` are orthogonal.
    fn truncation_matches(sub: &Embedding, lists: &[Vec<u32>], d: usize) -> Result<f64> {
        let full = oos_embed_lists(sub, lists)?;
        let direct = oos_embed_lists(&sub.truncate(d)?, lists)?;
        Ok((leading(&full, d) - direct).amax())
    }

    #[test]
    fn labels_follow_sign_of_product() {
        assert_eq!(label(1.0, 2.0), 1);
        assert_eq!(label(-1.0, -2.0), 1);
        assert_eq!(label(-1.0, 2.0), -1);
        assert_eq!(label(0.0, -3.0), 1);
    }

    #[test]
    fn truncated_oos_equals_direct_solution() {
        let spec = KernelSpec::gaussian(1.0, 2).unwrap();
        let x = sample_latent(&mixture_distribution(), 300, 4).unwrap();
        let a = sample_graph(&spec, &x, 1.0, 5).unwrap();
        let train: Vec<usize> = (0..200).collect();
        let test: Vec<usize> = (200..300).collect();
        let sub = ase(&a.induced_subgraph(&train, DENSE_MAX_VERTICES).unwrap(), 10).unwrap();
        let lists = a.connection_lists(&train, &test).unwrap();
        for d in [1, 3, 7] {
            assert!(truncation_matches(&sub, &lists, d).unwrap() < 1e-9);
        }
    }

    #[test]
    fn small_run_has_one_row_per_dimension() {
        let cfg = MixtureConfig { n: 600, n_in: 200, d_max: 6, ..Default::default() };
        let r = run_mixture(&cfg, 11, 1.0).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.to_csv().starts_with("d,insample_err,oos_err\n"));
        assert_eq!(r.to_csv().lines().count(), 7);
        // The classes are separable in the latent space; a few dimensions suffice.
        assert!(r.rows.iter().any(|row| row.insample_err < 0.2), "{r:?}");
        assert_eq!(r, run_mixture(&cfg, 11, 1.0).unwrap());
    }
}
