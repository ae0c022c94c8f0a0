//! Donor/charity bipartite protocol on synthetic data with planted groups.
//!
//! Donors are embedded from their own graph; each charity is placed by the
//! out-of-sample extension of its donor connections, the charities are
//! clustered with a Gaussian mixture, and the clusters are tested against the
//! planted charity groups with a permutation test.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{scaled, RawOutput};
use crate::error::{Error, Result};
use crate::inference::{fit_gmm, permutation_test_ari, PermutationReport};
use crate::kernels::KernelSpec;
use crate::lpgraph::{sample_graph, sample_oos_connection_lists};
use crate::oos::oos_embed_lists;
use crate::seeds::{derive_seed, rng};
use crate::spectral::{ase, ase_elbow, EigenOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BipartiteConfig {
    pub donors: usize,
    pub charities: usize,
    /// Planted groups; group centers sit evenly on a circle.
    pub groups: usize,
    pub center_radius: f64,
    /// Standard deviation of donors around their group center.
    pub donor_spread: f64,
    /// Standard deviation of charities around their group center.
    pub charity_spread: f64,
    pub rho: f64,
    /// Embedding dimension; chosen at the scree elbow when absent.
    pub d: Option<usize>,
    /// Eigenvalues inspected for the elbow.
    pub head: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub trials: usize,
}

impl Default for BipartiteConfig {
    fn default() -> Self {
        Self {
            donors: 1500,
            charities: 300,
            groups: 4,
            center_radius: 2.0,
            donor_spread: 0.6,
            charity_spread: 0.15,
            rho: 1.0,
            d: None,
            head: 20,
            k_min: 1,
            k_max: 8,
            trials: 1000,
        }
    }
}

impl BipartiteConfig {
    pub(crate) fn validate(&self, scale: f64) -> Result<()> {
        let (donors, charities, trials) = self.effective(scale);
        if self.groups < 2 || charities < 2 * self.groups {
            return Err(Error::config("need at least 2 groups and 2 charities per group"));
        }
        if donors < self.head.max(3) {
            return Err(Error::config("too few donors for the requested embedding"));
        }
        if self.d == Some(0) || self.head < 3 {
            return Err(Error::config("d must be positive and head at least 3"));
        }
        if self.k_min == 0 || self.k_min > self.k_max || self.k_max > charities {
            return Err(Error::config(format!("invalid K range {}..={}", self.k_min, self.k_max)));
        }
        if trials == 0 {
            return Err(Error::config("trials must be positive"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config("rho must lie in (0, 1]"));
        }
        if [self.center_radius, self.donor_spread, self.charity_spread].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("radii and spreads must be nonnegative"));
        }
        Ok(())
    }

    /// `(donors, charities, trials)` after scaling.
    pub fn effective(&self, scale: f64) -> (usize, usize, usize) {
        (scaled(self.donors, scale, 3), scaled(self.charities, scale, 2), scaled(self.trials, scale, 1))
    }

    fn center(&self, g: usize) -> [f64; 2] {
        let t = TAU * g as f64 / self.groups as f64;
        [self.center_radius * t.cos(), self.center_radius * t.sin()]
    }

    /// `count` points, point `i` in group `i mod groups`, scattered around its center.
    fn scatter(&self, count: usize, spread: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut r = rng(seed);
        let groups: Vec<usize> = (0..count).map(|i| i % self.groups).collect();
        let x = DMatrix::from_fn(count, 2, |i, j| {
            let noise: f64 = r.sample(StandardNormal);
            self.center(groups[i])[j] + spread * noise
        });
        (x, groups)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteReport {
    pub donors: usize,
    pub charities: usize,
    pub d: usize,
    /// Number of mixture components selected by BIC.
    pub k_hat: usize,
    /// Clusters tested against the planted charity groups.
    pub planted: PermutationReport,
    /// Clusters tested against labels drawn independently of everything else.
    pub control: PermutationReport,
    pub donor_eigenvalues: Vec<f64>,
    pub planted_labels: Vec<usize>,
    pub control_labels: Vec<usize>,
    pub clusters: Vec<usize>,
}

impl BipartiteReport {
    pub fn assignments_csv(&self) -> String {
        let mut s = String::from("charity,planted,control,cluster\n");
        for i in 0..self.clusters.len() {
            let _ = writeln!(s, "{i},{},{},{}", self.planted_labels[i], self.control_labels[i], self.clusters[i]);
        }
        s
    }
}

pub fn run_bipartite(cfg: &BipartiteConfig, seed: u64, scale: f64) -> Result<BipartiteReport> {
    cfg.validate(scale)?;
    let (n_donors, n_charities, trials) = cfg.effective(scale);
    let spec = KernelSpec::gaussian(1.0, 2)?;
    let (donors, _) = cfg.scatter(n_donors, cfg.donor_spread, derive_seed(seed, &[0]));
    let a_dd = sample_graph(&spec, &donors, cfg.rho, derive_seed(seed, &[1]))?;
    let (emb, donor_eigenvalues) = match cfg.d {
        Some(d) => {
            let e = ase(&a_dd, d)?;
            let values = e.eigenvalues.clone();
            (e, values)
        }
        None => ase_elbow(&a_dd, cfg.head, &EigenOptions::default())?,
    };

    let (charities, planted_labels) = cfg.scatter(n_charities, cfg.charity_spread, derive_seed(seed, &[2]));
    let a_dc = sample_oos_connection_lists(&charities, &donors, &spec, cfg.rho, derive_seed(seed, &[3]))?;
    let t = oos_embed_lists(&emb, &a_dc)?;

    let k_max = cfg.k_max.min(n_charities);
    let gmm = fit_gmm(&t, cfg.k_min..=k_max, derive_seed(seed, &[4]))?;
    let mut r = rng(derive_seed(seed, &[5]));
    let control_labels: Vec<usize> = (0..n_charities).map(|_| r.random_range(0..cfg.groups)).collect();
    let planted = permutation_test_ari(&planted_labels, &gmm.assignments, trials, derive_seed(seed, &[6]))?;
    let control = permutation_test_ari(&control_labels, &gmm.assignments, trials, derive_seed(seed, &[7]))?;
    Ok(BipartiteReport {
        donors: n_donors,
        charities: n_charities,
        d: emb.d,
        k_hat: gmm.k,
        planted,
        control,
        donor_eigenvalues,
        planted_labels,
        control_labels,
        clusters: gmm.assignments,
    })
}

pub(crate) fn raw_output(report: &BipartiteReport) -> Result<RawOutput> {
    let mut planted = Vec::new();
    report.planted.write_null_csv(&mut planted)?;
    let mut control = Vec::new();
    report.control.write_null_csv(&mut control)?;
    let results = serde_json::json!({
        "donors": report.donors,
        "charities": report.charities,
        "d": report.d,
        "k_hat": report.k_hat,
        "planted": report.planted,
        "control": report.control,
        "donor_eigenvalues": report.donor_eigenvalues,
    });
    Ok(RawOutput {
        tables: vec![
            ("assignments.csv".into(), report.assignments_csv()),
            ("null_planted.csv".into(), String::from_utf8(planted).expect("ascii")),
            ("null_control.csv".into(), String::from_utf8(control).expect("ascii")),
        ],
        results,
    })
}
