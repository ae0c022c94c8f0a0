//! Thin wrappers writing the verification curves and bound checks.

use serde::{Deserialize, Serialize};

use super::{scaled, RawOutput};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lpgraph::{LatentDistribution, SparsitySchedule};
use crate::seeds::derive_seed;
use crate::verify::{
    check_concentration, error_curves, rate_exponent, BoundReport, CurveConfig, Oracle, RateCurve, DEFAULT_ETA,
};

fn default_schedule() -> SparsitySchedule {
    SparsitySchedule::Constant { c: 1.0 }
}

fn default_oracle() -> Oracle {
    Oracle::LatentPositions
}

fn default_fresh() -> usize {
    50
}

fn default_replicates() -> usize {
    20
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_n() -> usize {
    1000
}

fn default_trials() -> usize {
    100
}

fn default_rho() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesConfig {
    pub kernel: KernelSpec,
    pub distribution: LatentDistribution,
    pub d: usize,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_schedule")]
    pub schedule: SparsitySchedule,
    #[serde(default = "default_oracle")]
    pub oracle: Oracle,
    #[serde(default = "default_fresh")]
    pub fresh_points: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

impl RatesConfig {
    /// The curve configuration with `n_grid` scaled.
    pub fn curve_config(&self, seed: u64, scale: f64) -> CurveConfig {
        let mut n_grid: Vec<usize> = self.n_grid.iter().map(|&n| scaled(n, scale, 1)).collect();
        n_grid.dedup();
        CurveConfig {
            kernel: self.kernel.clone(),
            distribution: self.distribution.clone(),
            d: self.d,
            n_grid,
            replicates: self.replicates,
            schedule: self.schedule,
            oracle: self.oracle.clone(),
            fresh_points: self.fresh_points,
            master_seed: seed,
            eta: self.eta,
        }
    }

    pub(crate) fn validate(&self, scale: f64) -> Result<()> {
        self.curve_config(0, scale).validate().map_err(as_config)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Argument(m) | Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub kernel: KernelSpec,
    pub distribution: LatentDistribution,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl BoundsConfig {
    /// `(n, trials)` after scaling.
    pub fn effective(&self, scale: f64) -> (usize, usize) {
        (scaled(self.n, scale, 2), scaled(self.trials, scale, 1))
    }

    pub(crate) fn validate(&self, scale: f64) -> Result<()> {
        self.kernel.kind.validate()?;
        self.distribution.validate()?;
        if self.kernel.dim != self.distribution.dim() {
            return Err(Error::config("kernel and distribution dimensions differ"));
        }
        let (n, _) = self.effective(scale);
        if !(self.rho > 0.0 && self.rho <= 1.0) || (n as f64) * self.rho < 1.0 {
            return Err(Error::config("need rho in (0, 1] and n * rho >= 1"));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::config("eta must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub insample: RateCurve,
    pub oos: RateCurve,
    /// `(slope, standard error)` of log error on log n, when at least 3 points exist.
    pub insample_slope: Option<(f64, f64)>,
    pub oos_slope: Option<(f64, f64)>,
}

pub fn run_rates(cfg: &RatesConfig, seed: u64, scale: f64) -> Result<RatesReport> {
    cfg.validate(scale)?;
    let (insample, oos) = error_curves(&cfg.curve_config(seed, scale))?;
    Ok(RatesReport {
        insample_slope: rate_exponent(&insample).ok(),
        oos_slope: rate_exponent(&oos).ok(),
        insample,
        oos,
    })
}

/// Trial `t` uses seed `derive_seed(seed, [t])`.
pub fn run_bounds(cfg: &BoundsConfig, seed: u64, scale: f64) -> Result<BoundReport> {
    cfg.validate(scale)?;
    let (n, trials) = cfg.effective(scale);
    let seeds: Vec<u64> = (0..trials as u64).map(|t| derive_seed(seed, &[t])).collect();
    check_concentration(&cfg.kernel, &cfg.distribution, n, cfg.rho, cfg.eta, &seeds)
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii"))
}

pub(crate) fn rates_output(report: &RatesReport) -> Result<RawOutput> {
    let slope = |s: Option<(f64, f64)>| s.map(|(m, se)| serde_json::json!({ "slope": m, "stderr": se }));
    Ok(RawOutput {
        tables: vec![
            ("insample.csv".into(), csv_string(|w| report.insample.write_csv(w))?),
            ("oos.csv".into(), csv_string(|w| report.oos.write_csv(w))?),
        ],
        results: serde_json::json!({
            "insample_slope": slope(report.insample_slope),
            "oos_slope": slope(report.oos_slope),
            "insample": report.insample,
            "oos": report.oos,
        }),
    })
}

pub(crate) fn bounds_output(report: &BoundReport) -> Result<RawOutput> {
    Ok(RawOutput {
        tables: vec![("bounds.csv".into(), csv_string(|w| report.write_csv(w))?)],
        results: serde_json::json!({
            "n": report.n,
            "rho": report.rho,
            "eta": report.eta,
            "bound": report.bound,
            "observed_max": report.observed,
            "satisfied": report.satisfied,
            "trials": report.trials,
            "violation_rate": report.violation_rate,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

    fn dirichlet() -> LatentDistribution {
        LatentDistribution::Dirichlet { alpha: vec![1.0, 1.0, 1.0] }
    }

    #[test]
    fn rates_emit_one_row_per_grid_point() {
        let cfg = ExperimentConfig {
            seed: 5,
            scale: 1.0,
            out_dir: None,
            kind: ExperimentKind::Rates(RatesConfig {
                kernel: KernelSpec::dot_product(2).unwrap(),
                distribution: dirichlet(),
                d: 2,
                n_grid: vec![60, 90, 120, 160],
                replicates: 3,
                schedule: default_schedule(),
                oracle: Oracle::LatentPositions,
                fresh_points: 10,
                eta: DEFAULT_ETA,
            }),
        };
        let out = run_experiment(&cfg).unwrap();
        let oos = String::from_utf8(out.get("oos.csv").unwrap().contents.clone()).unwrap();
        assert!(oos.starts_with("# config: {"));
        assert_eq!(oos.lines().count(), 2 + 4);
        assert!(out.summary["oos_slope"]["slope"].is_number());
        assert_eq!(out, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn bounds_emit_one_row_per_trial() {
        let cfg = BoundsConfig {
            kernel: KernelSpec::gaussian(1.0, 2).unwrap(),
            distribution: LatentDistribution::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n: 80,
            rho: 1.0,
            eta: 0.05,
            trials: 7,
        };
        let r = run_bounds(&cfg, 2, 1.0).unwrap();
        assert_eq!(r.per_trial.len(), 7);
        let csv = bounds_output(&r).unwrap().tables.remove(0).1;
        assert_eq!(csv.lines().count(), 8);
        assert_eq!(r.per_trial[3].seed, derive_seed(2, &[3]));
    }
}
