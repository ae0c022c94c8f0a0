//! Monte Carlo checks of the concentration bound and of the in-sample and
//! out-of-sample convergence rates.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{build_empirical_feature_map, kernel_matrix, EmpiricalFeatureMap, KernelSpec};
use crate::lpgraph::{
    sample_adjacency, sample_graph, sample_latent, sample_oos_connection_lists, LatentDistribution, SparsitySchedule,
};
use crate::oos::oos_embed_lists;
use crate::seeds::derive_seed;
use crate::spectral::{ase, procrustes, spectral_norm, top_eigenpairs, EigenOptions};

pub const DEFAULT_ETA: f64 = 0.05;

/// `2 sqrt(n rho log(n / eta))`, the high-probability bound on `|A - K|`.
pub fn concentration_bound(n: usize, rho: f64, eta: f64) -> f64 {
    let n = n as f64;
    2.0 * (n * rho * (n / eta).ln()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrial {
    pub seed: u64,
    pub observed: f64,
    pub satisfied: bool,
}

/// Outcome of repeated `|A - K|` draws against the concentration bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub rho: f64,
    pub eta: f64,
    /// Largest `|A - K|` over the trials.
    pub observed: f64,
    pub bound: f64,
    /// Every trial within the bound, equivalently `observed <= bound`.
    pub satisfied: bool,
    pub trials: usize,
    pub violation_rate: f64,
    pub per_trial: Vec<BoundTrial>,
}

impl BoundReport {
    /// One row per trial: `trial,seed,observed,bound,satisfied`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "trial,seed,observed,bound,satisfied")?;
        for (t, tr) in self.per_trial.iter().enumerate() {
            writeln!(w, "{t},{},{},{},{}", tr.seed, tr.observed, self.bound, tr.satisfied)?;
        }
        Ok(())
    }
}

/// For each seed, samples `X`, `K` and `A` and measures `|A - K|`.
pub fn check_concentration(
    spec: &KernelSpec,
    dist: &LatentDistribution,
    n: usize,
    rho: f64,
    eta: f64,
    seeds: &[u64],
) -> Result<BoundReport> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::arg(format!("eta must lie in (0, 1/2), got {eta}")));
    }
    if !(rho > 0.0 && rho <= 1.0) || (n as f64) * rho < 1.0 {
        return Err(Error::arg(format!("need rho in (0, 1] and n * rho >= 1, got n = {n}, rho = {rho}")));
    }
    if seeds.is_empty() {
        return Err(Error::arg("no seeds given"));
    }
    check_dims(spec, dist)?;
    let bound = concentration_bound(n, rho, eta);
    let per_trial = seeds
        .par_iter()
        .map(|&seed| {
            let x = sample_latent(dist, n, derive_seed(seed, &[0]))?;
            let k = kernel_matrix(spec, &x, rho)?;
            let a = sample_adjacency(&k, derive_seed(seed, &[1]))?;
            let diff = a.to_dense() - k;
            let observed = spectral_norm(&diff)?;
            Ok(BoundTrial { seed, observed, satisfied: observed <= bound })
        })
        .collect::<Result<Vec<_>>>()?;
    let observed = per_trial.iter().map(|t| t.observed).fold(0.0f64, f64::max);
    let violations = per_trial.iter().filter(|t| !t.satisfied).count();
    Ok(BoundReport {
        n,
        rho,
        eta,
        observed,
        bound,
        satisfied: violations == 0,
        trials: seeds.len(),
        violation_rate: violations as f64 / seeds.len() as f64,
        per_trial,
    })
}

fn check_dims(spec: &KernelSpec, dist: &LatentDistribution) -> Result<()> {
    if spec.dim != dist.dim() {
        return Err(Error::arg(format!(
            "kernel domain has dimension {} but the distribution has {}",
            spec.dim,
            dist.dim()
        )));
    }
    Ok(())
}

/// `|P_A - P_K|`, the distance between the rank-`d` spectral projections of
/// the adjacency matrix and of its expectation.
pub fn projection_difference(a: &DMatrix<f64>, k: &DMatrix<f64>, d: usize) -> Result<f64> {
    let opts = EigenOptions::default();
    let ua = top_eigenpairs(a, d, &opts)?.vectors;
    let uk = top_eigenpairs(k, d, &opts)?.vectors;
    let diff = &ua * ua.transpose() - &uk * uk.transpose();
    spectral_norm(&diff)
}

/// What the aligned, rescaled embedding is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Oracle {
    /// Empirical truncated feature map on `n_ref` reference draws.
    FeatureMap { n_ref: usize },
    /// The latent positions themselves; exact for the dot-product kernel with `d` equal to the latent dimension.
    LatentPositions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    InSample,
    OutOfSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub kernel: KernelSpec,
    pub distribution: LatentDistribution,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub schedule: SparsitySchedule,
    pub oracle: Oracle,
    /// New vertices drawn per replicate graph.
    pub fresh_points: usize,
    pub master_seed: u64,
    pub eta: f64,
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(&self.kernel, &self.distribution)?;
        self.kernel.kind.validate()?;
        self.distribution.validate()?;
        if self.d == 0 {
            return Err(Error::config("d must be positive"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_grid must be nonempty and strictly increasing"));
        }
        if self.n_grid[0] <= self.d {
            return Err(Error::config(format!("every n must exceed d = {}", self.d)));
        }
        if self.replicates == 0 || self.fresh_points == 0 {
            return Err(Error::config("replicates and fresh_points must be positive"));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::config(format!("eta must lie in (0, 1/2), got {}", self.eta)));
        }
        if matches!(self.oracle, Oracle::LatentPositions) && self.distribution.dim() != self.d {
            return Err(Error::config("the latent-position oracle needs d equal to the latent dimension"));
        }
        if let Oracle::FeatureMap { n_ref } = self.oracle {
            if n_ref <= self.d {
                return Err(Error::config("n_ref must exceed d"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub rho: f64,
    pub mean_error: f64,
    /// Standard deviation of the per-replicate mean errors.
    pub sd_error: f64,
    /// Replicates that produced an embedding.
    pub replicates: usize,
    /// Replicates dropped because a retained eigenvalue was not positive.
    pub skipped: usize,
    /// `error * gap^p * sqrt(n rho / (d log(n / eta)))` with `p = 3` out of sample and `p = 2` in sample.
    pub implied_constant: Option<f64>,
}

impl RatePoint {
    pub fn standard_error(&self) -> f64 {
        self.sd_error / (self.replicates as f64).sqrt()
    }
}

/// Mean aligned embedding error as a function of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub kind: CurveKind,
    pub points: Vec<RatePoint>,
    /// Grid values where every replicate was skipped.
    pub empty_points: Vec<usize>,
    pub kernel: KernelSpec,
    pub distribution: LatentDistribution,
    pub schedule: SparsitySchedule,
    pub oracle: Oracle,
    pub d: usize,
    pub spectral_gap: Option<f64>,
}

impl RateCurve {
    /// One row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,rho,mean_error,sd_error,replicates,skipped,implied_constant")?;
        for p in &self.points {
            let c = p.implied_constant.map_or(String::new(), |c| c.to_string());
            writeln!(w, "{},{},{},{},{},{},{c}", p.n, p.rho, p.mean_error, p.sd_error, p.replicates, p.skipped)?;
        }
        Ok(())
    }
}

/// Mean row distance `|source_i W - target_i|` for the Procrustes `W` of
/// `(in_source, in_target)`, over the in-sample rows and over `out_source`.
pub fn aligned_errors(
    in_source: &DMatrix<f64>,
    in_target: &DMatrix<f64>,
    out_source: &DMatrix<f64>,
    out_target: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let w = procrustes(in_source, in_target)?;
    let mean_dist = |s: &DMatrix<f64>, t: &DMatrix<f64>| {
        let a = s * &w;
        let total: f64 = (0..a.nrows()).map(|i| (a.row(i) - t.row(i)).norm()).sum();
        total / a.nrows() as f64
    };
    Ok((mean_dist(in_source, in_target), mean_dist(out_source, out_target)))
}

enum Replicate {
    Done { insample: f64, oos: f64 },
    Skipped,
}

fn run_replicate(
    cfg: &CurveConfig,
    map: Option<&EmpiricalFeatureMap>,
    n: usize,
    rho: f64,
    seed: u64,
) -> Result<Replicate> {
    let x = sample_latent(&cfg.distribution, n, derive_seed(seed, &[0]))?;
    let a = sample_graph(&cfg.kernel, &x, rho, derive_seed(seed, &[1]))?;
    let emb = match ase(&a, cfg.d) {
        Ok(e) => e,
        Err(Error::IndefiniteSpectrum { index, value }) => {
            log::warn!("skipping replicate at n = {n}: eigenvalue #{index} is {value:e}");
            return Ok(Replicate::Skipped);
        }
        Err(e) => return Err(e),
    };
    let fresh = sample_latent(&cfg.distribution, cfg.fresh_points, derive_seed(seed, &[2]))?;
    let lists = sample_oos_connection_lists(&fresh, &x, &cfg.kernel, rho, derive_seed(seed, &[3]))?;
    let t = oos_embed_lists(&emb, &lists)?;
    let scale = rho.sqrt().recip();
    let (in_target, out_target) = match map {
        Some(m) => (m.at_rows(&cfg.kernel, &x)?, m.at_rows(&cfg.kernel, &fresh)?),
        None => (x, fresh),
    };
    let (insample, oos) = aligned_errors(&(&emb.z * scale), &in_target, &(t * scale), &out_target)?;
    Ok(Replicate::Done { insample, oos })
}

fn summarize(
    kind: CurveKind,
    values: &[f64],
    n: usize,
    rho: f64,
    skipped: usize,
    gap: Option<f64>,
    cfg: &CurveConfig,
) -> RatePoint {
    let r = values.len();
    let mean = values.iter().sum::<f64>() / r as f64;
    let sd =
        if r > 1 { (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64).sqrt() } else { 0.0 };
    let power = match kind {
        CurveKind::OutOfSample => 3,
        CurveKind::InSample => 2,
    };
    let implied_constant = gap.map(|g| {
        let nf = n as f64;
        mean * g.powi(power) * (nf * rho / (cfg.d as f64 * (nf / cfg.eta).ln())).sqrt()
    });
    RatePoint { n, rho, mean_error: mean, sd_error: sd, replicates: r, skipped, implied_constant }
}

/// In-sample and out-of-sample curves from the same replicate graphs, so the
/// two can be compared pairwise. Returns `(in_sample, out_of_sample)`.
///
/// Each replicate samples a graph, embeds it, aligns `rho^{-1/2} Z` to the
/// oracle by Procrustes, and reuses that alignment for the new vertices.
pub fn error_curves(cfg: &CurveConfig) -> Result<(RateCurve, RateCurve)> {
    cfg.validate()?;
    let map = match cfg.oracle {
        Oracle::FeatureMap { n_ref } => {
            let x_ref = sample_latent(&cfg.distribution, n_ref, derive_seed(cfg.master_seed, &[u64::MAX]))?;
            Some(build_empirical_feature_map(&cfg.kernel, &x_ref, cfg.d)?)
        }
        Oracle::LatentPositions => None,
    };
    let gap = map.as_ref().map(|m| m.spectral_gap);
    let mut curves = [CurveKind::InSample, CurveKind::OutOfSample].map(|kind| RateCurve {
        kind,
        points: Vec::new(),
        empty_points: Vec::new(),
        kernel: cfg.kernel.clone(),
        distribution: cfg.distribution.clone(),
        schedule: cfg.schedule,
        oracle: cfg.oracle.clone(),
        d: cfg.d,
        spectral_gap: gap,
    });
    for &n in &cfg.n_grid {
        let rho = cfg.schedule.rho(n)?;
        let reps = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, map.as_ref(), n, rho, derive_seed(cfg.master_seed, &[n as u64, r as u64])))
            .collect::<Result<Vec<_>>>()?;
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for rep in &reps {
            if let Replicate::Done { insample, oos } = rep {
                ins.push(*insample);
                outs.push(*oos);
            }
        }
        let skipped = reps.len() - ins.len();
        if ins.is_empty() {
            for c in &mut curves {
                c.empty_points.push(n);
            }
            continue;
        }
        curves[0].points.push(summarize(CurveKind::InSample, &ins, n, rho, skipped, gap, cfg));
        curves[1].points.push(summarize(CurveKind::OutOfSample, &outs, n, rho, skipped, gap, cfg));
    }
    let [ins, outs] = curves;
    Ok((ins, outs))
}

/// Mean aligned error of out-of-sample embeddings against the oracle.
pub fn oos_error_curve(cfg: &CurveConfig) -> Result<RateCurve> {
    Ok(error_curves(cfg)?.1)
}

/// Mean aligned error of in-sample embedding rows against the oracle.
pub fn insample_error_curve(cfg: &CurveConfig) -> Result<RateCurve> {
    Ok(error_curves(cfg)?.0)
}

/// Least-squares slope of `log(mean_error)` on `log(n)` and its standard error.
pub fn rate_exponent(curve: &RateCurve) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        curve.points.iter().filter(|p| p.mean_error > 0.0).map(|p| ((p.n as f64).ln(), p.mean_error.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::arg(format!("rate fit needs at least 3 points with positive error, got {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(errors: &[(usize, f64)]) -> RateCurve {
        RateCurve {
            kind: CurveKind::OutOfSample,
            points: errors
                .iter()
                .map(|&(n, e)| RatePoint {
                    n,
                    rho: 1.0,
                    mean_error: e,
                    sd_error: 0.0,
                    replicates: 1,
                    skipped: 0,
                    implied_constant: None,
                })
                .collect(),
            empty_points: vec![],
            kernel: KernelSpec::dot_product(2).unwrap(),
            distribution: LatentDistribution::Dirichlet { alpha: vec![1.0; 3] },
            schedule: SparsitySchedule::Constant { c: 1.0 },
            oracle: Oracle::LatentPositions,
            d: 2,
            spectral_gap: None,
        }
    }

    #[test]
    fn bound_arithmetic() {
        let b = concentration_bound(1000, 1.0, 0.05);
        assert!((b - 2.0 * (1000.0f64 * 20000f64.ln()).sqrt()).abs() < 1e-12 * b);
        // 2 * sqrt(1000 * 9.90349) = 2 * 99.5163
        assert!((b - 199.0325).abs() < 1e-3, "{b}");
    }

    #[test]
    fn concentration_report_is_consistent() {
        let spec = KernelSpec::gaussian(1.0, 2).unwrap();
        let dist = LatentDistribution::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        let seeds: Vec<u64> = (0..6).collect();
        let rep = check_concentration(&spec, &dist, 120, 0.5, 0.05, &seeds).unwrap();
        assert_eq!(rep.trials, 6);
        assert_eq!(rep.satisfied, rep.observed <= rep.bound);
        assert!((0.0..=1.0).contains(&rep.violation_rate));
        assert!(rep.per_trial.iter().all(|t| t.observed > 0.0));
        let again = check_concentration(&spec, &dist, 120, 0.5, 0.05, &seeds).unwrap();
        assert_eq!(rep, again);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn concentration_argument_errors() {
        let spec = KernelSpec::gaussian(1.0, 1).unwrap();
        let dist = LatentDistribution::UniformBox { lo: vec![0.0], hi: vec![1.0] };
        assert!(check_concentration(&spec, &dist, 10, 1.0, 0.5, &[1]).is_err());
        assert!(check_concentration(&spec, &dist, 10, 0.01, 0.05, &[1]).is_err());
        assert!(check_concentration(&spec, &dist, 10, 1.0, 0.05, &[]).is_err());
        let wrong = KernelSpec::gaussian(1.0, 2).unwrap();
        assert!(check_concentration(&wrong, &dist, 10, 1.0, 0.05, &[1]).is_err());
    }

    #[test]
    fn empty_graph_meets_the_bound() {
        // At n * rho = 1 the graph is nearly empty and |A - K| is of order one.
        let spec = KernelSpec::gaussian(1.0, 1).unwrap();
        let dist = LatentDistribution::UniformBox { lo: vec![0.0], hi: vec![1.0] };
        let rep = check_concentration(&spec, &dist, 100, 0.01, 0.05, &[3]).unwrap();
        assert!(rep.satisfied);
    }

    #[test]
    fn exponent_of_exact_power_laws() {
        let ns = [250usize, 500, 1000, 2000, 4000];
        let c = synthetic(&ns.map(|n| (n, 3.0 / (n as f64).sqrt())));
        let (s, se) = rate_exponent(&c).unwrap();
        assert!((s + 0.5).abs() < 1e-10 && se < 1e-10);
        let (s, _) = rate_exponent(&synthetic(&ns.map(|n| (n, 0.7)))).unwrap();
        assert!(s.abs() < 1e-12);
        let (s, _) = rate_exponent(&synthetic(&ns.map(|n| (n, (n as f64).ln() / (n as f64).sqrt())))).unwrap();
        assert!(s > -0.5 && s < -0.3, "{s}");
        assert!(rate_exponent(&synthetic(&[(10, 1.0), (20, 0.5)])).is_err());
    }

    #[test]
    fn alignment_invariance() {
        let mut r = crate::seeds::rng(4);
        let s_in = DMatrix::from_fn(40, 3, |_, _| r.random::<f64>());
        let t_in = DMatrix::from_fn(40, 3, |_, _| r.random::<f64>());
        let s_out = DMatrix::from_fn(10, 3, |_, _| r.random::<f64>());
        let t_out = DMatrix::from_fn(10, 3, |_, _| r.random::<f64>());
        let q = DMatrix::from_fn(3, 3, |_, _| r.random::<f64>() - 0.5).qr().q();
        let (a, b) = aligned_errors(&s_in, &t_in, &s_out, &t_out).unwrap();
        let (c, d) = aligned_errors(&s_in, &(&t_in * &q), &s_out, &(&t_out * &q)).unwrap();
        assert!((a - c).abs() < 1e-8 && (b - d).abs() < 1e-8);
    }

    fn rdpg_config(n_grid: Vec<usize>, replicates: usize) -> CurveConfig {
        CurveConfig {
            kernel: KernelSpec::dot_product(2).unwrap(),
            distribution: LatentDistribution::Dirichlet { alpha: vec![1.0, 1.0, 1.0] },
            d: 2,
            n_grid,
            replicates,
            schedule: SparsitySchedule::Constant { c: 1.0 },
            oracle: Oracle::LatentPositions,
            fresh_points: 20,
            master_seed: 17,
            eta: DEFAULT_ETA,
        }
    }

    #[test]
    fn single_point_grid_refuses_rate_fit() {
        let (ins, outs) = error_curves(&rdpg_config(vec![150], 2)).unwrap();
        assert_eq!(ins.points.len(), 1);
        assert_eq!(outs.points.len(), 1);
        assert!(rate_exponent(&outs).is_err());
        assert!(outs.points[0].mean_error > 0.0);
    }

    #[test]
    fn curves_are_deterministic() {
        let cfg = rdpg_config(vec![100, 200], 3);
        assert_eq!(error_curves(&cfg).unwrap(), error_curves(&cfg).unwrap());
    }

    #[test]
    fn feature_map_oracle_curve_runs() {
        let cfg = CurveConfig {
            kernel: KernelSpec::gaussian(1.0, 2).unwrap(),
            distribution: LatentDistribution::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            d: 2,
            n_grid: vec![100, 200],
            replicates: 2,
            schedule: SparsitySchedule::Constant { c: 1.0 },
            oracle: Oracle::FeatureMap { n_ref: 300 },
            fresh_points: 10,
            master_seed: 3,
            eta: DEFAULT_ETA,
        };
        let (ins, outs) = error_curves(&cfg).unwrap();
        assert!(outs.spectral_gap.unwrap() > 0.0);
        assert!(ins.points.iter().all(|p| p.implied_constant.is_some()));
        let mut buf = Vec::new();
        outs.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn config_validation() {
        let mut cfg = rdpg_config(vec![200, 100], 1);
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![100];
        cfg.d = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn projection_difference_is_small_for_dense_rdpg() {
        let x = sample_latent(&LatentDistribution::Dirichlet { alpha: vec![1.0; 3] }, 200, 1).unwrap();
        let k = &x * x.transpose();
        let a = sample_adjacency(&k, 2).unwrap().to_dense();
        let gap = projection_difference(&a, &k, 2).unwrap();
        assert!(gap > 0.0 && gap < 1.0);
        assert!(projection_difference(&k, &k, 2).unwrap() < 1e-8);
    }

    #[test]
    fn doubling_replicates_shrinks_standard_error_by_root_two() {
        let mut ratios = Vec::new();
        for seed in 0..6 {
            let mut small = rdpg_config(vec![120], 16);
            small.master_seed = seed;
            let mut large = small.clone();
            large.replicates = 32;
            let se = |c: &CurveConfig| error_curves(c).unwrap().1.points[0].standard_error();
            ratios.push(se(&large) / se(&small));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let want = std::f64::consts::FRAC_1_SQRT_2;
        assert!((mean - want).abs() <= 0.3 * want, "{ratios:?}");
    }
}
