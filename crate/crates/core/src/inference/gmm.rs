use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{derive_seed, rng};

/// Gaussian mixture with full covariances fitted by EM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// `-2 log L + p log m`.
    pub bic: f64,
    pub log_likelihood: f64,
    /// Most probable component per point, lower index on ties.
    pub assignments: Vec<usize>,
    /// Mean per-point log-likelihood after each EM iteration of the selected restart.
    pub ll_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GmmOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the mean per-point log-likelihood gains less than this.
    pub tol: f64,
    /// Covariance eigenvalues are kept at or above `floor_scale * trace(S) / d` for the data covariance `S`.
    pub floor_scale: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { restarts: 5, max_iter: 1000, tol: 1e-8, floor_scale: 1e-6 }
    }
}

fn free_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

/// Fits every `K` in `k_range` and keeps the lowest BIC, the smaller `K` on ties.
pub fn fit_gmm(z: &DMatrix<f64>, k_range: RangeInclusive<usize>, seed: u64) -> Result<GmmModel> {
    fit_gmm_with(z, k_range, seed, &GmmOptions::default())
}

pub fn fit_gmm_with(
    z: &DMatrix<f64>,
    k_range: RangeInclusive<usize>,
    seed: u64,
    opts: &GmmOptions,
) -> Result<GmmModel> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || lo > hi {
        return Err(Error::arg(format!("invalid component range {lo}..={hi}")));
    }
    let (m, d) = z.shape();
    if m < hi * (d + 1) {
        log::warn!("{m} points may be too few for {hi} components in dimension {d}");
    }
    let mut best: Option<GmmModel> = None;
    for k in lo..=hi {
        let model = fit_gmm_k(z, k, seed, opts)?;
        if best.as_ref().is_none_or(|b| model.bic < b.bic) {
            best = Some(model);
        }
    }
    Ok(best.expect("nonempty range"))
}

/// Best of `opts.restarts` EM runs with `k` components.
pub fn fit_gmm_k(z: &DMatrix<f64>, k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmModel> {
    let (m, d) = z.shape();
    if k == 0 || m < k {
        return Err(Error::arg(format!("cannot fit {k} components to {m} points")));
    }
    if d == 0 {
        return Err(Error::arg("data has no columns"));
    }
    let mean = z.row_mean();
    let centered = DMatrix::from_fn(m, d, |i, j| z[(i, j)] - mean[j]);
    let total_var = (centered.transpose() * &centered).trace() / m as f64;
    let floor = (opts.floor_scale * total_var / d as f64).max(1e-300);

    let runs: Vec<Result<Fit>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| em(z, k, derive_seed(seed, &[k as u64, r as u64]), floor, opts))
        .collect();
    let mut best: Option<Fit> = None;
    let mut failures = Vec::new();
    for run in runs {
        match run {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.ll > b.ll) {
                    best = Some(f);
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    let fit =
        best.ok_or_else(|| Error::Clustering(format!("all EM restarts failed for K = {k}: {}", failures.join("; "))))?;
    let p = free_parameters(k, d) as f64;
    let assignments = (0..m)
        .map(|i| {
            let row = &fit.resp[i * k..(i + 1) * k];
            let mut b = 0;
            for c in 1..k {
                if row[c] > row[b] {
                    b = c;
                }
            }
            b
        })
        .collect();
    Ok(GmmModel {
        k,
        weights: fit.weights,
        means: fit.means,
        covariances: fit.covs,
        bic: -2.0 * fit.ll + p * (m as f64).ln(),
        log_likelihood: fit.ll,
        assignments,
        ll_trace: fit.trace,
    })
}

struct Fit {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    /// Row-major `m x k` responsibilities.
    resp: Vec<f64>,
    ll: f64,
    trace: Vec<f64>,
}

fn kmeans_pp<R: Rng>(z: &DMatrix<f64>, k: usize, r: &mut R) -> Vec<DVector<f64>> {
    let m = z.nrows();
    let row = |i: usize| z.row(i).transpose();
    let mut centers = vec![row(r.random_range(0..m))];
    let mut dist: Vec<f64> = (0..m).map(|i| (row(i) - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            r.random_range(0..m)
        };
        let c = row(pick);
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min((row(i) - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// Covariance maximising the likelihood subject to every eigenvalue being at least `floor`.
fn clip_covariance(s: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (&s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return s;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Log densities `log N(z_i | mu, cov)` for every row.
fn log_densities(z: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = z.ncols();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("component covariance is not positive definite".into()))?;
    let l = chol.l();
    let log_det: f64 = 2.0 * (0..d).map(|j| l[(j, j)].ln()).sum::<f64>();
    let c = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
    Ok((0..z.nrows())
        .map(|i| {
            let diff = z.row(i).transpose() - mu;
            let y = l.solve_lower_triangular(&diff).expect("nonsingular factor");
            c - 0.5 * y.norm_squared()
        })
        .collect())
}

fn em(z: &DMatrix<f64>, k: usize, seed: u64, floor: f64, opts: &GmmOptions) -> Result<Fit> {
    let (m, d) = z.shape();
    let mut r = rng(seed);
    let mut means = kmeans_pp(z, k, &mut r);
    let mean = z.row_mean().transpose();
    let global = DMatrix::from_fn(d, d, |a, b| {
        (0..m).map(|i| (z[(i, a)] - mean[a]) * (z[(i, b)] - mean[b])).sum::<f64>() / m as f64
    });
    let mut covs = vec![clip_covariance(global, floor); k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; m * k];
    let mut trace = Vec::new();
    let mut ll = f64::NEG_INFINITY;

    for iter in 0..opts.max_iter {
        // E-step.
        let dens = (0..k).map(|c| log_densities(z, &means[c], &covs[c])).collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for i in 0..m {
            let row = &mut resp[i * k..(i + 1) * k];
            let mut top = f64::NEG_INFINITY;
            for c in 0..k {
                row[c] = weights[c].ln() + dens[c][i];
                top = top.max(row[c]);
            }
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - top).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
            total += top + s.ln();
        }
        let new_ll = total;
        trace.push(new_ll / m as f64);
        let gain = (new_ll - ll) / m as f64;
        ll = new_ll;
        if gain.is_finite() && gain < opts.tol {
            break;
        }
        if iter + 1 == opts.max_iter {
            log::warn!("EM hit the iteration cap of {} with K = {k}", opts.max_iter);
            break;
        }

        // M-step.
        for c in 0..k {
            let nk: f64 = (0..m).map(|i| resp[i * k + c]).sum();
            if !(nk > 1e-8 * m as f64) {
                return Err(Error::Clustering(format!("component {c} of {k} became empty")));
            }
            weights[c] = nk / m as f64;
            let mut mu = DVector::zeros(d);
            for i in 0..m {
                mu += z.row(i).transpose() * resp[i * k + c];
            }
            mu /= nk;
            let mut s = DMatrix::zeros(d, d);
            for i in 0..m {
                let diff = z.row(i).transpose() - &mu;
                s += &diff * diff.transpose() * resp[i * k + c];
            }
            s /= nk;
            covs[c] = clip_covariance(s, floor);
            means[c] = mu;
        }
    }
    Ok(Fit { weights, means, covs, resp, ll, trace })
}
