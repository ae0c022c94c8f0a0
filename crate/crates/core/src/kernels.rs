//! Link functions of the latent position model.
//!
//! Every kernel here takes values in `[0, 1]` on its declared domain, so that
//! `rho * kappa(x, y)` is a valid edge probability. Kernels that are unbounded
//! in their textbook form (exponential, binomial, inverse multiquadric) are
//! divided by their maximum over the domain, which keeps them positive
//! definite and universal.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, row_major, sq_dist};
use crate::spectral::{top_eigenpairs, EigenOptions};

const SIMPLEX_SLACK: f64 = 1e-12;
/// Binomial kernel inputs must satisfy `<x, y> <= 1 - BINOMIAL_MARGIN`.
pub const BINOMIAL_MARGIN: f64 = 1e-6;

fn unit_radius() -> f64 {
    1.0
}

fn half_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `<x, y>` on `{x >= 0, sum(x) <= 1}`.
    DotProduct,
    /// `exp(-|x - y|^2 / sigma^2)`.
    Gaussian { sigma: f64 },
    /// `exp(<x, y> - r^2)` on the ball `|x| <= r`.
    Exponential {
        #[serde(default = "unit_radius")]
        radius: f64,
    },
    /// `((1 - r^2) / (1 - <x, y>))^alpha` on the ball `|x| <= r < 1`.
    Binomial {
        alpha: f64,
        #[serde(default = "half_radius")]
        radius: f64,
    },
    /// `(1 + |x - y|^2 / c^2)^(-beta)`.
    InverseMultiquadric { c: f64, beta: f64 },
}

impl KernelKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelKind::DotProduct => true,
            KernelKind::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            KernelKind::Exponential { radius } => radius > 0.0 && radius.is_finite(),
            KernelKind::Binomial { alpha, radius } => {
                alpha > 0.0 && radius > 0.0 && radius * radius <= 1.0 - BINOMIAL_MARGIN
            }
            KernelKind::InverseMultiquadric { c, beta } => c != 0.0 && c.is_finite() && beta > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid kernel parameters: {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::DotProduct => "dot-product",
            KernelKind::Gaussian { .. } => "gaussian",
            KernelKind::Exponential { .. } => "exponential",
            KernelKind::Binomial { .. } => "binomial",
            KernelKind::InverseMultiquadric { .. } => "inverse-multiquadric",
        }
    }
}

/// A kernel together with the ambient dimension of its domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, dim: usize) -> Result<Self> {
        kind.validate()?;
        if dim == 0 {
            return Err(Error::config("kernel domain dimension must be positive"));
        }
        Ok(Self { kind, dim })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Gaussian { sigma }, dim)
    }

    pub fn dot_product(dim: usize) -> Result<Self> {
        Self::new(KernelKind::DotProduct, dim)
    }

    /// Checks that `x` has the right length and lies in the kernel's domain.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::arg(format!("point has dimension {}, kernel expects {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        match self.kind {
            KernelKind::DotProduct => {
                let sum: f64 = x.iter().sum();
                if x.iter().any(|&v| v < 0.0) || sum > 1.0 + SIMPLEX_SLACK {
                    return Err(Error::Domain(format!(
                        "dot-product kernel requires a point of the unit simplex, got {x:?}"
                    )));
                }
            }
            KernelKind::Exponential { radius } | KernelKind::Binomial { radius, .. } => {
                if dot(x, x).sqrt() > radius * (1.0 + SIMPLEX_SLACK) {
                    return Err(Error::Domain(format!("{} kernel requires |x| <= {radius}", self.kind.name())));
                }
            }
            KernelKind::Gaussian { .. } | KernelKind::InverseMultiquadric { .. } => {}
        }
        Ok(())
    }

    /// Evaluates the kernel without domain checks. Callers must have run
    /// [`KernelSpec::check_point`] on both arguments.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let v = match self.kind {
            KernelKind::DotProduct => dot(x, y),
            KernelKind::Gaussian { sigma } => (-sq_dist(x, y) / (sigma * sigma)).exp(),
            KernelKind::Exponential { radius } => (dot(x, y) - radius * radius).exp(),
            KernelKind::Binomial { alpha, radius } => {
                let ip = dot(x, y).min(1.0 - BINOMIAL_MARGIN);
                ((1.0 - radius * radius) / (1.0 - ip)).powf(alpha)
            }
            KernelKind::InverseMultiquadric { c, beta } => (1.0 + sq_dist(x, y) / (c * c)).powf(-beta),
        };
        v.clamp(0.0, 1.0)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn check_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::arg(format!("positions have {} columns, kernel expects {}", x.ncols(), self.dim)));
        }
        let flat = row_major(x);
        for row in flat.chunks(self.dim) {
            self.check_point(row)?;
        }
        Ok(flat)
    }
}

/// `kappa(x, y)` with argument and domain checks.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("rho must lie in (0, 1], got {rho}")))
    }
}

/// `K_ij = rho * kappa(X_i, X_j)` for all `i, j`, including the diagonal.
pub fn kernel_matrix(spec: &KernelSpec, x: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::arg("kernel matrix needs at least one point"));
    }
    let p = spec.dim;
    let flat = spec.check_rows(x)?;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &flat[i * p..(i + 1) * p];
            (i..n).map(|j| rho * spec.eval_unchecked(xi, &flat[j * p..(j + 1) * p])).collect()
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `rho * kappa(new_i, in_j)` for every new point `i` and in-sample point `j`.
pub fn cross_kernel(
    spec: &KernelSpec,
    new_points: &DMatrix<f64>,
    in_sample: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let p = spec.dim;
    let a = spec.check_rows(new_points)?;
    let b = spec.check_rows(in_sample)?;
    let (m, n) = (new_points.nrows(), in_sample.nrows());
    Ok(DMatrix::from_fn(m, n, |i, j| rho * spec.eval_unchecked(&a[i * p..(i + 1) * p], &b[j * p..(j + 1) * p])))
}

/// Nystrom-extended estimate of the truncated Mercer feature map.
///
/// Holds the top eigenpairs of `(kappa(X_i, X_j)) / N` on a reference sample.
/// `feature_map_at` extends them to arbitrary points through
/// `Phi_s(x) = (lambda_s N)^{-1/2} sum_i kappa(x, X_i) u_i^(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFeatureMap {
    pub reference_positions: DMatrix<f64>,
    /// Leading `dim` eigenvalues of `K_ref / N`, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// `N x dim`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    pub dim: usize,
    /// The `(dim + 1)`-th eigenvalue, kept for the gap.
    pub next_eigenvalue: f64,
    pub spectral_gap: f64,
}

pub fn build_empirical_feature_map(spec: &KernelSpec, x_ref: &DMatrix<f64>, d: usize) -> Result<EmpiricalFeatureMap> {
    let n_ref = x_ref.nrows();
    if d == 0 || n_ref < d + 1 {
        return Err(Error::arg(format!(
            "feature map of dimension {d} needs at least {} reference points, got {n_ref}",
            d + 1
        )));
    }
    let mut k = kernel_matrix(spec, x_ref, 1.0)?;
    k /= n_ref as f64;
    let pairs = top_eigenpairs(&k, d + 1, &EigenOptions::default())?;
    let lambda_d = pairs.values[d - 1];
    let next = pairs.values[d];
    let gap = lambda_d - next;
    if lambda_d <= 0.0 || gap <= 1e-10 {
        return Err(Error::DegenerateSpectrum(format!(
            "lambda_{d} = {lambda_d:e}, lambda_{} = {next:e}; feature map undefined",
            d + 1
        )));
    }
    let eigenvectors = pairs.vectors.columns(0, d).into_owned();
    Ok(EmpiricalFeatureMap {
        reference_positions: x_ref.clone(),
        eigenvalues: pairs.values[..d].to_vec(),
        eigenvectors,
        dim: d,
        next_eigenvalue: next,
        spectral_gap: gap,
    })
}

impl EmpiricalFeatureMap {
    pub fn n_ref(&self) -> usize {
        self.reference_positions.nrows()
    }

    pub fn at(&self, spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
        spec.check_point(x)?;
        if self.reference_positions.ncols() != spec.dim {
            return Err(Error::arg("feature map was built for a different domain dimension"));
        }
        let n = self.n_ref();
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let r: Vec<f64> = self.reference_positions.row(i).iter().copied().collect();
                spec.eval_unchecked(x, &r)
            })
            .collect();
        Ok((0..self.dim)
            .map(|s| {
                let u = self.eigenvectors.column(s);
                let acc = dot(&weights, u.as_slice());
                acc / (self.eigenvalues[s] * n as f64).sqrt()
            })
            .collect())
    }

    /// Evaluates the map at every row of `x`, returning an `m x dim` matrix.
    pub fn at_rows(&self, spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = cross_kernel(spec, x, &self.reference_positions, 1.0)?;
        let mut out = &k * &self.eigenvectors;
        let n = self.n_ref() as f64;
        for (s, mut col) in out.column_iter_mut().enumerate() {
            col /= (self.eigenvalues[s] * n).sqrt();
        }
        Ok(out)
    }

    /// Writes the bundle: one row of eigenvalues (with the `(d+1)`-th last),
    /// then the `N` eigenvector rows, then the `N` reference positions.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut first: Vec<String> = self.eigenvalues.iter().map(|v| v.to_string()).collect();
        first.push(self.next_eigenvalue.to_string());
        writeln!(w, "{}", first.join(","))?;
        for m in [&self.eigenvectors, &self.reference_positions] {
            for row in m.row_iter() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Ingestion { line: lineno + 1, message: e.to_string() })?;
            rows.push(row);
        }
        if rows.len() < 3 || !(rows.len() - 1).is_multiple_of(2) {
            return Err(Error::Ingestion { line: rows.len(), message: "truncated feature-map bundle".into() });
        }
        let header = &rows[0];
        let d = header.len() - 1;
        let n = (rows.len() - 1) / 2;
        let p = rows[n + 1].len();
        if d == 0 || rows[1..=n].iter().any(|r| r.len() != d) || rows[n + 1..].iter().any(|r| r.len() != p) {
            return Err(Error::Ingestion { line: 1, message: "ragged feature-map bundle".into() });
        }
        let eigenvectors = DMatrix::from_fn(n, d, |i, j| rows[1 + i][j]);
        let reference_positions = DMatrix::from_fn(n, p, |i, j| rows[1 + n + i][j]);
        let eigenvalues = header[..d].to_vec();
        let next_eigenvalue = header[d];
        Ok(Self {
            reference_positions,
            spectral_gap: eigenvalues[d - 1] - next_eigenvalue,
            eigenvalues,
            eigenvectors,
            dim: d,
            next_eigenvalue,
        })
    }
}

pub fn feature_map_at(map: &EmpiricalFeatureMap, spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    map.at(spec, x)
}
