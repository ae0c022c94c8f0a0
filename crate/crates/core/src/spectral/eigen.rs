use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, dot, fix_column_signs};
use crate::lpgraph::Adjacency;

/// Symmetric linear operator that can be applied to vectors.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = M x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn to_dense(&self) -> DMatrix<f64>;

    fn check_symmetric(&self) -> Result<()> {
        Ok(())
    }

    /// Whether the operator is a graph adjacency matrix (as opposed to a real kernel matrix).
    fn is_adjacency(&self) -> bool {
        false
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        // Symmetric, so row i equals column i, which is contiguous.
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = dot(self.column(i).as_slice(), x);
        });
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }

    fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::arg(format!("matrix is {}x{}, expected square", self.nrows(), self.ncols())));
        }
        let worst = asymmetry(self);
        if worst > 1e-12 {
            return Err(Error::arg(format!("matrix is not symmetric (max asymmetry {worst:e})")));
        }
        Ok(())
    }
}

impl SymmetricOperator for Adjacency {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        Adjacency::to_dense(self)
    }

    fn is_adjacency(&self) -> bool {
        true
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        (**self).to_dense()
    }
    fn check_symmetric(&self) -> Result<()> {
        (**self).check_symmetric()
    }
    fn is_adjacency(&self) -> bool {
        (**self).is_adjacency()
    }
}

/// `-M`, used to reach the bottom of the spectrum with a top-k solver.
pub struct Negated<M>(pub M);

impl<M: SymmetricOperator> SymmetricOperator for Negated<M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
        for v in y.iter_mut() {
            *v = -*v;
        }
    }
    fn to_dense(&self) -> DMatrix<f64> {
        -self.0.to_dense()
    }
    fn check_symmetric(&self) -> Result<()> {
        self.0.check_symmetric()
    }
}

/// Leading eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Nonincreasing.
    pub values: Vec<f64>,
    /// `n x d`, orthonormal columns, sign-normalised.
    pub vectors: DMatrix<f64>,
    /// Longer list of leading eigenvalues when the solver produced one, for scree plots.
    pub full_spectrum_head: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Problems of at most this size go to the dense solver.
    pub dense_max: usize,
    /// Lanczos stops once every wanted residual is below `tol * |M|`.
    pub tol: f64,
    /// Residual level still accepted when the restart budget runs out.
    pub accept_tol: f64,
    /// Restart cycles allowed per wanted eigenpair.
    pub restarts_per_pair: usize,
    /// Number of leading eigenvalues to report in `full_spectrum_head`.
    pub head: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { dense_max: 300, tol: 1e-10, accept_tol: 1e-6, restarts_per_pair: 50, head: 0 }
    }
}

/// All eigenvalues of a dense symmetric matrix, nonincreasing.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn dense_top(m: DMatrix<f64>, d: usize, head: usize) -> EigenPairs {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::from_fn(n, d, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_column_signs(&mut vectors);
    let head = (head > 0).then(|| order[..head.min(n)].iter().map(|&k| eig.eigenvalues[k]).collect());
    EigenPairs { values, vectors, full_spectrum_head: head }
}

/// The `d` algebraically largest eigenpairs of `m`.
///
/// Small problems use a dense tridiagonal QL/QR solver; larger ones use
/// thick-restart Lanczos with full reorthogonalisation.
pub fn top_eigenpairs<M: SymmetricOperator>(m: &M, d: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    m.check_symmetric()?;
    let n = m.dim();
    if d == 0 || d > n {
        return Err(Error::arg(format!("requested {d} eigenpairs of a {n}x{n} matrix")));
    }
    let want = d.max(opts.head.min(n));
    if n <= opts.dense_max || 2 * want + 20 >= n {
        return Ok(dense_top(m.to_dense(), d, opts.head));
    }
    let (values, vectors) = lanczos_top(m, want, opts)?;
    let head = (opts.head > 0).then(|| values[..opts.head.min(want)].to_vec());
    let mut vectors = vectors.columns(0, d).into_owned();
    fix_column_signs(&mut vectors);
    Ok(EigenPairs { values: values[..d].to_vec(), vectors, full_spectrum_head: head })
}

fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], coef: &mut [f64]) {
    // Two passes of classical Gram-Schmidt keep the basis orthonormal to working precision.
    for pass in 0..2 {
        let c: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        for (v, &ci) in basis.iter().zip(&c) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= ci * vi;
            }
        }
        for (k, ci) in c.into_iter().enumerate() {
            if pass == 0 {
                coef[k] = ci;
            } else {
                coef[k] += ci;
            }
        }
    }
}

fn random_unit_orthogonal(basis: &[Vec<f64>], n: usize, salt: u64) -> Option<Vec<f64>> {
    let mut r = crate::seeds::rng(0x1a2c_05e5 ^ salt);
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..n).map(|_| r.random::<f64>() - 0.5).collect();
        let mut scratch = vec![0.0; basis.len()];
        orthogonalize(basis, &mut w, &mut scratch);
        let nrm = dot(&w, &w).sqrt();
        if nrm > 1e-8 {
            w.iter_mut().for_each(|v| *v /= nrm);
            return Some(w);
        }
    }
    None
}

/// Thick-restart Lanczos for the `k` largest eigenpairs. Returns values
/// (nonincreasing) and an `n x k` matrix of Ritz vectors.
pub(crate) fn lanczos_top<M: SymmetricOperator>(
    m: &M,
    k: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.dim();
    let m_max = (2 * k + 20).max(k + 32).min(n);
    let keep_target = (k + (m_max - k) / 2).min(m_max - 1);
    let max_restarts = opts.restarts_per_pair * k;

    let mut basis: Vec<Vec<f64>> = vec![random_unit_orthogonal(&[], n, 0).expect("nonempty space")];
    let mut h = DMatrix::<f64>::zeros(m_max, m_max);
    let mut expanded = 0usize;
    let mut w = vec![0.0; n];
    let mut restarts = 0usize;

    loop {
        let mut beta_last = 0.0;
        while expanded < m_max {
            let c = expanded;
            m.apply(&basis[c], &mut w);
            let mut coef = vec![0.0; c + 1];
            orthogonalize(&basis[..=c], &mut w, &mut coef);
            for (i, &ci) in coef.iter().enumerate() {
                h[(i, c)] = ci;
                h[(c, i)] = ci;
            }
            expanded += 1;
            if expanded == n {
                beta_last = 0.0;
                break;
            }
            let beta = dot(&w, &w).sqrt();
            let scale = h.view((0, 0), (expanded, expanded)).amax().max(f64::MIN_POSITIVE);
            if beta <= 1e-12 * scale {
                // Invariant subspace found; continue in a fresh direction with no coupling.
                beta_last = 0.0;
                match random_unit_orthogonal(&basis, n, expanded as u64) {
                    Some(v) => basis.push(v),
                    None => break,
                }
            } else {
                beta_last = beta;
                basis.push(w.iter().map(|v| v / beta).collect());
            }
        }

        let hs = h.view((0, 0), (expanded, expanded)).into_owned();
        let eig = SymmetricEigen::new(hs);
        let mut order: Vec<usize> = (0..expanded).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        let norm_est = theta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let residual = |j: usize| (beta_last * eig.eigenvectors[(expanded - 1, order[j])]).abs();
        let kk = k.min(expanded);
        let worst = (0..kk).map(residual).fold(0.0f64, f64::max);
        let done = worst <= opts.tol * norm_est || expanded == n || worst == 0.0;
        let exhausted = restarts >= max_restarts;
        if done || exhausted {
            if !done && worst > opts.accept_tol * norm_est {
                return Err(Error::Numerical(format!(
                    "Lanczos did not converge after {restarts} restarts: worst residual {worst:e}, |M| ~ {norm_est:e}, k = {k}, n = {n}"
                )));
            }
            if !done {
                log::warn!("Lanczos stopped at residual {worst:e} (|M| ~ {norm_est:e}) after {restarts} restarts");
            }
            if kk < k {
                return Err(Error::Numerical(format!("Krylov space exhausted at dimension {expanded} < {k}")));
            }
            let mut vectors = DMatrix::zeros(n, k);
            for j in 0..k {
                let s = eig.eigenvectors.column(order[j]);
                let mut col = vec![0.0; n];
                for (i, v) in basis[..expanded].iter().enumerate() {
                    let si = s[i];
                    for (c, vi) in col.iter_mut().zip(v) {
                        *c += si * vi;
                    }
                }
                vectors.set_column(j, &nalgebra::DVector::from_vec(col));
            }
            return Ok((theta[..k].to_vec(), vectors));
        }

        // Thick restart: keep the leading Ritz vectors and the pending residual direction.
        restarts += 1;
        let keep = keep_target.min(expanded - 1);
        let pending = if basis.len() > expanded { Some(basis[expanded].clone()) } else { None };
        let mut new_basis: Vec<Vec<f64>> = (0..keep)
            .into_par_iter()
            .map(|j| {
                let s = eig.eigenvectors.column(order[j]);
                let mut col = vec![0.0; n];
                for (i, v) in basis[..expanded].iter().enumerate() {
                    let si = s[i];
                    for (c, vi) in col.iter_mut().zip(v) {
                        *c += si * vi;
                    }
                }
                col
            })
            .collect();
        h.fill(0.0);
        for (j, &t) in theta[..keep].iter().enumerate() {
            h[(j, j)] = t;
        }
        let next = match pending {
            Some(mut v) => {
                // Re-orthogonalise against the rotated block to wash out rounding.
                let mut scratch = vec![0.0; keep];
                orthogonalize(&new_basis, &mut v, &mut scratch);
                let nrm = dot(&v, &v).sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
                v
            }
            None => random_unit_orthogonal(&new_basis, n, restarts as u64 + 0x5151)
                .ok_or_else(|| Error::Numerical("could not extend Krylov basis".into()))?,
        };
        new_basis.push(next);
        basis = new_basis;
        expanded = keep;
    }
}

/// `max |lambda(M)|` for symmetric `M`.
pub fn spectral_norm<M: SymmetricOperator>(m: &M) -> Result<f64> {
    spectral_norm_with(m, &EigenOptions { tol: 1e-9, ..EigenOptions::default() })
}

pub fn spectral_norm_with<M: SymmetricOperator>(m: &M, opts: &EigenOptions) -> Result<f64> {
    m.check_symmetric()?;
    let n = m.dim();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= opts.dense_max {
        let ev = symmetric_eigenvalues(&m.to_dense());
        return Ok(ev.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    let top = lanczos_top(m, 1, opts)?.0[0];
    let bottom = -lanczos_top(&Negated(m), 1, opts)?.0[0];
    Ok(top.abs().max(bottom.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = crate::seeds::rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_and_diagonal() {
        let p = top_eigenpairs(&DMatrix::<f64>::identity(3, 3), 2, &EigenOptions::default()).unwrap();
        assert_eq!(p.values, vec![1.0, 1.0]);
        let g = p.vectors.transpose() * &p.vectors;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-12);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let p = top_eigenpairs(&d, 2, &EigenOptions::default()).unwrap();
        assert_eq!(p.values, vec![3.0, 2.0]);
        assert!((p.vectors[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((p.vectors[(1, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(matches!(top_eigenpairs(&m, 1, &EigenOptions::default()), Err(Error::Argument(_))));
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(top_eigenpairs(&m, 0, &EigenOptions::default()).is_err());
        assert!(top_eigenpairs(&m, 4, &EigenOptions::default()).is_err());
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let m = random_symmetric(400, 3);
        let dense = top_eigenpairs(&m, 6, &EigenOptions { dense_max: 1000, ..Default::default() }).unwrap();
        let lz = top_eigenpairs(&m, 6, &EigenOptions { dense_max: 10, ..Default::default() }).unwrap();
        for (a, b) in dense.values.iter().zip(&lz.values) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let mnorm = spectral_norm(&m).unwrap();
        for j in 0..6 {
            let v = lz.vectors.column(j);
            let r = &m * v - v * lz.values[j];
            assert!(r.norm() <= 1e-6 * mnorm);
            let align = dense.vectors.column(j).dot(&v).abs();
            assert!((align - 1.0).abs() < 1e-8);
        }
        let g = lz.vectors.transpose() * &lz.vectors;
        assert!((g - DMatrix::identity(6, 6)).norm() < 1e-8);
    }

    #[test]
    fn lanczos_handles_low_rank() {
        // rank-2 PSD matrix: third eigenvalue is zero and the Krylov space closes early.
        let mut r = crate::seeds::rng(4);
        let x = DMatrix::from_fn(500, 2, |_, _| r.random::<f64>());
        let m = &x * x.transpose();
        let p = top_eigenpairs(&m, 3, &EigenOptions { dense_max: 10, ..Default::default() }).unwrap();
        let dense = symmetric_eigenvalues(&m);
        assert!((p.values[0] - dense[0]).abs() < 1e-8 * dense[0]);
        assert!((p.values[1] - dense[1]).abs() < 1e-8 * dense[0]);
        assert!(p.values[2].abs() < 1e-8 * dense[0]);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&DMatrix::<f64>::zeros(4, 4)).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-5.0, 3.0]));
        assert_eq!(spectral_norm(&d).unwrap(), 5.0);
        let m = random_symmetric(600, 5);
        let ev = symmetric_eigenvalues(&m);
        let exact = ev[0].abs().max(ev[ev.len() - 1].abs());
        let est = spectral_norm_with(&m, &EigenOptions { dense_max: 10, tol: 1e-9, ..Default::default() }).unwrap();
        assert!((est - exact).abs() <= 1e-6 * exact, "{est} vs {exact}");
        let z = DMatrix::<f64>::zeros(400, 400);
        assert_eq!(spectral_norm_with(&z, &EigenOptions { dense_max: 10, ..Default::default() }).unwrap(), 0.0);
    }
}
