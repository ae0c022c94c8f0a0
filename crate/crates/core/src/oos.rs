//! Out-of-sample extension `T(x) = Z^+ xi` and Nyström sketching.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::lpgraph::Adjacency;
use crate::spectral::{ase, Embedding};

/// Thin QR factorisation of an `n x d` factor, reused across right-hand sides.
///
/// Solutions are `R^{-1} Q^T b`. Every solve accumulates `Q^T b` in index
/// order, so the dense, batched and sparse-indicator entry points agree bit
/// for bit.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    n: usize,
    d: usize,
    /// Column-major `n x d`.
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(z: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = z.shape();
        if d == 0 || n < d {
            return Err(Error::arg(format!("least squares needs n >= d >= 1, got {n} x {d}")));
        }
        let qr = z.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let rmax = (0..d).map(|k| r[(k, k)].abs()).fold(0.0f64, f64::max);
        if let Some(k) = (0..d).find(|&k| !(r[(k, k)].abs() > 1e-12 * rmax)) {
            return Err(Error::Numerical(format!(
                "embedding factor is rank deficient: |R[{k},{k}]| = {:e} against max {rmax:e}",
                r[(k, k)].abs()
            )));
        }
        Ok(Self { n, d, q, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn q_col(&self, j: usize) -> &[f64] {
        &self.q.as_slice()[j * self.n..(j + 1) * self.n]
    }

    fn back_substitute(&self, mut c: Vec<f64>) -> Vec<f64> {
        for i in (0..self.d).rev() {
            let mut s = c[i];
            for k in (i + 1)..self.d {
                s -= self.r[(i, k)] * c[k];
            }
            c[i] = s / self.r[(i, i)];
        }
        c
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::arg(format!("right-hand side has length {}, expected {}", b.len(), self.n)));
        }
        let c = (0..self.d).map(|j| dot(self.q_col(j), b)).collect();
        Ok(self.back_substitute(c))
    }

    /// Solve for the 0/1 vector whose ones sit at `support` (strictly increasing).
    pub fn solve_indicator(&self, support: &[u32]) -> Result<Vec<f64>> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("indicator support must be strictly increasing"));
        }
        if support.last().is_some_and(|&i| i as usize >= self.n) {
            return Err(Error::arg(format!("indicator index out of range for n = {}", self.n)));
        }
        let c = (0..self.d)
            .map(|j| {
                let col = self.q_col(j);
                let mut s = 0.0;
                for &i in support {
                    s += col[i as usize];
                }
                s
            })
            .collect();
        Ok(self.back_substitute(c))
    }

    /// One solve per column of `b`; row `j` of the result is the solution for column `j`.
    pub fn solve_columns(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::arg(format!("batch has {} rows, expected {}", b.nrows(), self.n)));
        }
        let m = b.ncols();
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let col = &b.as_slice()[j * self.n..(j + 1) * self.n];
                let c = (0..self.d).map(|k| dot(self.q_col(k), col)).collect();
                self.back_substitute(c)
            })
            .collect();
        Ok(DMatrix::from_fn(m, self.d, |i, j| rows[i][j]))
    }

    pub fn solve_indicators(&self, lists: &[Vec<u32>]) -> Result<DMatrix<f64>> {
        let rows = lists.par_iter().map(|s| self.solve_indicator(s)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(lists.len(), self.d, |i, j| rows[i][j]))
    }
}

/// Out-of-sample embedding of one new vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosResult {
    /// `T(x)`, length `d`.
    pub embedded: Vec<f64>,
    pub xi: Vec<u8>,
    pub in_sample_size: usize,
    /// `rho^{-1/2} W T(x)` after alignment, when computed.
    pub rescaled: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

fn check_binary(xi: &[u8]) -> Result<()> {
    match xi.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::arg(format!("connection vector entry {i} is {}, expected 0 or 1", xi[i]))),
        None => Ok(()),
    }
}

/// Least-squares placement of a new vertex with connection vector `xi`.
pub fn oos_embed(z: &Embedding, xi: &[u8]) -> Result<OosResult> {
    check_binary(xi)?;
    let ls = LeastSquares::new(&z.z)?;
    let b: Vec<f64> = xi.iter().map(|&v| f64::from(v)).collect();
    Ok(OosResult { embedded: ls.solve(&b)?, xi: xi.to_vec(), in_sample_size: z.n(), rescaled: None, seed: None })
}

/// Embeds every column of `b` (`n x m`) with one shared factorisation; returns `m x d`.
pub fn oos_embed_batch(z: &Embedding, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LeastSquares::new(&z.z)?.solve_columns(b)
}

/// Batch embedding from sorted neighbour lists, equal bit for bit to the dense route.
pub fn oos_embed_lists(z: &Embedding, lists: &[Vec<u32>]) -> Result<DMatrix<f64>> {
    LeastSquares::new(&z.z)?.solve_indicators(lists)
}

/// Hex SHA-256 of a matrix's row-major little-endian bytes.
pub fn matrix_checksum(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    for i in 0..m.nrows() {
        for v in m.row(i).iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Metadata written next to a batch of out-of-sample embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosBatchSidecar {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub seed: Option<u64>,
    pub in_sample_checksum: String,
}

/// Writes `embedded` (`m x d`) as CSV and returns its sidecar.
pub fn write_oos_batch<W: Write>(
    w: W,
    z: &Embedding,
    embedded: &DMatrix<f64>,
    seed: Option<u64>,
) -> Result<OosBatchSidecar> {
    crate::io::write_matrix_csv(w, embedded, None)?;
    Ok(OosBatchSidecar { n: z.n(), d: z.d, m: embedded.nrows(), seed, in_sample_checksum: matrix_checksum(&z.z) })
}

/// Nyström factors: with `S` the sampled vertices, `X X^T` is the rank-`d`
/// truncation of `A[S,S]` and `Y = (X^+ A[S,S^c])^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromSketch {
    pub n: usize,
    pub in_sample_index: Vec<usize>,
    /// The complement of `in_sample_index` in increasing order; row `k` of `y_factor` belongs to `out_index[k]`.
    pub out_index: Vec<usize>,
    pub x_factor: DMatrix<f64>,
    pub y_factor: DMatrix<f64>,
    pub rank: usize,
}

fn complement(n: usize, s: &[usize]) -> Result<Vec<usize>> {
    let mut seen = vec![false; n];
    for &i in s {
        if i >= n {
            return Err(Error::arg(format!("sample index {i} out of range for n = {n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::arg(format!("sample index {i} repeated")));
        }
    }
    Ok((0..n).filter(|&i| !seen[i]).collect())
}

/// Sketch of a dense symmetric matrix from the principal block on `s`.
pub fn nystrom_sketch(a: &DMatrix<f64>, s: &[usize], d: usize) -> Result<NystromSketch> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::arg("Nyström sketch needs a square matrix"));
    }
    if d == 0 || s.len() < d {
        return Err(Error::arg(format!("need 1 <= d <= |S|, got d = {d}, |S| = {}", s.len())));
    }
    let out = complement(n, s)?;
    let a_ss = a.select_rows(s).select_columns(s);
    let a_sc = a.select_rows(s).select_columns(&out);
    sketch_from_blocks(n, s.to_vec(), out, &a_ss, &a_sc, d)
}

/// As [`nystrom_sketch`], reading the two needed blocks straight from a graph.
pub fn nystrom_sketch_adjacency(a: &Adjacency, s: &[usize], d: usize) -> Result<NystromSketch> {
    let n = a.n();
    if d == 0 || s.len() < d {
        return Err(Error::arg(format!("need 1 <= d <= |S|, got d = {d}, |S| = {}", s.len())));
    }
    let out = complement(n, s)?;
    let edge = |i: usize, j: usize| if a.has_edge(i, j) { 1.0 } else { 0.0 };
    let a_ss = DMatrix::from_fn(s.len(), s.len(), |i, j| edge(s[i], s[j]));
    let a_sc = DMatrix::from_fn(s.len(), out.len(), |i, j| edge(s[i], out[j]));
    sketch_from_blocks(n, s.to_vec(), out, &a_ss, &a_sc, d)
}

fn sketch_from_blocks(
    n: usize,
    s: Vec<usize>,
    out: Vec<usize>,
    a_ss: &DMatrix<f64>,
    a_sc: &DMatrix<f64>,
    d: usize,
) -> Result<NystromSketch> {
    let x = ase(a_ss, d)?;
    let y = oos_embed_batch(&x, a_sc)?;
    Ok(NystromSketch { n, in_sample_index: s, out_index: out, x_factor: x.z, y_factor: y, rank: d })
}

impl NystromSketch {
    /// Factor `F` (`n x d`) in the original vertex order, so that the reconstruction is `F F^T`.
    pub fn stacked_factor(&self) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.n, self.rank);
        for (k, &i) in self.in_sample_index.iter().enumerate() {
            f.set_row(i, &self.x_factor.row(k));
        }
        for (k, &i) in self.out_index.iter().enumerate() {
            f.set_row(i, &self.y_factor.row(k));
        }
        f
    }

    /// Writes `x_factor.csv`, `y_factor.csv` and `index.csv` (the sampled set, then `n`) into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let mut buf = Vec::new();
        crate::io::write_matrix_csv(&mut buf, &self.x_factor, None)?;
        crate::io::write_atomic(&dir.join("x_factor.csv"), &buf)?;
        buf.clear();
        crate::io::write_matrix_csv(&mut buf, &self.y_factor, None)?;
        crate::io::write_atomic(&dir.join("y_factor.csv"), &buf)?;
        let mut idx = format!("n={}\n", self.n);
        for i in &self.in_sample_index {
            idx.push_str(&format!("{i}\n"));
        }
        crate::io::write_atomic(&dir.join("index.csv"), idx.as_bytes())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let x = crate::io::read_matrix_csv(std::fs::File::open(dir.join("x_factor.csv"))?)?;
        let y = crate::io::read_matrix_csv(std::fs::File::open(dir.join("y_factor.csv"))?)?;
        let text = std::fs::read_to_string(dir.join("index.csv"))?;
        let mut lines = text.lines().enumerate();
        let n = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("n="))
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or(Error::Ingestion { line: 1, message: "expected header n=<count>".into() })?;
        let s = lines
            .map(|(k, l)| {
                l.trim().parse::<usize>().map_err(|e| Error::Ingestion { line: k + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = complement(n, &s)?;
        let rank = x.ncols();
        if x.nrows() != s.len() || y.nrows() != out.len() || (y.nrows() > 0 && y.ncols() != rank) {
            return Err(Error::Provenance("factor shapes do not match the index file".into()));
        }
        let y = if y.nrows() == 0 { DMatrix::zeros(0, rank) } else { y };
        Ok(Self { n, in_sample_index: s, out_index: out, x_factor: x, y_factor: y, rank })
    }
}

/// Assembles `[[X X^T, X Y^T], [Y X^T, Y Y^T]]` in the original vertex order.
/// The result is exactly symmetric.
pub fn nystrom_reconstruct(sketch: &NystromSketch) -> DMatrix<f64> {
    let f = sketch.stacked_factor();
    let rows: Vec<Vec<f64>> = (0..sketch.n).map(|i| f.row(i).iter().copied().collect()).collect();
    let n = sketch.n;
    let upper: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| (i..n).map(|j| dot(&rows[i], &rows[j])).collect()).collect();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            out[(i, i + k)] = v;
            out[(i + k, i)] = v;
        }
    }
    out
}
