//! Latent positions, sparsity schedules and Bernoulli graph sampling.

use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{check_rho, KernelSpec};
use crate::seeds::{derive_seed, rng, stream_rng};

/// Graphs with at most this many vertices are stored as dense bit matrices.
pub const DENSE_MAX_VERTICES: usize = 4096;
const PROB_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LatentDistribution {
    /// Dirichlet with parameter vector of length `p + 1`; the first `p`
    /// coordinates are kept, so samples lie in `{x >= 0, sum(x) <= 1}`.
    Dirichlet {
        alpha: Vec<f64>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    PointCloud {
        points: Vec<Vec<f64>>,
    },
}

impl LatentDistribution {
    pub fn dim(&self) -> usize {
        match self {
            LatentDistribution::Dirichlet { alpha } => alpha.len().saturating_sub(1),
            LatentDistribution::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
            LatentDistribution::UniformBox { lo, .. } => lo.len(),
            LatentDistribution::PointCloud { points } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        match self {
            LatentDistribution::Dirichlet { alpha } => {
                if alpha.len() < 2 {
                    return bad("dirichlet needs at least two concentration parameters");
                }
                if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return bad("dirichlet concentration parameters must be positive");
                }
            }
            LatentDistribution::GaussianMixture { weights, means, covariances } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != covariances.len() {
                    return bad("mixture weights, means and covariances must have equal nonzero length");
                }
                if weights.iter().any(|&w| !(w > 0.0)) {
                    return bad("mixture weights must be positive");
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("mixture weights must sum to 1");
                }
                let p = means[0].len();
                if p == 0 || means.iter().any(|m| m.len() != p) {
                    return bad("mixture means must share a positive dimension");
                }
                for c in covariances {
                    if c.len() != p || c.iter().any(|r| r.len() != p) {
                        return bad("mixture covariance has wrong shape");
                    }
                    let m = DMatrix::from_fn(p, p, |i, j| c[i][j]);
                    if crate::linalg::asymmetry(&m) > 1e-12 || Cholesky::new(m).is_none() {
                        return bad("mixture covariance must be symmetric positive definite");
                    }
                }
            }
            LatentDistribution::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return bad("uniform box needs lo < hi coordinatewise");
                }
            }
            LatentDistribution::PointCloud { points } => {
                let p = self.dim();
                if points.is_empty() || p == 0 || points.iter().any(|r| r.len() != p) {
                    return bad("point cloud must be a nonempty rectangular matrix");
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. rows from `dist`. A point cloud is returned verbatim and
/// requires `n` to equal its row count.
pub fn sample_latent(dist: &LatentDistribution, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_latent_labeled(dist, n, seed).map(|(x, _)| x)
}

/// Like [`sample_latent`], also returning the mixture component of each row
/// (zero for distributions without components).
pub fn sample_latent_labeled(dist: &LatentDistribution, n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    let p = dist.dim();
    let mut r = rng(seed);
    match dist {
        LatentDistribution::Dirichlet { alpha } => {
            let gammas = alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::config(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut r)).collect();
                let total: f64 = g.iter().sum();
                for j in 0..p {
                    x[(i, j)] = g[j] / total;
                }
            }
            Ok((x, vec![0; n]))
        }
        LatentDistribution::GaussianMixture { weights, means, covariances } => {
            let factors: Vec<DMatrix<f64>> = covariances
                .iter()
                .map(|c| {
                    let m = DMatrix::from_fn(p, p, |i, j| c[i][j]);
                    Cholesky::new(m).expect("validated").l()
                })
                .collect();
            let mut x = DMatrix::zeros(n, p);
            let mut comp = Vec::with_capacity(n);
            for i in 0..n {
                let u: f64 = r.random();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (c, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = c;
                        break;
                    }
                }
                let z = DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal));
                let v = &factors[k] * z;
                for j in 0..p {
                    x[(i, j)] = means[k][j] + v[j];
                }
                comp.push(k);
            }
            Ok((x, comp))
        }
        LatentDistribution::UniformBox { lo, hi } => {
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = lo[j] + (hi[j] - lo[j]) * r.random::<f64>();
                }
            }
            Ok((x, vec![0; n]))
        }
        LatentDistribution::PointCloud { points } => {
            if n != points.len() {
                return Err(Error::arg(format!("point cloud has {} rows, {n} requested", points.len())));
            }
            Ok((crate::linalg::from_rows(points, p), vec![0; n]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SparsitySchedule {
    Constant { c: f64 },
    LogOverN,
    OneOverN,
}

impl SparsitySchedule {
    pub fn rho(&self, n: usize) -> Result<f64> {
        sparsity_schedule(*self, n)
    }
}

/// `rho_n` for the named schedule.
pub fn sparsity_schedule(kind: SparsitySchedule, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("n must be positive"));
    }
    let v = match kind {
        SparsitySchedule::Constant { c } => {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::config(format!("constant sparsity {c} outside (0, 1]")));
            }
            c
        }
        SparsitySchedule::LogOverN => {
            if n < 2 {
                return Err(Error::arg("log-over-n schedule needs n >= 2"));
            }
            ((n as f64).ln() / n as f64).min(1.0)
        }
        SparsitySchedule::OneOverN => 1.0 / n as f64,
    };
    Ok(v)
}

/// Logs a warning when the expected degree `n * rho` is below `2 log n`.
pub fn warn_if_too_sparse(n: usize, rho: f64) -> bool {
    let sparse = n > 1 && (n as f64) * rho < 2.0 * (n as f64).ln();
    if sparse {
        log::warn!(
            "n*rho = {:.3} is below 2 log n = {:.3}; embedding guarantees are weak",
            n as f64 * rho,
            2.0 * (n as f64).ln()
        );
    }
    sparse
}

/// Latent positions plus the sparsity factor and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub positions: DMatrix<f64>,
    pub rho: f64,
    pub labels: Option<Vec<i64>>,
    pub seed: u64,
}

impl LatentSample {
    pub fn new(positions: DMatrix<f64>, rho: f64, labels: Option<Vec<i64>>, seed: u64) -> Result<Self> {
        check_rho(rho)?;
        if positions.nrows() == 0 {
            return Err(Error::arg("latent sample must have at least one row"));
        }
        if let Some(l) = &labels {
            if l.len() != positions.nrows() {
                return Err(Error::arg("label vector length differs from sample size"));
            }
        }
        Ok(Self { positions, rho, labels, seed })
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    /// CSV with columns `x0..x{p-1}` and, if present, `label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let p = self.positions.ncols();
        let mut header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        out.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.positions.row(i).iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, rho: f64, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let has_label = header.iter().next_back() == Some("label");
        let p = header.len() - usize::from(has_label);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let bad = |m: String| Error::Ingestion { line, message: m };
            if rec.len() != header.len() {
                return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            let row =
                (0..p).map(|j| rec[j].parse::<f64>().map_err(|e| bad(e.to_string()))).collect::<Result<Vec<_>>>()?;
            rows.push(row);
            if has_label {
                labels.push(rec[p].parse::<i64>().map_err(|e| bad(e.to_string()))?);
            }
        }
        let positions = crate::linalg::from_rows(&rows, p);
        Self::new(positions, rho, has_label.then_some(labels), seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Row-major `n x n` 0/1 bytes.
    Dense(Vec<u8>),
    /// Compressed rows; neighbor lists sorted ascending.
    Sparse { offsets: Vec<usize>, neighbors: Vec<u32> },
}

/// Symmetric hollow binary adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    storage: Storage,
    seed: Option<u64>,
}

impl Adjacency {
    /// Builds from undirected edges. Self loops and duplicates are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], dense_max: usize) -> Result<Self> {
        let mut upper: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::arg(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::arg(format!("self loop at vertex {a}")));
            }
            let (i, j) = (a.min(b), a.max(b));
            upper[i].push(j as u32);
        }
        for row in &mut upper {
            row.sort_unstable();
            let before = row.len();
            row.dedup();
            if row.len() != before {
                return Err(Error::arg("duplicate edge"));
            }
        }
        Ok(Self::from_upper(n, upper, dense_max, None))
    }

    fn from_upper(n: usize, upper: Vec<Vec<u32>>, dense_max: usize, seed: Option<u64>) -> Self {
        let storage = if n <= dense_max {
            let mut bits = vec![0u8; n * n];
            for (i, row) in upper.iter().enumerate() {
                for &j in row {
                    let j = j as usize;
                    bits[i * n + j] = 1;
                    bits[j * n + i] = 1;
                }
            }
            Storage::Dense(bits)
        } else {
            let mut deg = vec![0usize; n];
            for (i, row) in upper.iter().enumerate() {
                deg[i] += row.len();
                for &j in row {
                    deg[j as usize] += 1;
                }
            }
            let mut offsets = vec![0usize; n + 1];
            for i in 0..n {
                offsets[i + 1] = offsets[i] + deg[i];
            }
            let mut fill = offsets[..n].to_vec();
            let mut neighbors = vec![0u32; offsets[n]];
            // Lower-triangle entries (j < i) arrive first when rows are scanned in order,
            // so every neighbor list ends up sorted.
            for (i, row) in upper.iter().enumerate() {
                for &j in row {
                    let j = j as usize;
                    neighbors[fill[j]] = i as u32;
                    fill[j] += 1;
                }
            }
            for (i, row) in upper.iter().enumerate() {
                for &j in row {
                    neighbors[fill[i]] = j;
                    fill[i] += 1;
                }
            }
            Storage::Sparse { offsets, neighbors }
        };
        Self { n, storage, seed }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        match &self.storage {
            Storage::Dense(bits) => bits[i * self.n + j] == 1,
            Storage::Sparse { offsets, neighbors } => {
                neighbors[offsets[i]..offsets[i + 1]].binary_search(&(j as u32)).is_ok()
            }
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        match &self.storage {
            Storage::Dense(bits) => bits[i * self.n..(i + 1) * self.n]
                .iter()
                .enumerate()
                .filter_map(|(j, &b)| (b == 1).then_some(j))
                .collect(),
            Storage::Sparse { offsets, neighbors } => {
                neighbors[offsets[i]..offsets[i + 1]].iter().map(|&j| j as usize).collect()
            }
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        match &self.storage {
            Storage::Dense(bits) => bits[i * self.n..(i + 1) * self.n].iter().map(|&b| b as usize).sum(),
            Storage::Sparse { offsets, .. } => offsets[i + 1] - offsets[i],
        }
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for j in self.neighbors(i) {
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n as f64 * (self.n as f64 - 1.0) / 2.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.neighbors(i) {
                m[(i, j)] = 1.0;
            }
        }
        m
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        match &self.storage {
            Storage::Dense(bits) => {
                y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                    let row = &bits[i * n..(i + 1) * n];
                    let mut s = 0.0;
                    for (b, v) in row.iter().zip(x) {
                        if *b == 1 {
                            s += v;
                        }
                    }
                    *yi = s;
                });
            }
            Storage::Sparse { offsets, neighbors } => {
                y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                    let mut s = 0.0;
                    for &j in &neighbors[offsets[i]..offsets[i + 1]] {
                        s += x[j as usize];
                    }
                    *yi = s;
                });
            }
        }
    }

    /// Subgraph induced by `vertices`, relabelled `0..vertices.len()` in the given order.
    pub fn induced_subgraph(&self, vertices: &[usize], dense_max: usize) -> Result<Adjacency> {
        let pos = self.position_map(vertices)?;
        let upper: Vec<Vec<u32>> = vertices
            .iter()
            .enumerate()
            .map(|(a, &v)| {
                let mut row: Vec<u32> =
                    self.neighbors(v).into_iter().filter_map(|u| pos[u]).filter(|&b| b > a).map(|b| b as u32).collect();
                row.sort_unstable();
                row
            })
            .collect();
        Ok(Adjacency::from_upper(vertices.len(), upper, dense_max, self.seed))
    }

    /// For each vertex in `queries`, the positions `k` (into `targets`) with
    /// `A[query, targets[k]] = 1`, ascending.
    pub fn connection_lists(&self, targets: &[usize], queries: &[usize]) -> Result<Vec<Vec<u32>>> {
        let pos = self.position_map(targets)?;
        queries
            .iter()
            .map(|&q| {
                if q >= self.n {
                    return Err(Error::arg(format!("vertex {q} out of range")));
                }
                let mut row: Vec<u32> =
                    self.neighbors(q).into_iter().filter_map(|u| pos[u]).map(|k| k as u32).collect();
                row.sort_unstable();
                Ok(row)
            })
            .collect()
    }

    fn position_map(&self, vertices: &[usize]) -> Result<Vec<Option<usize>>> {
        let mut pos = vec![None; self.n];
        for (k, &v) in vertices.iter().enumerate() {
            if v >= self.n {
                return Err(Error::arg(format!("vertex {v} out of range for n = {}", self.n)));
            }
            if pos[v].is_some() {
                return Err(Error::arg(format!("vertex {v} listed twice")));
            }
            pos[v] = Some(k);
        }
        Ok(pos)
    }

    /// Sorted edge list: header `n=<count>`, then `i j` per line with `i < j`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n={}", self.n)?;
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R, dense_max: usize) -> Result<Adjacency> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Ingestion { line: 1, message: "empty edge list".into() })??;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Ingestion { line: 1, message: format!("bad header {header:?}") })?;
        let mut edges = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(Error::Ingestion { line: lineno, message: format!("bad edge {line:?}") }),
            }
        }
        Adjacency::from_edges(n, &edges, dense_max)
    }
}

fn sample_rows<F>(n: usize, seed: u64, dense_max: usize, prob: F) -> Adjacency
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(seed, i as u64);
            let mut row = Vec::new();
            for j in (i + 1)..n {
                let u: f64 = r.random();
                if u < prob(i, j) {
                    row.push(j as u32);
                }
            }
            row
        })
        .collect();
    Adjacency::from_upper(n, upper, dense_max, Some(seed))
}

/// Samples `A_ij ~ Bernoulli(K_ij)` independently for `i < j`.
///
/// The draw for pair `(i, j)` comes from stream `i` of the seed, so the result
/// does not depend on thread scheduling or on the storage choice.
pub fn sample_adjacency(k: &DMatrix<f64>, seed: u64) -> Result<Adjacency> {
    sample_adjacency_with(k, seed, DENSE_MAX_VERTICES)
}

pub fn sample_adjacency_with(k: &DMatrix<f64>, seed: u64, dense_max: usize) -> Result<Adjacency> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::arg("probability matrix must be square"));
    }
    for j in 0..n {
        for i in 0..n {
            let v = k[(i, j)];
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v) {
                return Err(Error::Domain(format!("edge probability K[{i},{j}] = {v} outside [0, 1]")));
            }
            if i > j && (v - k[(j, i)]).abs() > PROB_SLACK {
                return Err(Error::arg("probability matrix is not symmetric"));
            }
        }
    }
    Ok(sample_rows(n, seed, dense_max, |i, j| k[(i, j)]))
}

/// Samples a latent position graph without materialising `K`. Identical to
/// `sample_adjacency(&kernel_matrix(spec, x, rho)?, seed)`.
pub fn sample_graph(spec: &KernelSpec, x: &DMatrix<f64>, rho: f64, seed: u64) -> Result<Adjacency> {
    sample_graph_with(spec, x, rho, seed, DENSE_MAX_VERTICES)
}

pub fn sample_graph_with(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    rho: f64,
    seed: u64,
    dense_max: usize,
) -> Result<Adjacency> {
    check_rho(rho)?;
    let p = spec.dim;
    let flat = spec.check_rows(x)?;
    let n = x.nrows();
    warn_if_too_sparse(n, rho);
    Ok(sample_rows(n, seed, dense_max, |i, j| {
        rho * spec.eval_unchecked(&flat[i * p..(i + 1) * p], &flat[j * p..(j + 1) * p])
    }))
}

/// Connection vector of a new vertex: `xi_i ~ Bernoulli(rho * kappa(x_new, X_i))`.
pub fn sample_oos_connections(
    x_new: &[f64],
    x_in: &DMatrix<f64>,
    spec: &KernelSpec,
    rho: f64,
    seed: u64,
) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::arg(format!("rho must lie in [0, 1], got {rho}")));
    }
    spec.check_point(x_new)?;
    let p = spec.dim;
    let flat = spec.check_rows(x_in)?;
    let mut r = stream_rng(seed, 0);
    Ok(flat
        .chunks(p)
        .map(|xi| {
            let u: f64 = r.random();
            u8::from(u < rho * spec.eval_unchecked(x_new, xi))
        })
        .collect())
}

/// Connection lists for many new vertices. Row `j` equals the support of
/// `sample_oos_connections(new_j, .., derive_seed(seed, &[j]))`.
pub fn sample_oos_connection_lists(
    new_points: &DMatrix<f64>,
    x_in: &DMatrix<f64>,
    spec: &KernelSpec,
    rho: f64,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    check_rho(rho)?;
    let p = spec.dim;
    let flat_new = spec.check_rows(new_points)?;
    let flat_in = spec.check_rows(x_in)?;
    Ok(flat_new
        .par_chunks(p)
        .enumerate()
        .map(|(j, x)| {
            let mut r = stream_rng(derive_seed(seed, &[j as u64]), 0);
            flat_in
                .chunks(p)
                .enumerate()
                .filter_map(|(i, xi)| {
                    let u: f64 = r.random();
                    (u < rho * spec.eval_unchecked(x, xi)).then_some(i as u32)
                })
                .collect()
        })
        .collect())
}
