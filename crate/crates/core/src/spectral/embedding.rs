use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::eigen::{top_eigenpairs, EigenOptions, SymmetricOperator};
use super::elbow::select_dimension;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Adjacency,
    Kernel,
}

/// Spectral embedding `Z = U S^{1/2}` built from the top `d` eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n x d`; row `i` embeds vertex `i`.
    pub z: DMatrix<f64>,
    /// Diagonal of `S`, strictly positive and nonincreasing.
    pub eigenvalues: Vec<f64>,
    pub d: usize,
    pub source: EmbeddingSource,
}

/// Metadata written next to an embedding CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub n: usize,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub source: EmbeddingSource,
    pub seeds: Vec<u64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Builds `Z` from eigenpairs, failing on the first nonpositive eigenvalue.
    pub fn from_eigenpairs(values: &[f64], vectors: &DMatrix<f64>, source: EmbeddingSource) -> Result<Self> {
        if let Some((k, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::IndefiniteSpectrum { index: k + 1, value: v });
        }
        let mut z = vectors.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col *= values[j].sqrt();
        }
        Ok(Self { z, eigenvalues: values.to_vec(), d: values.len(), source })
    }

    /// The embedding restricted to its leading `d` coordinates.
    pub fn truncate(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.d {
            return Err(Error::arg(format!("cannot truncate a {}-dimensional embedding to {d}", self.d)));
        }
        Ok(Self {
            z: self.z.columns(0, d).into_owned(),
            eigenvalues: self.eigenvalues[..d].to_vec(),
            d,
            source: self.source,
        })
    }

    /// Rows restricted to `rows`, in the given order.
    pub fn rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.d, |i, j| self.z[(rows[i], j)])
    }

    pub fn sidecar(&self, seeds: Vec<u64>) -> EmbeddingSidecar {
        EmbeddingSidecar { n: self.n(), d: self.d, eigenvalues: self.eigenvalues.clone(), source: self.source, seeds }
    }

    /// One row per vertex, `d` columns, no header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        crate::io::write_matrix_csv(w, &self.z, None)
    }
}

/// Adjacency (or kernel) spectral embedding into `R^d`.
pub fn ase<M: SymmetricOperator>(m: &M, d: usize) -> Result<Embedding> {
    ase_with(m, d, &EigenOptions::default())
}

pub fn ase_with<M: SymmetricOperator>(m: &M, d: usize, opts: &EigenOptions) -> Result<Embedding> {
    let pairs = top_eigenpairs(m, d, opts)?;
    let source = if m.is_adjacency() { EmbeddingSource::Adjacency } else { EmbeddingSource::Kernel };
    Embedding::from_eigenpairs(&pairs.values, &pairs.vectors, source)
}

/// Embeds with the dimension chosen at the scree-plot elbow of the leading
/// `head` eigenvalues. Returns the embedding and the eigenvalue head used.
pub fn ase_elbow<M: SymmetricOperator>(m: &M, head: usize, opts: &EigenOptions) -> Result<(Embedding, Vec<f64>)> {
    let head = head.min(m.dim());
    let pairs = top_eigenpairs(m, head, &EigenOptions { head, ..opts.clone() })?;
    let d = select_dimension(&pairs.values)?;
    let source = if m.is_adjacency() { EmbeddingSource::Adjacency } else { EmbeddingSource::Kernel };
    let vectors = pairs.vectors.columns(0, d).into_owned();
    let emb = Embedding::from_eigenpairs(&pairs.values[..d], &vectors, source)?;
    Ok((emb, pairs.values))
}
