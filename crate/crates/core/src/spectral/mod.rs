//! Eigensolvers, adjacency spectral embedding, elbow selection and alignment.

mod eigen;
mod elbow;
mod embedding;
mod procrustes;

pub use eigen::{
    spectral_norm, spectral_norm_with, symmetric_eigenvalues, top_eigenpairs, EigenOptions, EigenPairs, Negated,
    SymmetricOperator,
};
pub use elbow::{profile_log_likelihood, select_dimension};
pub use embedding::{ase, ase_elbow, ase_with, Embedding, EmbeddingSidecar, EmbeddingSource};
pub use procrustes::procrustes;
