//! Linear classifiers on embeddings, Gaussian-mixture clustering, and the
//! adjusted Rand index with its permutation test.

mod ari;
mod gmm;
mod linear;

pub use ari::{adjusted_rand_index, permutation_test_ari, PermutationReport};
pub use gmm::{fit_gmm, fit_gmm_k, fit_gmm_with, GmmModel, GmmOptions};
pub use linear::{
    fit_linear, fit_linear_with, fit_one_vs_rest, misclassification_rate, predict, FitOptions, LinearClassifier, Loss,
    OneVsRest,
};
