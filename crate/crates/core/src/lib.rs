//! Latent position graphs, adjacency spectral embedding and its
//! out-of-sample extension.
//!
//! The crate covers the full pipeline: sampling latent positions and
//! Bernoulli graphs ([`lpgraph`]), kernels and an empirical Mercer feature map
//! ([`kernels`]), spectral embedding ([`spectral`]), the least-squares
//! out-of-sample map and Nyström sketching ([`oos`]), downstream classifiers
//! and clustering ([`inference`]), Monte Carlo checks of the convergence
//! behaviour ([`verify`]) and the experiment runners ([`experiments`]).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod lpgraph;
pub mod oos;
pub mod seeds;
pub mod spectral;
pub mod verify;

pub use error::{Error, ErrorCategory, Result};
