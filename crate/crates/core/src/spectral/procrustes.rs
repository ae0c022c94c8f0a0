use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Orthogonal `W` minimising `|source * W - target|_F`.
///
/// With `source^T target = U S V^T`, the minimiser is `W = U V^T`. When the
/// cross product is rank deficient the minimiser is not unique; a warning is
/// logged and one minimiser is returned.
pub fn procrustes(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if source.shape() != target.shape() {
        return Err(Error::arg(format!("procrustes shapes differ: {:?} vs {:?}", source.shape(), target.shape())));
    }
    let (n, d) = source.shape();
    if d == 0 || n < d {
        return Err(Error::arg(format!("procrustes needs n >= d >= 1, got n = {n}, d = {d}")));
    }
    let cross = source.transpose() * target;
    let svd = cross.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        log::warn!("procrustes cross product is rank deficient; alignment is not unique");
    }
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    Ok(u * v_t)
}
