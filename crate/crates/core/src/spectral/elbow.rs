//! Scree-plot elbow by two-segment profile likelihood.
//!
//! The sorted spectrum is split after position `q`; each segment gets its own
//! mean and both share one variance. The elbow is the `q` with the highest
//! maximised Gaussian log-likelihood, the smallest such `q` on ties.

use crate::error::{Error, Result};

fn sorted_desc(spectrum: &[f64]) -> Vec<f64> {
    let mut v = spectrum.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Profile log-likelihood of every split `q = 1..p-1` (index `q - 1`).
pub fn profile_log_likelihood(spectrum: &[f64]) -> Result<Vec<f64>> {
    let p = spectrum.len();
    if p < 3 {
        return Err(Error::arg(format!("elbow selection needs at least 3 eigenvalues, got {p}")));
    }
    if spectrum.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("spectrum contains non-finite values"));
    }
    let s = sorted_desc(spectrum);
    let pf = p as f64;
    Ok((1..p)
        .map(|q| {
            let var = (sum_sq_dev(&s[..q]) + sum_sq_dev(&s[q..])) / pf;
            if var <= 0.0 {
                f64::INFINITY
            } else {
                -0.5 * pf * ((2.0 * std::f64::consts::PI * var).ln() + 1.0)
            }
        })
        .collect())
}

/// Embedding dimension at the elbow of the scree plot, in `1..len`.
pub fn select_dimension(spectrum: &[f64]) -> Result<usize> {
    let ll = profile_log_likelihood(spectrum)?;
    let mut best = 0;
    for (k, &v) in ll.iter().enumerate() {
        if v > ll[best] {
            best = k;
        }
    }
    Ok(best + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Direct evaluation of the Gaussian log-density of every point under the
    // split model, with the pooled maximum-likelihood variance.
    fn brute_force(spectrum: &[f64]) -> usize {
        let mut s = spectrum.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let p = s.len();
        let mut best = (f64::NEG_INFINITY, 0);
        for q in 1..p {
            let (a, b) = s.split_at(q);
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let mut var = 0.0;
            for x in a {
                var += (x - ma).powi(2);
            }
            for x in b {
                var += (x - mb).powi(2);
            }
            var /= p as f64;
            let mut ll = 0.0;
            for x in a {
                ll += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - ma).powi(2) / (2.0 * var);
            }
            for x in b {
                ll += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mb).powi(2) / (2.0 * var);
            }
            if ll > best.0 + 1e-9 {
                best = (ll, q);
            }
        }
        best.1
    }

    #[test]
    fn examples() {
        let s = [10.0, 9.5, 0.1, 0.09, 0.08];
        assert_eq!(brute_force(&s), 2);
        assert_eq!(select_dimension(&s).unwrap(), 2);
        assert_eq!(select_dimension(&[3.0; 6]).unwrap(), 1);
        assert_eq!(select_dimension(&[100.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap(), 1);
        assert!(select_dimension(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_first() {
        assert_eq!(select_dimension(&[0.09, 10.0, 0.1, 9.5, 0.08]).unwrap(), 2);
    }

    #[test]
    fn matches_brute_force_on_random_spectra() {
        let mut r = crate::seeds::rng(5);
        use rand::Rng;
        for _ in 0..200 {
            let p = r.random_range(3..15);
            let s: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 10.0).collect();
            assert_eq!(select_dimension(&s).unwrap(), brute_force(&s), "{s:?}");
        }
    }

    proptest! {
        #[test]
        fn scale_invariant(
            s in proptest::collection::vec(0.01f64..100.0, 3..20),
            c in 0.001f64..1000.0,
        ) {
            let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
            let ll = profile_log_likelihood(&s).unwrap();
            let mut sorted = ll.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            // Skip near-ties, where rounding alone could flip the choice.
            prop_assume!(sorted.len() < 2 || sorted[0] - sorted[1] > 1e-6);
            prop_assert_eq!(select_dimension(&s).unwrap(), select_dimension(&scaled).unwrap());
        }
    }
}
