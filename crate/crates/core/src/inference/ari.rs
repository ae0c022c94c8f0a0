use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{derive_seed, rng};

/// Relabels arbitrary labels to `0..k` in order of first appearance.
fn dense_labels<T: Eq + Hash>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn pairs(c: u64) -> u64 {
    c * c.saturating_sub(1) / 2
}

fn ari_dense(a: &[usize], ka: usize, b: &[usize], kb: usize) -> f64 {
    let n = a.len() as u64;
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let index = table.iter().map(|&c| pairs(c)).sum::<u64>() as i128;
    let sa = rows.iter().map(|&c| pairs(c)).sum::<u64>() as i128;
    let sb = cols.iter().map(|&c| pairs(c)).sum::<u64>() as i128;
    let total = pairs(n) as i128;
    // (index - sa sb / total) / ((sa + sb) / 2 - sa sb / total), cleared of
    // fractions so the only rounding is the final division.
    let num = 2 * (index * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        // Both partitions are trivial in the same way only when they coincide.
        let identical = sa == sb && index == sa;
        return if identical { 1.0 } else { 0.0 };
    }
    num as f64 / den as f64
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!("labelings have lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::arg("adjusted Rand index needs at least 2 items"));
    }
    let (da, ka) = dense_labels(a);
    let (db, kb) = dense_labels(b);
    Ok(ari_dense(&da, ka, &db, kb))
}

/// Observed ARI against a null distribution from shuffled true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub observed_ari: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    /// `(1 + #{null >= observed}) / (1 + trials)`.
    pub p_value: f64,
    pub trials: usize,
    #[serde(skip)]
    pub null_samples: Vec<f64>,
}

impl PermutationReport {
    /// One null sample per line under a `null_ari` header.
    pub fn write_null_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "null_ari")?;
        for v in &self.null_samples {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Permutation test of `ARI(truth, clusters)`; trial `t` shuffles with a seed derived from `(seed, t)`.
pub fn permutation_test_ari<T: Eq + Hash>(
    truth: &[T],
    clusters: &[T],
    trials: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if trials == 0 {
        return Err(Error::arg("permutation test needs at least one trial"));
    }
    let observed = adjusted_rand_index(truth, clusters)?;
    let (dt, kt) = dense_labels(truth);
    let (dc, kc) = dense_labels(clusters);
    let null: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut perm = dt.clone();
            perm.shuffle(&mut rng(derive_seed(seed, &[t as u64])));
            ari_dense(&perm, kt, &dc, kc)
        })
        .collect();
    let mean = null.iter().sum::<f64>() / trials as f64;
    let sd = if trials > 1 {
        (null.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    // Exact ties count toward the null; a hair of slack absorbs rounding between equal tables.
    let hits = null.iter().filter(|&&v| v >= observed - 1e-12).count();
    Ok(PermutationReport {
        observed_ari: observed,
        null_mean: mean,
        null_sd: sd,
        p_value: (1 + hits) as f64 / (1 + trials) as f64,
        trials,
        null_samples: null,
    })
}
