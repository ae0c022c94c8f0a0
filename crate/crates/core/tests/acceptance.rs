//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is printed even when
//! output capture is on. Exits nonzero when a criterion fails that is not
//! listed in `KNOWN_FAILURES`, or when a listed one starts passing.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use lpm_embed::experiments::{
    replay, run_bipartite, run_experiment, run_mixture, run_rates, write_run, AbaloneConfig, BipartiteConfig,
    BoundsConfig, ExperimentConfig, ExperimentKind, MixtureConfig, RatesConfig,
};
use lpm_embed::inference::{adjusted_rand_index, permutation_test_ari};
use lpm_embed::kernels::KernelSpec;
use lpm_embed::lpgraph::{sample_graph, sample_latent, LatentDistribution, SparsitySchedule};
use lpm_embed::oos::{nystrom_reconstruct, nystrom_sketch, LeastSquares};
use lpm_embed::seeds::{derive_seed, rng};
use lpm_embed::spectral::{procrustes, top_eigenpairs, EigenOptions};
use lpm_embed::verify::{rate_exponent, Oracle, DEFAULT_ETA};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// Criteria expected to fail with the current implementation; see the README.
const KNOWN_FAILURES: &[u32] = &[5];

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_orthogonal<R: Rng>(n: usize, r: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    g.qr().q()
}

/// `C A_SS^+ C^T` with the pseudo-inverse of the rank-`d` truncation of `A_SS`,
/// computed from a full eigendecomposition.
fn explicit_nystrom(a: &DMatrix<f64>, s: &[usize], d: usize) -> DMatrix<f64> {
    let c = a.select_columns(s);
    let eig = a.select_rows(s).select_columns(s).symmetric_eigen();
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let mut pinv = DMatrix::zeros(s.len(), s.len());
    for &k in &idx[..d] {
        let u = eig.eigenvectors.column(k);
        pinv += u * u.transpose() / eig.eigenvalues[k];
    }
    &c * pinv * c.transpose()
}

fn criterion_1() -> Outcome {
    let mut r = rng(101);
    let mut worst_block = 0.0f64;
    let mut worst_exact = 0.0f64;
    for case in 0..200 {
        let n = r.random_range(2..=64);
        let rank = r.random_range(1..=n);
        // Geometric spectrum keeps the rank-d truncation well defined.
        let q = random_orthogonal(n, &mut r);
        let lambda = DMatrix::from_fn(n, n, |i, j| if i == j && i < rank { 10.0 * 0.8f64.powi(i as i32) } else { 0.0 });
        let a = &q * lambda * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        if case % 2 == 0 {
            // Sample set spanning the range with d equal to the rank: exact recovery.
            let s = &perm[..n.min(rank + r.random_range(0..=n - rank))];
            let rec = nystrom_reconstruct(&nystrom_sketch(&a, s, rank).expect("sketch"));
            worst_exact = worst_exact.max((rec - &a).norm());
        } else {
            let l = r.random_range(1..=n);
            let d = r.random_range(1..=l.min(rank));
            let s = &perm[..l];
            let rec = nystrom_reconstruct(&nystrom_sketch(&a, s, d).expect("sketch"));
            worst_block = worst_block.max((rec - explicit_nystrom(&a, s, d)).norm());
        }
    }
    verdict(
        worst_block <= 1e-8 && worst_exact <= 1e-8,
        format!("max |rec - C A+ C^T|_F = {worst_block:.2e}, max exact-recovery error = {worst_exact:.2e} (tol 1e-8)"),
    )
}

fn rdpg_rates() -> RatesConfig {
    RatesConfig {
        kernel: KernelSpec::dot_product(2).unwrap(),
        distribution: LatentDistribution::Dirichlet { alpha: vec![1.0, 1.0, 1.0] },
        d: 2,
        n_grid: vec![250, 500, 1000, 2000],
        replicates: 20,
        schedule: SparsitySchedule::Constant { c: 1.0 },
        oracle: Oracle::LatentPositions,
        fresh_points: 50,
        eta: DEFAULT_ETA,
    }
}

fn criteria_2_3() -> (Outcome, Outcome) {
    let report = run_rates(&rdpg_rates(), 2024, 1.0).expect("rates");
    let means: Vec<f64> = report.oos.points.iter().map(|p| p.mean_error).collect();
    let decreasing = means.len() == 4 && means.windows(2).all(|w| w[1] < w[0]);
    let (slope, se) = rate_exponent(&report.oos).expect("slope");
    let c2 = verdict(
        decreasing && slope > -0.7 && slope < -0.3,
        format!("oos mean errors {means:.4?}, slope {slope:.3} +- {se:.3} (want strictly decreasing, slope in (-0.7, -0.3))"),
    );
    let at = |c: &lpm_embed::verify::RateCurve| c.points.iter().find(|p| p.n == 1000).map(|p| p.mean_error);
    let c3 = match (at(&report.insample), at(&report.oos)) {
        (Some(i), Some(o)) => {
            verdict(o <= 3.0 * i, format!("n = 1000: oos {o:.4} vs in-sample {i:.4}, ratio {:.3} (want <= 3)", o / i))
        }
        _ => Outcome::Fail("n = 1000 missing from the curves".into()),
    };
    (c2, c3)
}

fn gaussian_bounds(n: usize, trials: usize) -> BoundsConfig {
    BoundsConfig {
        kernel: KernelSpec::gaussian(1.0, 2).unwrap(),
        distribution: LatentDistribution::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
        n,
        rho: 1.0,
        eta: DEFAULT_ETA,
        trials,
    }
}

fn criterion_4() -> Outcome {
    let r = lpm_embed::experiments::run_bounds(&gaussian_bounds(1000, 100), 77, 1.0).expect("bounds");
    let limit = 0.10 + 3.0 * (0.10f64 * 0.90 / 100.0).sqrt();
    verdict(
        r.violation_rate <= limit,
        format!(
            "violation rate {} over {} trials, max |A - K| = {:.2}, bound {:.2} (want rate <= {limit:.3})",
            r.violation_rate, r.trials, r.observed, r.bound
        ),
    )
}

fn criterion_5() -> Outcome {
    let ci = run_mixture(&MixtureConfig { n: 2000, n_in: 500, ..Default::default() }, 1, 1.0).expect("mixture");
    let full = run_mixture(&MixtureConfig::default(), 1, 1.0).expect("mixture");
    let worst = |r: &lpm_embed::experiments::MixtureReport| {
        r.rows
            .iter()
            .max_by(|a, b| (a.oos_err - a.insample_err).total_cmp(&(b.oos_err - b.insample_err)))
            .map_or(0, |x| x.d)
    };
    let elbow = full.row(full.elbow_d).map_or(f64::NAN, |r| r.insample_err);
    verdict(
        full.max_gap < 0.03 && ci.max_gap < 0.06,
        format!(
            "full scale max gap {:.4} at d = {} (want < 0.03); CI scale max gap {:.4} at d = {} (want < 0.06); \
             full-scale in-sample error at elbow d = {}: {elbow:.4}",
            full.max_gap,
            worst(&full),
            ci.max_gap,
            worst(&ci),
            full.elbow_d
        ),
    )
}

fn abalone_path() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("LPM_ABALONE_PATH").map(PathBuf::from),
        Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/abalone.data"))),
    ];
    candidates.into_iter().flatten().find(|p| p.exists())
}

fn criterion_6() -> Outcome {
    let Some(path) = abalone_path() else {
        return Outcome::NotRun("abalone.data not found (set LPM_ABALONE_PATH or place it in data/)".into());
    };
    let r = lpm_embed::experiments::run_abalone(&AbaloneConfig::new(path), 1).expect("abalone");
    let e200 = r.oos_error(200).unwrap_or(f64::NAN);
    let e2200 = r.oos_error(2200).unwrap_or(f64::NAN);
    verdict(
        (r.insample_error - 0.358).abs() <= 0.05 && (e200 - 0.444).abs() <= 0.06 && (e2200 - 0.374).abs() <= 0.06,
        format!(
            "in-sample {:.3} (0.358 +- 0.05), m = 200: {e200:.3} (0.444 +- 0.06), m = 2200: {e2200:.3} (0.374 +- 0.06)",
            r.insample_error
        ),
    )
}

fn criterion_7() -> Outcome {
    let planted = run_bipartite(&BipartiteConfig::default(), 8, 1.0).expect("bipartite");
    // Null: label vectors drawn independently of a fixed clustering.
    let clusters = &planted.clusters;
    let groups = 4;
    let mut small = 0;
    for rep in 0..200u64 {
        let mut r = rng(derive_seed(555, &[rep]));
        let labels: Vec<usize> = clusters.iter().map(|_| r.random_range(0..groups)).collect();
        let p = permutation_test_ari(&labels, clusters, 199, derive_seed(556, &[rep])).expect("perm").p_value;
        if p <= 0.05 {
            small += 1;
        }
    }
    let frac = small as f64 / 200.0;
    let p = &planted.planted;
    verdict(
        (0.01..=0.10).contains(&frac) && p.p_value <= 0.01,
        format!(
            "null fraction p <= 0.05: {frac:.3} (want [0.01, 0.10]); planted ARI {:.3}, null mean {:.2e}, sd {:.2e}, p = {:.2e}, K = {} (want p <= 0.01)",
            p.observed_ari, p.null_mean, p.null_sd, p.p_value, planted.k_hat
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng(808);
    let mut notes = Vec::new();
    let mut ok = true;

    // Lanczos against a full dense eigendecomposition.
    let spec = KernelSpec::gaussian(0.7, 2).unwrap();
    let x = sample_latent(&LatentDistribution::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }, 400, 3).unwrap();
    let a = sample_graph(&spec, &x, 1.0, 4).unwrap();
    let lanczos = top_eigenpairs(&a, 5, &EigenOptions { dense_max: 0, ..Default::default() }).unwrap();
    let dense = a.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..400).collect();
    order.sort_by(|&i, &j| dense.eigenvalues[j].total_cmp(&dense.eigenvalues[i]));
    let mut eig_err = 0.0f64;
    for (k, &col) in order.iter().take(5).enumerate() {
        eig_err = eig_err.max((lanczos.values[k] - dense.eigenvalues[col]).abs());
        let u = dense.eigenvectors.column(col);
        let v = lanczos.vectors.column(k);
        eig_err = eig_err.max((1.0 - u.dot(&v).abs()).abs());
    }
    ok &= eig_err <= 1e-8;
    notes.push(format!("eigen {eig_err:.1e}"));

    // Least squares against the normal equations.
    let z = DMatrix::from_fn(60, 4, |_, _| r.random::<f64>() - 0.5);
    let b: Vec<f64> = (0..60).map(|_| f64::from(r.random::<bool>())).collect();
    let got = LeastSquares::new(&z).unwrap().solve(&b).unwrap();
    let ztz = z.transpose() * &z;
    let want = ztz.cholesky().unwrap().solve(&(z.transpose() * nalgebra::DVector::from_vec(b)));
    let ls_err = got.iter().zip(want.iter()).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    ok &= ls_err <= 1e-10;
    notes.push(format!("least squares {ls_err:.1e}"));

    // ARI against the pair-counting definition, compared as exact rationals.
    let mut ari_ok = true;
    for _ in 0..50 {
        let m = r.random_range(2..40);
        let a: Vec<u8> = (0..m).map(|_| r.random_range(0..4)).collect();
        let b: Vec<u8> = (0..m).map(|_| r.random_range(0..3)).collect();
        let got = adjusted_rand_index(&a, &b).unwrap();
        ari_ok &= got == brute_force_ari(&a, &b);
    }
    ok &= ari_ok;
    notes.push(format!("ARI exact {ari_ok}"));

    // Procrustes recovers a planted rotation.
    let src = DMatrix::from_fn(50, 3, |_, _| r.random::<f64>() - 0.5);
    let w = random_orthogonal(3, &mut r);
    let rec = procrustes(&src, &(&src * &w)).unwrap();
    let p_err = (rec - w).amax();
    ok &= p_err <= 1e-8;
    notes.push(format!("procrustes {p_err:.1e}"));
    verdict(ok, notes.join(", "))
}

/// ARI from counts of co-clustered pairs, as a fraction of two integers.
fn brute_force_ari(a: &[u8], b: &[u8]) -> f64 {
    let m = a.len();
    let (mut both, mut in_a, mut in_b) = (0i128, 0i128, 0i128);
    for i in 0..m {
        for j in i + 1..m {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += i128::from(sa && sb);
            in_a += i128::from(sa);
            in_b += i128::from(sb);
        }
    }
    let pairs = (m * (m - 1) / 2) as i128;
    let num = both * pairs - in_a * in_b;
    let den = (in_a + in_b) * pairs - 2 * in_a * in_b;
    // Zero only when both partitions are all singletons or both a single block.
    if den == 0 {
        return 1.0;
    }
    (2 * num) as f64 / den as f64
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut configs = vec![
        ExperimentKind::Mixture(MixtureConfig { n: 800, n_in: 200, d_max: 8, ..Default::default() }),
        ExperimentKind::Bipartite(BipartiteConfig { donors: 300, charities: 80, trials: 99, ..Default::default() }),
        ExperimentKind::Rates(RatesConfig {
            n_grid: vec![100, 150, 200],
            replicates: 3,
            fresh_points: 10,
            ..rdpg_rates()
        }),
        ExperimentKind::Bounds(gaussian_bounds(150, 5)),
    ];
    if let Some(path) = abalone_path() {
        configs.push(ExperimentKind::Abalone(AbaloneConfig { m_values: vec![200], ..AbaloneConfig::new(path) }));
    }
    let mut checked = HashMap::new();
    for (k, kind) in configs.into_iter().enumerate() {
        let cfg = ExperimentConfig { seed: 31 + k as u64, scale: 1.0, out_dir: None, kind };
        let out = run_experiment(&cfg).expect("run");
        let run_dir = write_run(&dir.path().join(cfg.kind.name()), &cfg, &out, false).expect("write");
        let (_, differing) = replay(&run_dir).expect("replay");
        checked.insert(cfg.kind.name(), (out.artifacts.len(), differing));
    }
    let mut names: Vec<_> = checked.keys().copied().collect();
    names.sort_unstable();
    let ok = checked.values().all(|(_, d)| d.is_empty());
    let detail = names
        .iter()
        .map(|n| {
            let (count, diff) = &checked[n];
            if diff.is_empty() {
                format!("{n}: {count} files identical")
            } else {
                format!("{n}: differs in {}", diff.join(" "))
            }
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(ok, detail)
}

fn main() {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: u32| filter.is_empty() || filter.contains(&c);
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let timed = |c: u32, f: &dyn Fn() -> Outcome, results: &mut Vec<(u32, Outcome, f64)>| {
        if wanted(c) {
            let t = Instant::now();
            let o = f();
            results.push((c, o, t.elapsed().as_secs_f64()));
        }
    };
    timed(1, &criterion_1, &mut results);
    if wanted(2) || wanted(3) {
        let t = Instant::now();
        let (c2, c3) = criteria_2_3();
        let secs = t.elapsed().as_secs_f64();
        if wanted(2) {
            results.push((2, c2, secs));
        }
        if wanted(3) {
            results.push((3, c3, 0.0));
        }
    }
    timed(4, &criterion_4, &mut results);
    timed(5, &criterion_5, &mut results);
    timed(6, &criterion_6, &mut results);
    timed(7, &criterion_7, &mut results);
    timed(8, &criterion_8, &mut results);
    timed(9, &criterion_9, &mut results);

    let mut unexpected = Vec::new();
    for (c, outcome, secs) in &results {
        let known = KNOWN_FAILURES.contains(c);
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => {
                if known {
                    unexpected.push(*c);
                }
                ("PASS", d)
            }
            Outcome::Fail(d) => {
                if !known {
                    unexpected.push(*c);
                }
                (if known { "FAIL (known)" } else { "FAIL" }, d)
            }
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        println!("criterion {c}: {tag} [{secs:.1}s] {detail}");
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
