use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Squared,
    Hinge,
    Logistic,
}

/// `g(z) = <w, z> + b`, classifying by sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub loss: Loss,
    /// Constraint `|w| <= radius_bound` imposed during fitting.
    pub radius_bound: Option<f64>,
}

impl LinearClassifier {
    pub fn decision(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.intercept
    }

    pub fn decisions(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        if z.ncols() != self.weights.len() {
            return Err(Error::arg(format!("model has dimension {}, data has {}", self.weights.len(), z.ncols())));
        }
        Ok((0..z.nrows()).map(|i| self.decision(&row(z, i))).collect())
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Ridge added to the squared-loss normal equations.
    pub ridge: f64,
    /// `l2` in `mean loss + (l2 / 2) |(w, b)|^2` for the hinge and logistic losses.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Seeds the coordinate order of the hinge solver.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { ridge: 1e-8, l2: 1e-4, max_iter: 2000, tol: 1e-6, seed: 0 }
    }
}

fn row(z: &DMatrix<f64>, i: usize) -> Vec<f64> {
    z.row(i).iter().copied().collect()
}

fn check_inputs(z: &DMatrix<f64>, y: &[i8]) -> Result<()> {
    let (m, d) = z.shape();
    if y.len() != m {
        return Err(Error::arg(format!("{m} training rows but {} labels", y.len())));
    }
    if m == 0 || d == 0 {
        return Err(Error::arg("empty training set"));
    }
    if let Some(v) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::arg(format!("labels must be -1 or +1, found {v}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateLabels(format!("all {m} training labels are {}", y[0])));
    }
    if m < d + 1 {
        log::warn!("fitting a {d}-dimensional classifier on only {m} points");
    }
    Ok(())
}

fn project(w: &mut [f64], bound: Option<f64>) {
    if let Some(r) = bound {
        let nw = norm(w);
        if nw > r {
            let s = r / nw;
            w.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Fits a binary linear classifier with default options.
pub fn fit_linear(z: &DMatrix<f64>, y: &[i8], loss: Loss, radius_bound: Option<f64>) -> Result<LinearClassifier> {
    Ok(fit_linear_with(z, y, loss, radius_bound, &FitOptions::default())?.0)
}

/// Fits a binary classifier and returns the recorded training-objective trace.
///
/// The squared loss is solved in closed form. The hinge loss runs dual
/// coordinate descent, then projected subgradient steps when the radius
/// bound is active; the trace records the best objective seen so far. The
/// logistic loss runs projected gradient descent with backtracking, which
/// decreases the objective at every step.
pub fn fit_linear_with(
    z: &DMatrix<f64>,
    y: &[i8],
    loss: Loss,
    radius_bound: Option<f64>,
    opts: &FitOptions,
) -> Result<(LinearClassifier, Vec<f64>)> {
    check_inputs(z, y)?;
    if let Some(r) = radius_bound {
        if !(r > 0.0) {
            return Err(Error::arg(format!("radius bound must be positive, got {r}")));
        }
    }
    let (w, b, trace) = match loss {
        Loss::Squared => fit_squared(z, y, radius_bound, opts.ridge)?,
        Loss::Hinge => fit_hinge(z, y, radius_bound, opts),
        Loss::Logistic => fit_logistic(z, y, radius_bound, opts),
    };
    Ok((LinearClassifier { weights: w, intercept: b, loss, radius_bound }, trace))
}

fn squared_objective(z: &DMatrix<f64>, y: &[i8], w: &[f64], b: f64) -> f64 {
    (0..z.nrows()).map(|i| (f64::from(y[i]) - dot(w, &row(z, i)) - b).powi(2)).sum::<f64>() / z.nrows() as f64
}

fn fit_squared(z: &DMatrix<f64>, y: &[i8], bound: Option<f64>, ridge: f64) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let (m, d) = z.shape();
    let a = DMatrix::from_fn(m, d + 1, |i, j| if j < d { z[(i, j)] } else { 1.0 });
    let gram = a.transpose() * &a;
    let rhs = a.transpose() * DVector::from_iterator(m, y.iter().map(|&v| f64::from(v)));
    let solve = |mu: f64| -> Result<DVector<f64>> {
        let mut g = gram.clone();
        for k in 0..d {
            g[(k, k)] += mu;
        }
        // A tiny intercept ridge keeps the system definite when a column is constant.
        g[(d, d)] += ridge;
        match g.clone().cholesky() {
            Some(c) => Ok(c.solve(&rhs)),
            None => g.lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular normal equations".into())),
        }
    };
    let wnorm = |t: &DVector<f64>| t.rows(0, d).norm();
    let mut theta = solve(ridge)?;
    if let Some(r) = bound {
        if wnorm(&theta) > r {
            // |w(mu)| decreases in mu; bisect on log(mu) for the active constraint.
            let mut lo = ridge.max(1e-12);
            let mut hi = lo;
            let mut t_hi = theta.clone();
            while wnorm(&t_hi) > r {
                lo = hi;
                hi *= 10.0;
                t_hi = solve(hi)?;
            }
            for _ in 0..100 {
                let mid = (lo * hi).sqrt();
                let t = solve(mid)?;
                if wnorm(&t) > r {
                    lo = mid;
                } else {
                    hi = mid;
                    t_hi = t;
                }
                if hi / lo < 1.0 + 1e-12 {
                    break;
                }
            }
            theta = t_hi;
        }
    }
    let mut w: Vec<f64> = theta.rows(0, d).iter().copied().collect();
    project(&mut w, bound);
    let b = theta[d];
    let obj = squared_objective(z, y, &w, b);
    Ok((w, b, vec![obj]))
}

fn hinge_objective(x: &[Vec<f64>], y: &[i8], theta: &[f64], l2: f64) -> f64 {
    let loss: f64 = x.iter().zip(y).map(|(xi, &yi)| (1.0 - f64::from(yi) * dot(theta, xi)).max(0.0)).sum();
    loss / x.len() as f64 + 0.5 * l2 * dot(theta, theta)
}

/// Rows with a trailing 1 so the intercept is the last coordinate of `theta`.
fn augmented_rows(z: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..z.nrows())
        .map(|i| {
            let mut r = row(z, i);
            r.push(1.0);
            r
        })
        .collect()
}

fn fit_hinge(z: &DMatrix<f64>, y: &[i8], bound: Option<f64>, opts: &FitOptions) -> (Vec<f64>, f64, Vec<f64>) {
    let x = augmented_rows(z);
    let (m, d) = (x.len(), z.ncols());
    let c = 1.0 / (opts.l2 * m as f64);
    let qii: Vec<f64> = x.iter().map(|xi| dot(xi, xi)).collect();
    let mut alpha = vec![0.0; m];
    let mut theta = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..m).collect();
    let mut r = crate::seeds::rng(opts.seed);
    let mut best = theta.clone();
    let mut best_obj = hinge_objective(&x, y, &theta, opts.l2);
    let mut trace = vec![best_obj];

    for _ in 0..opts.max_iter {
        order.shuffle(&mut r);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let yi = f64::from(y[i]);
            let g = yi * dot(&theta, &x[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 && qii[i] > 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * yi;
                for (t, xv) in theta.iter_mut().zip(&x[i]) {
                    *t += step * xv;
                }
            }
        }
        let obj = hinge_objective(&x, y, &theta, opts.l2);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&theta);
        }
        trace.push(best_obj);
        if pg_max - pg_min < opts.tol.max(1e-12) * 100.0 {
            break;
        }
    }

    if let Some(rad) = bound {
        if norm(&best[..d]) > rad {
            // The unconstrained run only warm-starts; the trace covers feasible iterates.
            trace.clear();
            projected_subgradient(&x, y, rad, opts, &mut best, &mut trace);
        }
    }
    let b = best[d];
    best.truncate(d);
    (best, b, trace)
}

fn projected_subgradient(
    x: &[Vec<f64>],
    y: &[i8],
    rad: f64,
    opts: &FitOptions,
    theta: &mut [f64],
    trace: &mut Vec<f64>,
) {
    let d = theta.len() - 1;
    let m = x.len() as f64;
    project(&mut theta[..d], Some(rad));
    let xmax = x.iter().map(|xi| norm(xi)).fold(0.0f64, f64::max).max(1e-12);
    let eta0 = rad.max(1.0) / xmax;
    let mut cur = theta.to_vec();
    let mut best_obj = hinge_objective(x, y, theta, opts.l2);
    trace.push(best_obj);
    for t in 1..=opts.max_iter.max(1) {
        let mut g: Vec<f64> = cur.iter().map(|v| opts.l2 * v).collect();
        for (xi, &yi) in x.iter().zip(y) {
            let yi = f64::from(yi);
            if yi * dot(&cur, xi) < 1.0 {
                for (gk, xk) in g.iter_mut().zip(xi) {
                    *gk -= yi * xk / m;
                }
            }
        }
        let eta = eta0 / (t as f64).sqrt();
        for (c, gk) in cur.iter_mut().zip(&g) {
            *c -= eta * gk;
        }
        project(&mut cur[..d], Some(rad));
        let obj = hinge_objective(x, y, &cur, opts.l2);
        if obj < best_obj {
            best_obj = obj;
            theta.copy_from_slice(&cur);
        }
        trace.push(best_obj);
    }
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn logistic_objective(x: &[Vec<f64>], y: &[i8], theta: &[f64], l2: f64) -> f64 {
    let loss: f64 = x.iter().zip(y).map(|(xi, &yi)| softplus(-f64::from(yi) * dot(theta, xi))).sum();
    loss / x.len() as f64 + 0.5 * l2 * dot(theta, theta)
}

fn logistic_gradient(x: &[Vec<f64>], y: &[i8], theta: &[f64], l2: f64) -> Vec<f64> {
    let m = x.len() as f64;
    let mut g: Vec<f64> = theta.iter().map(|v| l2 * v).collect();
    for (xi, &yi) in x.iter().zip(y) {
        let yi = f64::from(yi);
        let s = yi * dot(theta, xi);
        // d/ds log(1 + e^{-s}) = -1 / (1 + e^{s})
        let coef = -yi / (1.0 + s.exp()) / m;
        for (gk, xk) in g.iter_mut().zip(xi) {
            *gk += coef * xk;
        }
    }
    g
}

fn fit_logistic(z: &DMatrix<f64>, y: &[i8], bound: Option<f64>, opts: &FitOptions) -> (Vec<f64>, f64, Vec<f64>) {
    let x = augmented_rows(z);
    let d = z.ncols();
    let mut theta = vec![0.0; d + 1];
    let mut f = logistic_objective(&x, y, &theta, opts.l2);
    let mut trace = vec![f];
    let mut step = 1.0;
    for _ in 0..opts.max_iter {
        let g = logistic_gradient(&x, y, &theta, opts.l2);
        let mut moved = false;
        for _ in 0..60 {
            let mut p: Vec<f64> = theta.iter().zip(&g).map(|(t, gk)| t - step * gk).collect();
            project(&mut p[..d], bound);
            let diff: Vec<f64> = p.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let fp = logistic_objective(&x, y, &p, opts.l2);
            if fp <= f + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * step) {
                let gm = norm(&diff) / step;
                if fp <= f {
                    theta = p;
                    f = fp;
                    moved = true;
                }
                trace.push(f);
                step *= 2.0;
                if gm < opts.tol {
                    return finish(theta, d, trace);
                }
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    finish(theta, d, trace)
}

fn finish(mut theta: Vec<f64>, d: usize, trace: Vec<f64>) -> (Vec<f64>, f64, Vec<f64>) {
    let b = theta[d];
    theta.truncate(d);
    (theta, b, trace)
}

/// `sign(Z w + b)` with zero mapped to `+1`.
pub fn predict(model: &LinearClassifier, z: &DMatrix<f64>) -> Result<Vec<i8>> {
    Ok(model.decisions(z)?.into_iter().map(|v| if v >= 0.0 { 1 } else { -1 }).collect())
}

/// Fraction of positions where `predicted` and `truth` differ.
pub fn misclassification_rate<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::arg(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::arg("no labels to compare"));
    }
    let wrong = predicted.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// One-vs-rest multi-class reduction; predicts the class with the largest
/// decision value, the smaller class on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRest {
    /// Sorted ascending.
    pub classes: Vec<i64>,
    pub models: Vec<LinearClassifier>,
}

pub fn fit_one_vs_rest(
    z: &DMatrix<f64>,
    labels: &[i64],
    loss: Loss,
    radius_bound: Option<f64>,
    opts: &FitOptions,
) -> Result<OneVsRest> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels(format!("need at least two classes, found {}", classes.len())));
    }
    let models = classes
        .par_iter()
        .map(|&c| {
            let y: Vec<i8> = labels.iter().map(|&l| if l == c { 1 } else { -1 }).collect();
            Ok(fit_linear_with(z, &y, loss, radius_bound, opts)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OneVsRest { classes, models })
}

impl OneVsRest {
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<Vec<i64>> {
        let scores = self.models.iter().map(|m| m.decisions(z)).collect::<Result<Vec<_>>>()?;
        Ok((0..z.nrows())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.classes.len() {
                    if scores[k][i] > scores[best][i] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn separable(m: usize, seed: u64) -> (DMatrix<f64>, Vec<i8>) {
        let mut r = crate::seeds::rng(seed);
        let y: Vec<i8> = (0..m).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let z = DMatrix::from_fn(m, 2, |i, j| {
            let c = if j == 0 { 2.0 * f64::from(y[i]) } else { 0.0 };
            c + 0.5 * r.sample::<f64, _>(StandardNormal)
        });
        (z, y)
    }

    #[test]
    fn one_dimensional_separable_squared() {
        let z = DMatrix::from_column_slice(4, 1, &[-1.0, -1.0, 1.0, 1.0]);
        let y = [-1, -1, 1, 1];
        let m = fit_linear(&z, &y, Loss::Squared, None).unwrap();
        assert!(m.weights[0] > 0.0);
        assert_eq!(misclassification_rate(&predict(&m, &z).unwrap(), &y).unwrap(), 0.0);
    }

    #[test]
    fn squared_matches_hand_normal_equations() {
        // Points (0,-1), (1,1), (3,1): minimise sum (y - w z - b)^2.
        let z = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
        let y = [-1, 1, 1];
        // [sum z^2, sum z; sum z, m] [w; b] = [sum z y; sum y]  ->  [10 4; 4 3][w; b] = [4; 1]
        let det = 10.0 * 3.0 - 4.0 * 4.0;
        let w = (3.0 * 4.0 - 4.0 * 1.0) / det;
        let b = (10.0 * 1.0 - 4.0 * 4.0) / det;
        let m = fit_linear(&z, &y, Loss::Squared, None).unwrap();
        assert!((m.weights[0] - w).abs() < 1e-6 && (m.intercept - b).abs() < 1e-6);
    }

    #[test]
    fn radius_bound_is_respected_for_every_loss() {
        let (z, y) = separable(60, 1);
        for loss in [Loss::Squared, Loss::Hinge, Loss::Logistic] {
            let (m, trace) = fit_linear_with(&z, &y, loss, Some(0.001), &FitOptions::default()).unwrap();
            assert!(norm(&m.weights) <= 0.001 + 1e-8, "{loss:?}: {}", norm(&m.weights));
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{loss:?} objective increased");
            }
        }
    }

    #[test]
    fn active_squared_bound_sits_on_the_sphere() {
        let (z, y) = separable(40, 2);
        let m = fit_linear(&z, &y, Loss::Squared, Some(0.05)).unwrap();
        assert!((norm(&m.weights) - 0.05).abs() < 1e-8);
    }

    #[test]
    fn hinge_and_logistic_separate_clean_data() {
        let (z, y) = separable(100, 3);
        for loss in [Loss::Hinge, Loss::Logistic, Loss::Squared] {
            let (m, trace) = fit_linear_with(&z, &y, loss, None, &FitOptions::default()).unwrap();
            let err = misclassification_rate(&predict(&m, &z).unwrap(), &y).unwrap();
            assert!(err <= 0.02, "{loss:?}: {err}");
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn hinge_solution_is_near_optimal() {
        // Oracle: a long run of the plain subgradient method on the same objective.
        let mut r = crate::seeds::rng(4);
        let m = 80;
        let z = DMatrix::from_fn(m, 3, |_, _| r.sample::<f64, _>(StandardNormal));
        let y: Vec<i8> = (0..m)
            .map(|i| if z[(i, 0)] + 0.5 * z[(i, 1)] + 0.3 * r.sample::<f64, _>(StandardNormal) > 0.0 { 1 } else { -1 })
            .collect();
        let opts = FitOptions { l2: 0.01, ..FitOptions::default() };
        let x = augmented_rows(&z);
        let fitted = fit_linear_with(&z, &y, Loss::Hinge, None, &opts).unwrap().0;
        let mut theta = fitted.weights.clone();
        theta.push(fitted.intercept);
        let ours = hinge_objective(&x, &y, &theta, opts.l2);

        let mut cur = vec![0.0; 4];
        let mut best = f64::INFINITY;
        for t in 1..=20000 {
            let mut g: Vec<f64> = cur.iter().map(|v| opts.l2 * v).collect();
            for (xi, &yi) in x.iter().zip(&y) {
                let yi = f64::from(yi);
                if yi * dot(&cur, xi) < 1.0 {
                    for k in 0..4 {
                        g[k] -= yi * xi[k] / m as f64;
                    }
                }
            }
            for k in 0..4 {
                cur[k] -= 0.5 / (t as f64).sqrt() * g[k];
            }
            best = best.min(hinge_objective(&x, &y, &cur, opts.l2));
        }
        assert!(ours <= best + 1e-4, "{ours} vs {best}");
    }

    #[test]
    fn prediction_rules() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.0, 0.0, -3.0, 5.0]);
        let m = LinearClassifier { weights: vec![0.0, 0.0], intercept: 1.0, loss: Loss::Squared, radius_bound: None };
        assert_eq!(predict(&m, &z).unwrap(), vec![1, 1, 1]);
        let m = LinearClassifier { weights: vec![1.0, 0.5], intercept: 0.25, loss: Loss::Squared, radius_bound: None };
        let p = predict(&m, &z).unwrap();
        let neg = LinearClassifier { weights: vec![-1.0, -0.5], intercept: -0.25, ..m.clone() };
        let q = predict(&neg, &z).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert_eq!(*a, -*b);
        }
        let zero = LinearClassifier { weights: vec![0.0, 0.0], intercept: 0.0, ..m.clone() };
        assert_eq!(predict(&zero, &z).unwrap(), vec![1, 1, 1]);
        assert!(predict(&m, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn misclassification_counts() {
        let a = [1, 2, 3, 1, 2, 3, 1, 2, 3, 1];
        assert_eq!(misclassification_rate(&a, &a).unwrap(), 0.0);
        let b = [-1i8, 1, -1];
        let c = [1i8, -1, 1];
        assert_eq!(misclassification_rate(&b, &c).unwrap(), 1.0);
        let mut d = a;
        d[0] = 9;
        d[4] = 9;
        d[7] = 9;
        assert!((misclassification_rate(&d, &a).unwrap() - 0.3).abs() < 1e-15);
        assert!(misclassification_rate(&a[..2], &a).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let z = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(fit_linear(&z, &[1, 1, 1], Loss::Hinge, None), Err(Error::DegenerateLabels(_))));
        assert!(matches!(fit_linear(&z, &[1, 0, 1], Loss::Hinge, None), Err(Error::Argument(_))));
    }

    #[test]
    fn squared_predictions_invariant_under_rotation() {
        let mut r = crate::seeds::rng(5);
        for _ in 0..10 {
            let z = DMatrix::from_fn(50, 3, |_, _| r.sample::<f64, _>(StandardNormal));
            let y: Vec<i8> = (0..50).map(|_| if r.random::<bool>() { 1 } else { -1 }).collect();
            let q = DMatrix::from_fn(3, 3, |_, _| r.sample::<f64, _>(StandardNormal)).qr().q();
            let test = DMatrix::from_fn(30, 3, |_, _| r.sample::<f64, _>(StandardNormal));
            let m1 = fit_linear(&z, &y, Loss::Squared, None).unwrap();
            let m2 = fit_linear(&(&z * &q), &y, Loss::Squared, None).unwrap();
            let d1 = m1.decisions(&test).unwrap();
            let d2 = m2.decisions(&(&test * &q)).unwrap();
            for (a, b) in d1.iter().zip(&d2) {
                assert!((a - b).abs() < 1e-9);
                if a.abs() > 1e-8 {
                    assert_eq!(a.signum(), b.signum());
                }
            }
        }
    }

    #[test]
    fn one_vs_rest_three_clusters() {
        let mut r = crate::seeds::rng(6);
        let centers = [(0.0, 4.0), (4.0, -2.0), (-4.0, -2.0)];
        let labels: Vec<i64> = (0..150).map(|i| [7, 3, 5][i % 3]).collect();
        let z = DMatrix::from_fn(150, 2, |i, j| {
            let c = centers[i % 3];
            (if j == 0 { c.0 } else { c.1 }) + 0.5 * r.sample::<f64, _>(StandardNormal)
        });
        for loss in [Loss::Squared, Loss::Hinge, Loss::Logistic] {
            let model = fit_one_vs_rest(&z, &labels, loss, None, &FitOptions::default()).unwrap();
            assert_eq!(model.classes, vec![3, 5, 7]);
            let err = misclassification_rate(&model.predict(&z).unwrap(), &labels).unwrap();
            assert!(err < 0.02, "{loss:?}: {err}");
        }
    }

    #[test]
    fn one_vs_rest_ties_go_to_smaller_class() {
        let tie = LinearClassifier { weights: vec![0.0], intercept: 0.5, loss: Loss::Squared, radius_bound: None };
        let model = OneVsRest { classes: vec![1, 2, 3], models: vec![tie.clone(), tie.clone(), tie] };
        assert_eq!(model.predict(&DMatrix::from_element(2, 1, 1.0)).unwrap(), vec![1, 1]);
    }

    #[test]
    fn model_serializes() {
        let m = LinearClassifier { weights: vec![0.5], intercept: -1.0, loss: Loss::Hinge, radius_bound: Some(2.0) };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"hinge\""));
        assert_eq!(serde_json::from_str::<LinearClassifier>(&s).unwrap(), m);
    }
}
