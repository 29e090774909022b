//! Shared helpers for the acceptance suite: an independent projected-gradient
//! oracle for the weighted projection, an independent bisection root oracle,
//! and seeded instance generators.
//!
//! The oracles deliberately share no code with the library's solver: the
//! projection oracle works on the primal with Euclidean projections, and the
//! root oracle is plain bracketing bisection.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use darp_core::types::{ClassMarginals, PseudoLabelMatrix};

/// A projection instance in raw form, as both solvers see it.
pub struct OracleProblem {
    pub base: Array2<f64>,
    pub row_targets: Vec<f64>,
    pub col_targets: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Euclidean projection onto the affine set {X : X1 = r, X'1 = c}. The
/// displacement has the form a1' + 1b'; solving the constraint equations for
/// (a, b) gives the orthogonal projection in closed form.
fn affine_project(x: &mut Array2<f64>, r: &[f64], c: &[f64]) {
    let (m, k) = x.dim();
    let u: Vec<f64> = (0..m).map(|i| r[i] - x.row(i).sum()).collect();
    let v: Vec<f64> = (0..k).map(|j| c[j] - x.column(j).sum()).collect();
    let s: f64 = u.iter().sum();
    let bt = s / (2.0 * k as f64);
    let a: Vec<f64> = u.iter().map(|ui| (ui - bt) / k as f64).collect();
    let sum_a: f64 = a.iter().sum();
    let b: Vec<f64> = v.iter().map(|vj| (vj - sum_a) / m as f64).collect();
    for ((i, j), e) in x.indexed_iter_mut() {
        *e += a[i] + b[j];
    }
}

/// Projected gradient descent on the weighted relative entropy
/// sum_ij w_i x_ij ln(x_ij / a_ij), for instances whose base is strictly
/// positive (so the optimum is interior and the affine projection alone is
/// exact). Starts from the independence coupling r c' / total, which is
/// feasible and strictly positive.
pub fn pgd_solve(p: &OracleProblem, steps: usize, eta: f64) -> Array2<f64> {
    let (m, k) = p.base.dim();
    let total: f64 = p.row_targets.iter().sum();
    let mut x = Array2::from_shape_fn((m, k), |(i, j)| {
        p.row_targets[i] * p.col_targets[j] / total
    });
    let mut grad = Array2::<f64>::zeros((m, k));
    for _ in 0..steps {
        for ((i, j), g) in grad.indexed_iter_mut() {
            let ratio = x[[i, j]].max(1e-12) / p.base[[i, j]];
            *g = p.weights[i] * (ratio.ln() + 1.0);
        }
        x.scaled_add(-eta, &grad);
        affine_project(&mut x, &p.row_targets, &p.col_targets);
    }
    x
}

/// The oracle's own objective evaluator: sum_ij w_i x ln(x / a) with
/// 0 ln 0 = 0. Entries at or below zero contribute nothing (the iterates may
/// carry sub-ulp negative dust).
pub fn relative_entropy_objective(base: &Array2<f64>, x: &Array2<f64>, weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((i, j), &v) in x.indexed_iter() {
        if v > 0.0 {
            total += weights[i] * v * (v / base[[i, j]]).ln();
        }
    }
    total
}

/// Bracketing bisection for sum_m a_m Z^{p_m} = target with a_m >= 0,
/// p_m > 0. Expands the bracket by doubling, then halves until the interval
/// collapses in floating point.
pub fn bisect_root(terms: &[(f64, f64)], target: f64) -> f64 {
    if target == 0.0 {
        return 0.0;
    }
    let f = |z: f64| terms.iter().map(|&(a, p)| a * z.powf(p)).sum::<f64>() - target;
    let mut hi = 1.0_f64;
    let mut guard = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        assert!(guard < 2000, "bisection oracle failed to bracket the root");
    }
    let mut lo = 0.0_f64;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Row-stochastic matrix with entries drawn uniformly from [0.1, 1) before
/// normalization — strictly positive and well-conditioned.
pub fn random_labels(rng: &mut ChaCha8Rng, m: usize, k: usize) -> PseudoLabelMatrix {
    let mut values = Array2::zeros((m, k));
    for i in 0..m {
        let row: Vec<f64> = (0..k).map(|_| 0.1 + 0.9 * rng.random::<f64>()).collect();
        let sum: f64 = row.iter().sum();
        for (j, v) in row.iter().enumerate() {
            values[[i, j]] = v / sum;
        }
    }
    PseudoLabelMatrix::new(values).expect("generated rows are stochastic")
}

/// Positive class marginals drawn uniformly from [0.2, 1) and rescaled to
/// the requested total — bounded away from zero so instances stay feasible
/// with healthy margins.
pub fn random_marginals(rng: &mut ChaCha8Rng, k: usize, total: f64) -> ClassMarginals {
    let mass: Vec<f64> = (0..k).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
    ClassMarginals::new(mass)
        .expect("generated mass is positive")
        .rescaled_to(total)
        .0
}
