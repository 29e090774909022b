//! Entropy-weighted I-projection by dual coordinate ascent.
//!
//! Given a nonnegative base matrix A, row targets r, column targets c, and
//! per-row weights w, the solver minimizes
//!
//! ```text
//!     sum_ij w_i * M_ij * ln(M_ij / A_ij)
//! ```
//!
//! over M >= 0 with M 1 = r and M^T 1 = c. Lagrange duality gives the
//! scaling form M_ij = A_ij * alpha_i * beta_j^(1/w_i); the solver alternates
//! closed-form row updates (alpha) with per-class scalar root solves (beta),
//! each an exact coordinate maximization of the concave dual, so the dual
//! objective never decreases. The final iteration is always a row update,
//! which makes the returned matrix exactly row-feasible; column error is
//! what `tol` measures.
//!
//! All reductions run in fixed ascending-index order per row or per class,
//! so parallel and serial execution produce identical bits.

mod newton;

pub use newton::newton_root;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{ConfidenceWeights, DualState};

/// Relative tolerance on |sum(r) - sum(c)|; targets further apart than this
/// describe an inconsistent transport problem.
const TARGET_BALANCE_TOL: f64 = 1e-9;

/// Relative dual-objective change over the last four updates below which the
/// ascent is considered stalled.
const PLATEAU_TOL: f64 = 1e-12;

/// One projection instance. Invariants are checked once at construction:
/// nonnegative finite base with support in every row, strictly positive row
/// targets, nonnegative column targets balancing the row total, strictly
/// positive weights.
#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    base: Array2<f64>,
    row_targets: Vec<f64>,
    col_targets: Vec<f64>,
    weights: Vec<f64>,
}

impl ProjectionProblem {
    pub fn new(
        base: Array2<f64>,
        row_targets: Vec<f64>,
        col_targets: Vec<f64>,
        weights: &ConfidenceWeights,
    ) -> Result<Self> {
        let (m, k) = base.dim();
        if m < 1 || k < 2 {
            return Err(Error::InvalidInput(format!(
                "projection base must be at least 1 x 2, got {m} x {k}"
            )));
        }
        if row_targets.len() != m || weights.len() != m || col_targets.len() != k {
            return Err(Error::InvalidInput(format!(
                "target/weight lengths ({}, {}, {}) do not match base {m} x {k}",
                row_targets.len(),
                col_targets.len(),
                weights.len(),
            )));
        }
        for ((i, j), &v) in base.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "base entry ({i}, {j}) = {v} must be finite and >= 0"
                )));
            }
        }
        for (i, row) in base.rows().into_iter().enumerate() {
            if !row.iter().any(|&v| v > 0.0) {
                return Err(Error::DegenerateRow { row: i });
            }
        }
        for (i, &r) in row_targets.iter().enumerate() {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "row target {i} is {r}; must be finite and > 0"
                )));
            }
        }
        for (j, &c) in col_targets.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "column target {j} is {c}; must be finite and >= 0"
                )));
            }
        }
        let row_total: f64 = row_targets.iter().sum();
        let col_total: f64 = col_targets.iter().sum();
        if (row_total - col_total).abs() > TARGET_BALANCE_TOL * row_total.max(col_total) {
            return Err(Error::InvalidInput(format!(
                "row targets sum to {row_total} but column targets sum to {col_total}"
            )));
        }
        Ok(Self {
            base,
            row_targets,
            col_targets,
            weights: weights.values().to_vec(),
        })
    }

    pub fn num_samples(&self) -> usize {
        self.base.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.base.ncols()
    }

    pub fn base(&self) -> &Array2<f64> {
        &self.base
    }

    pub fn row_targets(&self) -> &[f64] {
        &self.row_targets
    }

    pub fn col_targets(&self) -> &[f64] {
        &self.col_targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total transported mass, as measured by the column targets.
    pub fn total_mass(&self) -> f64 {
        self.col_targets.iter().sum()
    }
}

/// Knobs for [`solve`]. `iters` counts coordinate updates exactly as run;
/// `tol` is relative column feasibility; the newton fields configure the
/// per-class root solves.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub iters: usize,
    pub tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { iters: 10, tol: 1e-6, newton_tol: 1e-12, newton_max_iter: 100 }
    }
}

/// Outcome of a full dual ascent run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub state: DualState,
    /// The scaled matrix A_ij * alpha_i * beta_j^(1/w_i).
    pub solution: Array2<f64>,
    /// Dual objective before any update, then after each update
    /// (`iters + 1` values). Nondecreasing up to root-solve tolerance.
    pub dual_objective_trace: Vec<f64>,
    /// max_i |row sum - r_i|. Tiny by construction: the run ends on a row
    /// update.
    pub row_residual: f64,
    /// max_j |column sum - c_j|.
    pub col_residual: f64,
    /// Whether col_residual <= tol * total mass.
    pub converged: bool,
    pub iterations: usize,
}

/// Neumaier-compensated accumulator. Fixed-order summation with an O(eps^2)
/// error bound, cheap enough to use for every objective evaluation.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Row-update step: alpha_i <- r_i / Sigma_i with
/// Sigma_i = sum_j A_ij * beta_j^(1/w_i). Exact coordinate maximization of
/// the dual in the row block; afterwards every row of the scaled matrix sums
/// to exactly r_i (up to representation error).
pub fn alpha_update(problem: &ProjectionProblem, state: &mut DualState) -> Result<()> {
    let log_beta: Vec<f64> = state.beta.iter().map(|&b| b.ln()).collect();
    let alphas: Result<Vec<f64>> = (0..problem.num_samples())
        .into_par_iter()
        .map(|i| {
            let q = 1.0 / problem.weights[i];
            let row = problem.base.row(i);
            let mut s = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    s += a * (q * log_beta[j]).exp();
                }
            }
            if s == 0.0 {
                return Err(Error::DegenerateRow { row: i });
            }
            if !s.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "row {i} scaling overflowed; weights and targets are too extreme"
                )));
            }
            Ok(problem.row_targets[i] / s)
        })
        .collect();
    state.alpha = alphas?;
    state.iteration += 1;
    Ok(())
}

/// Column-pricing step: for each class j with positive target, solve
/// sum_i (A_ij * alpha_i) * Z^(1/w_i) = c_j for beta_j. Zero targets price
/// the column out (beta_j = 0). Exact coordinate maximization of the dual in
/// the column block, up to the root-solve tolerance.
pub fn beta_update(
    problem: &ProjectionProblem,
    state: &mut DualState,
    newton_tol: f64,
    newton_max_iter: usize,
) -> Result<()> {
    let alpha = &state.alpha;
    let betas: Result<Vec<f64>> = (0..problem.num_classes())
        .into_par_iter()
        .map(|j| {
            let c = problem.col_targets[j];
            if c == 0.0 {
                return Ok(0.0);
            }
            let mut terms = Vec::new();
            let column = problem.base.column(j);
            for ((&base, &al), &w) in column.iter().zip(alpha).zip(&problem.weights) {
                let a = base * al;
                if a > 0.0 {
                    terms.push((a, 1.0 / w));
                }
            }
            if terms.is_empty() {
                return Err(Error::DegenerateColumn { class: j, target: c });
            }
            let warm = if state.beta[j] > 0.0 { state.beta[j] } else { 1.0 };
            newton_root(&terms, c, warm, newton_tol, newton_max_iter)
        })
        .collect();
    state.beta = betas?;
    state.iteration += 1;
    Ok(())
}

/// The scaled matrix for a dual state: A_ij * alpha_i * beta_j^(1/w_i).
pub fn scaled_solution(problem: &ProjectionProblem, state: &DualState) -> Array2<f64> {
    let (m, k) = problem.base.dim();
    let log_beta: Vec<f64> = state.beta.iter().map(|&b| b.ln()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    (0..m)
        .into_par_iter()
        .map(|i| {
            let q = 1.0 / problem.weights[i];
            let base_row = problem.base.row(i);
            (0..k)
                .map(|j| {
                    let a = base_row[j];
                    if a > 0.0 {
                        a * state.alpha[i] * (q * log_beta[j]).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect_into_vec(&mut rows);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((m, k), flat).expect("shape preserved")
}

/// Lagrangian dual objective in scaling form:
///
/// ```text
///     g = - sum_ij w_i A_ij alpha_i beta_j^(1/w_i)
///         + sum_i w_i (1 + ln alpha_i) r_i
///         + sum_j ln(beta_j) c_j        (classes with c_j > 0)
/// ```
///
/// Zero at the all-ones state when A already satisfies the row targets.
/// Returns -inf for states outside the dual domain (a priced-out column
/// that still carries target mass, or a zero alpha).
pub fn dual_objective(problem: &ProjectionProblem, state: &DualState) -> f64 {
    let log_beta: Vec<f64> = state.beta.iter().map(|&b| b.ln()).collect();
    let row_partials: Vec<f64> = (0..problem.num_samples())
        .into_par_iter()
        .map(|i| {
            let w = problem.weights[i];
            let q = 1.0 / w;
            let row = problem.base.row(i);
            let mut acc = Compensated::default();
            for (j, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    acc.add(-w * a * state.alpha[i] * (q * log_beta[j]).exp());
                }
            }
            acc.value()
        })
        .collect();

    let mut acc = Compensated::default();
    for p in row_partials {
        if p == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        acc.add(p);
    }
    for i in 0..problem.num_samples() {
        let a = state.alpha[i];
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc.add(problem.weights[i] * (1.0 + a.ln()) * problem.row_targets[i]);
    }
    for (&c, &b) in problem.col_targets.iter().zip(&state.beta) {
        if c > 0.0 {
            if b <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc.add(b.ln() * c);
        }
    }
    acc.value()
}

/// Weighted relative entropy of `candidate` against the problem base:
/// sum_ij w_i * x_ij * ln(x_ij / A_ij) with 0 ln 0 = 0.
pub fn primal_objective(problem: &ProjectionProblem, candidate: &Array2<f64>) -> Result<f64> {
    if candidate.dim() != problem.base.dim() {
        return Err(Error::InvalidInput(format!(
            "candidate shape {:?} does not match base {:?}",
            candidate.dim(),
            problem.base.dim()
        )));
    }
    let mut acc = Compensated::default();
    for i in 0..problem.num_samples() {
        let w = problem.weights[i];
        for j in 0..problem.num_classes() {
            let x = candidate[[i, j]];
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "candidate entry ({i}, {j}) = {x} must be finite and >= 0"
                )));
            }
            if x == 0.0 {
                continue;
            }
            let a = problem.base[[i, j]];
            if a == 0.0 {
                return Err(Error::InvalidSupport { row: i, class: j });
            }
            acc.add(w * x * (x / a).ln());
        }
    }
    Ok(acc.value())
}

fn plateaued(trace: &[f64]) -> bool {
    let n = trace.len();
    if n < 5 {
        return false;
    }
    let last = trace[n - 1];
    let earlier = trace[n - 5];
    if !last.is_finite() || !earlier.is_finite() {
        return false;
    }
    (last - earlier).abs() < PLATEAU_TOL * (1.0 + last.abs())
}

/// Runs `opts.iters` coordinate updates: row updates on odd steps, column
/// pricing on even steps, and a forced row update on the final step so the
/// output is exactly row-feasible.
///
/// Convergence is measured on columns: max_j |column sum - c_j| against
/// `opts.tol` times the total mass. A run that ends unconverged while the
/// dual objective has stalled is reported as `Infeasible`; unconverged but
/// still-improving runs return a report with `converged == false`.
pub fn solve(problem: &ProjectionProblem, opts: &SolveOptions) -> Result<SolveReport> {
    if opts.iters < 1 {
        return Err(Error::InvalidInput("solver needs at least one iteration".into()));
    }
    if !opts.tol.is_finite() || opts.tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "solver tolerance must be > 0, got {}",
            opts.tol
        )));
    }
    let mut state = DualState::initial(problem.num_samples(), problem.num_classes());
    let mut trace = Vec::with_capacity(opts.iters + 1);
    trace.push(dual_objective(problem, &state));
    for t in 1..=opts.iters {
        if t % 2 == 1 || t == opts.iters {
            alpha_update(problem, &mut state)?;
        } else {
            beta_update(problem, &mut state, opts.newton_tol, opts.newton_max_iter)?;
        }
        trace.push(dual_objective(problem, &state));
    }

    let solution = scaled_solution(problem, &state);
    let mut row_residual = 0.0_f64;
    for (i, row) in solution.rows().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        row_residual = row_residual.max((sum - problem.row_targets[i]).abs());
    }
    let mut col_sums = vec![0.0_f64; problem.num_classes()];
    for row in solution.rows() {
        for (j, &v) in row.iter().enumerate() {
            col_sums[j] += v;
        }
    }
    let mut col_residual = 0.0_f64;
    for (j, &s) in col_sums.iter().enumerate() {
        col_residual = col_residual.max((s - problem.col_targets[j]).abs());
    }

    let converged = col_residual <= opts.tol * problem.total_mass();
    if !converged && plateaued(&trace) {
        return Err(Error::Infeasible { col_residual, tol: opts.tol });
    }
    Ok(SolveReport {
        state,
        solution,
        dual_objective_trace: trace,
        row_residual,
        col_residual,
        converged,
        iterations: opts.iters,
    })
}
