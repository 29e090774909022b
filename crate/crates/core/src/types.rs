//! Value types shared by the solver, refinery, estimator, and harness.
//!
//! Everything is dense, row-major, double precision. Constructors validate
//! invariants once so downstream numeric code can assume them.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on |row sum - 1| for strict probability rows.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Tolerance on |column sum - 1| for confusion matrices.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

/// Default lower clamp on row entropy before inversion. A one-hot row has
/// zero entropy; the clamp turns it into a very large but finite weight that
/// effectively freezes the row.
pub const DEFAULT_ENTROPY_FLOOR: f64 = 1e-8;

/// Which invariant a row of a would-be probability matrix breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum RowViolation {
    /// Row sum differs from 1 by more than the tolerance. Carries the sum.
    Sum { row: usize, sum: f64 },
    /// An entry is outside [0, 1] or not finite. Carries the entry.
    Range { row: usize, class: usize, value: f64 },
}

/// Checks every row of `values` against the strict row-stochastic contract:
/// finite entries in [0, 1] and row sums within `tol` of 1. Returns all
/// violations; an empty list means the matrix is valid.
pub fn validate_row_stochastic(values: &ArrayView2<f64>, tol: f64) -> Vec<RowViolation> {
    let mut violations = Vec::new();
    for (m, row) in values.rows().into_iter().enumerate() {
        let mut sum = 0.0;
        for (k, &v) in row.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                violations.push(RowViolation::Range { row: m, class: k, value: v });
            }
            sum += v;
        }
        if !sum.is_finite() || (sum - 1.0).abs() > tol {
            violations.push(RowViolation::Sum { row: m, sum });
        }
    }
    violations
}

/// An M x K matrix of per-sample class probabilities.
///
/// Strict form: every row sums to 1 within [`ROW_SUM_TOL`]. Clipped form
/// (produced by support clipping): rows may sum to less than 1 but stay
/// nonnegative and keep at least one positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelMatrix {
    values: Array2<f64>,
    clipped: bool,
}

impl PseudoLabelMatrix {
    /// Strict constructor: rows must be probability vectors.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::check_shape(&values)?;
        let violations = validate_row_stochastic(&values.view(), ROW_SUM_TOL);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidInput(format!(
                "labels are not row-stochastic ({} violation{}), first: {v:?}",
                violations.len(),
                if violations.len() == 1 { "" } else { "s" },
            )));
        }
        Ok(Self { values, clipped: false })
    }

    /// Clipped constructor: row sums may fall below 1 but every row must
    /// keep some mass.
    pub fn new_clipped(values: Array2<f64>) -> Result<Self> {
        Self::check_shape(&values)?;
        for (m, row) in values.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            let mut any_positive = false;
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "clipped labels entry ({m}, {k}) = {v} outside [0, 1]"
                    )));
                }
                any_positive |= v > 0.0;
                sum += v;
            }
            if sum > 1.0 + ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "clipped labels row {m} sums to {sum} > 1"
                )));
            }
            if !any_positive {
                return Err(Error::InvalidInput(format!(
                    "clipped labels row {m} has no mass"
                )));
            }
        }
        Ok(Self { values, clipped: true })
    }

    fn check_shape(values: &Array2<f64>) -> Result<()> {
        if values.nrows() < 1 || values.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "label matrix must be at least 1 x 2, got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_clipped(&self) -> bool {
        self.clipped
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Per-class totals (column sums), accumulated in ascending row order.
    pub fn class_totals(&self) -> Vec<f64> {
        self.values.sum_axis(Axis(0)).to_vec()
    }

    /// Hard class decision per row; ties go to the smaller class index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                let mut best_v = row[0];
                for (k, &v) in row.iter().enumerate().skip(1) {
                    if v > best_v {
                        best = k;
                        best_v = v;
                    }
                }
                best
            })
            .collect()
    }
}

/// Target per-class mass for the unlabeled set. Entries are nonnegative and
/// finite with a positive total; in the refinery they sum to the number of
/// samples M.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMarginals {
    mass: Vec<f64>,
}

impl ClassMarginals {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "marginals need at least 2 classes, got {}",
                mass.len()
            )));
        }
        let mut total = 0.0;
        for (k, &v) in mass.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "marginal for class {k} is {v}; must be finite and >= 0"
                )));
            }
            total += v;
        }
        if total <= 0.0 {
            return Err(Error::InvalidInput("marginals must carry positive total mass".into()));
        }
        Ok(Self { mass })
    }

    /// Marginals taken from hard class counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Exact rescale so the total equals `total`. Returns the rescaled
    /// marginals and whether the original total deviated by more than 1e-6
    /// relative (the caller's cue to warn).
    pub fn rescaled_to(&self, total: f64) -> (Self, bool) {
        let current = self.total();
        let deviated = (current - total).abs() > 1e-6 * total.abs();
        if current == total {
            return (self.clone(), deviated);
        }
        let factor = total / current;
        let mass = self.mass.iter().map(|&v| v * factor).collect();
        (Self { mass }, deviated)
    }
}

/// Per-sample positive weights; larger weight means the sample's row resists
/// rescaling more.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWeights {
    values: Vec<f64>,
}

impl ConfidenceWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("weights must not be empty".into()));
        }
        for (m, &w) in values.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "weight for sample {m} is {w}; must be finite and > 0"
                )));
            }
        }
        Ok(Self { values })
    }

    /// All-ones weights: every row is rescaled on equal terms.
    pub fn uniform(num_samples: usize) -> Self {
        Self { values: vec![1.0; num_samples] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Natural-log Shannon entropy of a nonnegative row, with 0 ln 0 = 0.
fn row_entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Inverse-entropy confidence weights: w_m = 1 / max(H(row_m), floor).
///
/// Confident (low-entropy) rows get large weights and move little under the
/// projection; uncertain rows absorb most of the correction. The floor keeps
/// one-hot rows finite.
pub fn entropy_weights(labels: &PseudoLabelMatrix, floor: f64) -> Result<ConfidenceWeights> {
    if !floor.is_finite() || floor <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "entropy floor must be finite and > 0, got {floor}"
        )));
    }
    let values = labels
        .values()
        .rows()
        .into_iter()
        .map(|row| 1.0 / row_entropy(row.as_slice().expect("row-major layout")).max(floor))
        .collect();
    ConfidenceWeights::new(values)
}

/// Dual scaling state of the projection: one multiplier per row and one per
/// class. Entries are finite and nonnegative; a beta entry is zero only when
/// its class target is zero (the column is priced out entirely). Fresh state
/// is all ones, which leaves the base matrix unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Number of coordinate updates applied so far.
    pub iteration: usize,
}

impl DualState {
    pub fn initial(num_samples: usize, num_classes: usize) -> Self {
        Self {
            alpha: vec![1.0; num_samples],
            beta: vec![1.0; num_classes],
            iteration: 0,
        }
    }
}

/// K x K column-stochastic matrix; entry (i, j) is the probability the
/// classifier predicts class i on a sample whose true class is j.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    values: Array2<f64>,
}

impl ConfusionMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let k = values.nrows();
        if k < 2 || values.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "confusion matrix must be square with K >= 2, got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "confusion entry ({i}, {j}) = {v} outside [0, 1]"
                )));
            }
        }
        for (j, col) in values.columns().into_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "confusion column {j} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn num_classes(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Geometric class-size profile: class k (0-based) holds
/// floor(head_count * ratio^(-k / (K-1))) samples, so class sizes decay from
/// `head_count` down to `head_count / ratio`. `reversed` flips the order so
/// the tail comes first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceProfile {
    pub head_count: u64,
    pub ratio: f64,
    pub num_classes: usize,
    pub reversed: bool,
}

impl ImbalanceProfile {
    pub fn new(head_count: u64, ratio: f64, num_classes: usize, reversed: bool) -> Result<Self> {
        if head_count < 1 {
            return Err(Error::InvalidInput("head_count must be >= 1".into()));
        }
        if !ratio.is_finite() || ratio < 1.0 {
            return Err(Error::InvalidInput(format!(
                "imbalance ratio must be finite and >= 1, got {ratio}"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "profile needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self { head_count, ratio, num_classes, reversed })
    }
}
