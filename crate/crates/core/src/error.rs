//! Crate-wide error type.
//!
//! One enum covers every failure the library can report so callers (and the
//! CLI's exit-code mapping) can match on a single type. Variants carry the
//! indices and magnitudes needed to locate the problem without re-running.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on caller-supplied data failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Row `row` of the scaling problem has no support left: every class it
    /// could place mass on has a zero column target priced to zero, so the
    /// row-sum constraint is unsatisfiable.
    #[error("row {row} has no remaining support; its row-sum target cannot be met")]
    DegenerateRow { row: usize },

    /// Column `class` carries a positive target but no positive entries, so
    /// no scaling can move mass into it.
    #[error("class {class} has target mass {target} but an all-zero column")]
    DegenerateColumn { class: usize, target: f64 },

    /// The scalar root finder ran out of iterations even after the bisection
    /// fallback.
    #[error("root finder did not reach tolerance {tol} (last residual {residual} at Z = {last})")]
    NonConvergence { last: f64, residual: f64, tol: f64 },

    /// The dual ascent stalled while the column residual was still above
    /// tolerance: the support pattern admits no transport with the requested
    /// marginals.
    #[error(
        "projection infeasible: column residual {col_residual} above tolerance \
         {tol} with a stalled dual objective"
    )]
    Infeasible { col_residual: f64, tol: f64 },

    /// A candidate matrix puts mass where the base matrix has none, so its
    /// relative entropy against the base is infinite.
    #[error("candidate has mass at ({row}, {class}) outside the base support")]
    InvalidSupport { row: usize, class: usize },

    /// A metric or confusion build needs at least one sample of every class.
    #[error("class {class} has no samples in the ground truth")]
    MissingClass { class: usize },

    /// The confusion matrix cannot be inverted reliably.
    #[error("confusion matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularConfusion { condition: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// CSV parse failure. `line` and `column` are 1-based; `column` counts
    /// comma-separated fields.
    #[error("{path}:{line}:{column}: {reason}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
