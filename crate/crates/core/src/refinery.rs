//! Pseudo-label refinement: clip implausibly placed mass, then project the
//! label matrix onto the target class totals.
//!
//! The pipeline takes an M x K row-stochastic pseudo-label matrix and a
//! K-vector of target class masses summing to M. Support clipping keeps, per
//! class k, only the floor(delta * M_k) samples most confident in k, so a
//! class with little target mass cannot hold mass on thousands of rows. The
//! weighted I-projection then rescales the clipped matrix until columns meet
//! the targets while every row stays a probability vector.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::solver::{solve, ProjectionProblem, SolveOptions, SolveReport};
use crate::types::{
    entropy_weights, ClassMarginals, ConfidenceWeights, PseudoLabelMatrix, DEFAULT_ENTROPY_FLOOR,
};

/// How per-row weights are chosen for the projection.
#[derive(Debug, Clone)]
pub enum WeightMode {
    /// Inverse row entropy of the unclipped labels: confident rows move less.
    Entropy,
    /// All ones.
    Uniform,
    /// Caller-supplied weights, one per sample.
    External(ConfidenceWeights),
}

/// Refinement parameters. The defaults (`delta = 2`, ten iterations,
/// entropy weights) are the battle-tested operating point; `delta` may be
/// `f64::INFINITY` to disable clipping.
#[derive(Debug, Clone)]
pub struct DarpConfig {
    pub delta: f64,
    pub iters: usize,
    pub tol: f64,
    pub weight_mode: WeightMode,
    pub entropy_floor: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for DarpConfig {
    fn default() -> Self {
        Self {
            delta: 2.0,
            iters: 10,
            tol: 1e-6,
            weight_mode: WeightMode::Entropy,
            entropy_floor: DEFAULT_ENTROPY_FLOOR,
            newton_tol: 1e-12,
            newton_max_iter: 100,
        }
    }
}

/// Result of support clipping.
#[derive(Debug, Clone)]
pub struct ClipOutcome {
    /// The clipped matrix (rows may sum to less than 1).
    pub labels: PseudoLabelMatrix,
    /// Per class, the ascending sample indices whose entries were kept.
    pub kept: Vec<Vec<usize>>,
    /// Rows that lost every entry and were restored to their original
    /// values instead.
    pub restored_rows: Vec<usize>,
}

/// Keeps, per class k, the floor(delta * M_k) entries with the largest
/// probability for k (ties broken toward the smaller sample index) and
/// zeroes the rest. A class with positive target always keeps at least one
/// entry. Rows that end up all-zero are restored to their unclipped values,
/// so every row still carries mass into the projection.
pub fn clip_small_entries(
    labels: &PseudoLabelMatrix,
    marginals: &ClassMarginals,
    delta: f64,
) -> Result<ClipOutcome> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "clipping ratio must be positive (or infinite), got {delta}"
        )));
    }
    let (m, k) = (labels.num_samples(), labels.num_classes());
    if marginals.num_classes() != k {
        return Err(Error::InvalidInput(format!(
            "marginals have {} classes but labels have {k}",
            marginals.num_classes()
        )));
    }
    let values = labels.values();

    if delta.is_infinite() {
        return Ok(ClipOutcome {
            labels: PseudoLabelMatrix::new_clipped(values.clone())?,
            kept: vec![(0..m).collect(); k],
            restored_rows: Vec::new(),
        });
    }

    let mut out = Array2::zeros((m, k));
    let mut kept = Vec::with_capacity(k);
    for j in 0..k {
        let target = marginals.mass()[j];
        let keep = if target > 0.0 {
            (((delta * target).floor() as usize).max(1)).min(m)
        } else {
            0
        };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            values[[b, j]]
                .partial_cmp(&values[[a, j]])
                .expect("label entries are finite")
                .then(a.cmp(&b))
        });
        order.truncate(keep);
        order.sort_unstable();
        for &i in &order {
            out[[i, j]] = values[[i, j]];
        }
        kept.push(order);
    }

    let mut restored_rows = Vec::new();
    for i in 0..m {
        if out.row(i).iter().all(|&v| v == 0.0) {
            for j in 0..k {
                out[[i, j]] = values[[i, j]];
            }
            restored_rows.push(i);
        }
    }

    Ok(ClipOutcome {
        labels: PseudoLabelMatrix::new_clipped(out)?,
        kept,
        restored_rows,
    })
}

/// Mean absolute gap between the label matrix's class totals and the target
/// marginals, normalized by the number of samples:
/// (1/M) * sum_k |column_sum_k - M_k|.
///
/// Panics if the class counts differ; callers validate shapes first.
pub fn mismatch(labels: &PseudoLabelMatrix, marginals: &ClassMarginals) -> f64 {
    assert_eq!(
        labels.num_classes(),
        marginals.num_classes(),
        "mismatch needs matching class counts"
    );
    let totals = labels.class_totals();
    let gap: f64 = totals
        .iter()
        .zip(marginals.mass())
        .map(|(&got, &want)| (got - want).abs())
        .sum();
    gap / labels.num_samples() as f64
}

/// Everything a refinement run produces.
#[derive(Debug, Clone)]
pub struct DarpOutcome {
    /// Row-stochastic refined labels whose class totals meet the targets up
    /// to the solver tolerance.
    pub refined: PseudoLabelMatrix,
    pub report: SolveReport,
    /// The targets actually used (rescaled to sum to M).
    pub targets: ClassMarginals,
    /// Mismatch of the input labels against the rescaled targets.
    pub mismatch_before: f64,
    /// Mismatch of the refined labels against the rescaled targets.
    pub mismatch_after: f64,
    /// True when the supplied marginals deviated from total M by more than
    /// 1e-6 relative and had to be rescaled; the CLI warns on it.
    pub marginals_renormalized: bool,
    pub restored_rows: Vec<usize>,
}

/// Full refinement: weigh rows, clip support, project onto the targets.
///
/// `labels` must be strict (unclipped) row-stochastic pseudo-labels.
/// Marginals are rescaled exactly to total M before solving. The solve runs
/// `config.iters` coordinate updates and ends on a row update, so the output
/// rows are exact probability vectors.
pub fn darp(
    labels: &PseudoLabelMatrix,
    marginals: &ClassMarginals,
    config: &DarpConfig,
) -> Result<DarpOutcome> {
    if labels.is_clipped() {
        return Err(Error::InvalidInput(
            "refinement expects unclipped row-stochastic labels".into(),
        ));
    }
    let (m, k) = (labels.num_samples(), labels.num_classes());
    if marginals.num_classes() != k {
        return Err(Error::InvalidInput(format!(
            "marginals have {} classes but labels have {k}",
            marginals.num_classes()
        )));
    }

    let (targets, renormalized) = marginals.rescaled_to(m as f64);

    let weights = match &config.weight_mode {
        WeightMode::Entropy => entropy_weights(labels, config.entropy_floor)?,
        WeightMode::Uniform => ConfidenceWeights::uniform(m),
        WeightMode::External(w) => {
            if w.len() != m {
                return Err(Error::InvalidInput(format!(
                    "external weights cover {} samples but labels have {m}",
                    w.len()
                )));
            }
            w.clone()
        }
    };

    let clip = clip_small_entries(labels, &targets, config.delta)?;
    let problem = ProjectionProblem::new(
        clip.labels.values().clone(),
        vec![1.0; m],
        targets.mass().to_vec(),
        &weights,
    )?;
    let opts = SolveOptions {
        iters: config.iters,
        tol: config.tol,
        newton_tol: config.newton_tol,
        newton_max_iter: config.newton_max_iter,
    };
    let report = solve(&problem, &opts)?;

    // Row sums are exact up to representation error, which can tip an entry
    // one ulp past 1; snap back into range.
    let refined_values = report.solution.mapv(|v| v.clamp(0.0, 1.0));
    let refined = PseudoLabelMatrix::new(refined_values)?;

    let mismatch_before = mismatch(labels, &targets);
    let mismatch_after = mismatch(&refined, &targets);

    Ok(DarpOutcome {
        refined,
        report,
        targets,
        mismatch_before,
        mismatch_after,
        marginals_renormalized: renormalized,
        restored_rows: clip.restored_rows,
    })
}
