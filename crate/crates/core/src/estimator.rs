//! Class-marginal estimation from aggregated soft predictions.
//!
//! When the unlabeled class distribution is unknown it can be recovered from
//! two observables: a confusion matrix C measured on held-out labeled data
//! (column j = average predicted distribution over samples truly in class j)
//! and the per-class totals t of the soft predictions on the unlabeled set.
//! If the classifier behaves the same on both sets, t ≈ C·m where m holds
//! the true per-class counts, so m is one linear solve away.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{ClassMarginals, ConfusionMatrix, PseudoLabelMatrix};

/// Condition numbers beyond this make the linear solve meaningless: the
/// confusion matrix no longer separates the classes.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Per-class sums of soft predictions over a dataset — the right-hand side
/// of the marginal solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPredictions {
    totals: Vec<f64>,
}

impl AggregatedPredictions {
    pub fn new(totals: Vec<f64>) -> Result<Self> {
        if totals.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "aggregated predictions need at least 2 classes, got {}",
                totals.len()
            )));
        }
        if let Some((class, &value)) = totals
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "aggregated total for class {class} is {value}; totals must be finite and >= 0"
            )));
        }
        if totals.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidInput(
                "aggregated predictions carry no mass".into(),
            ));
        }
        Ok(Self { totals })
    }

    /// Column sums of a pseudo-label matrix.
    pub fn from_labels(labels: &PseudoLabelMatrix) -> Result<Self> {
        Self::new(labels.class_totals())
    }

    pub fn num_classes(&self) -> usize {
        self.totals.len()
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn total_mass(&self) -> f64 {
        self.totals.iter().sum()
    }
}

/// Average the soft predictions of each true class into a column-stochastic
/// confusion matrix. `truth[i]` is the true class of row i of `predictions`.
///
/// Every class must appear in `truth` at least once — an absent class leaves
/// its column undefined.
pub fn build_confusion(
    predictions: &PseudoLabelMatrix,
    truth: &[usize],
) -> Result<ConfusionMatrix> {
    if predictions.is_clipped() {
        return Err(Error::InvalidInput(
            "confusion estimation needs full distributions, not clipped rows".into(),
        ));
    }
    let m = predictions.num_samples();
    let k = predictions.num_classes();
    if truth.len() != m {
        return Err(Error::InvalidInput(format!(
            "{m} prediction rows against {} truth labels",
            truth.len()
        )));
    }
    let mut counts = vec![0_u64; k];
    for &y in truth {
        if y >= k {
            return Err(Error::InvalidInput(format!(
                "truth label {y} out of range for {k} classes"
            )));
        }
        counts[y] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }

    let values = predictions.values();
    let mut sums = Array2::<f64>::zeros((k, k));
    for (i, &y) in truth.iter().enumerate() {
        for p in 0..k {
            sums[[p, y]] += values[[i, p]];
        }
    }
    for j in 0..k {
        let n = counts[j] as f64;
        for p in 0..k {
            sums[[p, j]] /= n;
        }
    }
    ConfusionMatrix::new(sums)
}

/// Result of the marginal solve.
#[derive(Debug, Clone)]
pub struct MarginalEstimate {
    /// Cleaned-up estimate: nonnegative, total mass matching the input.
    pub marginals: ClassMarginals,
    /// The solve output before clamping, kept for diagnostics.
    pub raw: Vec<f64>,
    /// Spectral condition number of the confusion matrix.
    pub condition: f64,
    /// Whether any raw component was negative and had to be clamped.
    pub clamped: bool,
}

/// Solves C·m = t for the class marginals m.
///
/// The raw solution can leave the simplex when the confusion matrix is
/// noisy; negative components are clamped to zero and the rest rescaled so
/// the total matches `totals`. Since C is column-stochastic the raw solution
/// already sums to the aggregate mass, so the rescale is a no-op unless
/// clamping fired.
pub fn estimate_marginals(
    confusion: &ConfusionMatrix,
    totals: &AggregatedPredictions,
) -> Result<MarginalEstimate> {
    let k = confusion.num_classes();
    if totals.num_classes() != k {
        return Err(Error::InvalidInput(format!(
            "confusion matrix covers {k} classes but totals cover {}",
            totals.num_classes()
        )));
    }

    let c = DMatrix::from_row_iterator(k, k, confusion.values().iter().copied());
    let singular = c.clone().svd(false, false).singular_values;
    let s_max = singular.max();
    let s_min = singular.min();
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::SingularConfusion { condition });
    }

    let rhs = DVector::from_column_slice(totals.totals());
    let solved = c
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularConfusion { condition })?;
    let raw: Vec<f64> = solved.iter().copied().collect();

    let clamped = raw.iter().any(|&x| x < 0.0);
    let cleaned: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let (marginals, _) = ClassMarginals::new(cleaned)?.rescaled_to(totals.total_mass());

    Ok(MarginalEstimate {
        marginals,
        raw,
        condition,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn confusion(values: Array2<f64>) -> ConfusionMatrix {
        ConfusionMatrix::new(values).unwrap()
    }

    #[test]
    fn identity_confusion_returns_the_totals() {
        let c = confusion(array![[1.0, 0.0], [0.0, 1.0]]);
        let t = AggregatedPredictions::new(vec![5.0, 7.0]).unwrap();
        let est = estimate_marginals(&c, &t).unwrap();
        assert!((est.marginals.mass()[0] - 5.0).abs() < 1e-12);
        assert!((est.marginals.mass()[1] - 7.0).abs() < 1e-12);
        assert!((est.condition - 1.0).abs() < 1e-12);
        assert!(!est.clamped);
    }

    #[test]
    fn symmetric_noise_is_inverted_exactly() {
        // m = (300, 100): t = C·m = (260, 140).
        let c = confusion(array![[0.8, 0.2], [0.2, 0.8]]);
        let t = AggregatedPredictions::new(vec![260.0, 140.0]).unwrap();
        let est = estimate_marginals(&c, &t).unwrap();
        assert!((est.marginals.mass()[0] - 300.0).abs() < 1e-9);
        assert!((est.marginals.mass()[1] - 100.0).abs() < 1e-9);
        // Eigenvalues 1.0 and 0.6.
        assert!((est.condition - 1.0 / 0.6).abs() < 1e-12);
        assert!(!est.clamped);
    }

    #[test]
    fn negative_component_is_clamped_and_mass_preserved() {
        // Totals more extreme than the confusion matrix can produce from
        // any nonnegative m: the raw solve goes negative.
        let c = confusion(array![[0.9, 0.1], [0.1, 0.9]]);
        let t = AggregatedPredictions::new(vec![100.0, 0.0]).unwrap();
        let est = estimate_marginals(&c, &t).unwrap();
        assert!(est.clamped);
        assert!((est.raw[0] - 112.5).abs() < 1e-9);
        assert!((est.raw[1] + 12.5).abs() < 1e-9);
        assert!((est.marginals.mass()[0] - 100.0).abs() < 1e-9);
        assert_eq!(est.marginals.mass()[1], 0.0);
        assert!((est.marginals.total() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_confusion_is_rejected() {
        let c = confusion(array![[0.5, 0.5], [0.5, 0.5]]);
        let t = AggregatedPredictions::new(vec![10.0, 10.0]).unwrap();
        match estimate_marginals(&c, &t) {
            Err(Error::SingularConfusion { condition }) => {
                assert!(condition > CONDITION_LIMIT);
            }
            other => panic!("expected SingularConfusion, got {other:?}"),
        }
    }

    #[test]
    fn three_class_round_trip() {
        let c = confusion(array![
            [0.7, 0.2, 0.1],
            [0.2, 0.6, 0.2],
            [0.1, 0.2, 0.7],
        ]);
        let m = [50.0, 30.0, 20.0];
        let mut t = vec![0.0; 3];
        for ((i, j), &v) in c.values().indexed_iter() {
            t[i] += v * m[j];
        }
        let est =
            estimate_marginals(&c, &AggregatedPredictions::new(t).unwrap()).unwrap();
        for (got, want) in est.marginals.mass().iter().zip(m) {
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
        assert!(!est.clamped);
    }

    #[test]
    fn confusion_from_predictions_averages_per_true_class() {
        let labels = PseudoLabelMatrix::new(array![
            [0.9, 0.1],
            [0.7, 0.3],
            [0.2, 0.8],
        ])
        .unwrap();
        let c = build_confusion(&labels, &[0, 0, 1]).unwrap();
        let expected = array![[0.8, 0.2], [0.2, 0.8]];
        for (got, want) in c.values().iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn confusion_requires_every_class_observed() {
        let labels =
            PseudoLabelMatrix::new(array![[0.9, 0.1], [0.7, 0.3]]).unwrap();
        assert!(matches!(
            build_confusion(&labels, &[0, 0]),
            Err(Error::MissingClass { class: 1 })
        ));
    }

    #[test]
    fn confusion_rejects_clipped_predictions() {
        let labels =
            PseudoLabelMatrix::new_clipped(array![[0.9, 0.0], [0.0, 0.3]]).unwrap();
        assert!(matches!(
            build_confusion(&labels, &[0, 1]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn confusion_rejects_mismatched_truth_length() {
        let labels =
            PseudoLabelMatrix::new(array![[0.9, 0.1], [0.7, 0.3]]).unwrap();
        assert!(matches!(
            build_confusion(&labels, &[0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            build_confusion(&labels, &[0, 5]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn aggregated_predictions_validate() {
        assert!(AggregatedPredictions::new(vec![1.0]).is_err());
        assert!(AggregatedPredictions::new(vec![1.0, -0.1]).is_err());
        assert!(AggregatedPredictions::new(vec![0.0, 0.0]).is_err());
        assert!(AggregatedPredictions::new(vec![f64::NAN, 1.0]).is_err());
        let t = AggregatedPredictions::new(vec![1.5, 2.5]).unwrap();
        assert_eq!(t.total_mass(), 4.0);
    }

    #[test]
    fn totals_from_labels_are_column_sums() {
        let labels = PseudoLabelMatrix::new(array![
            [0.9, 0.1],
            [0.4, 0.6],
        ])
        .unwrap();
        let t = AggregatedPredictions::from_labels(&labels).unwrap();
        assert!((t.totals()[0] - 1.3).abs() < 1e-15);
        assert!((t.totals()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let c = confusion(array![[0.8, 0.2], [0.2, 0.8]]);
        let t = AggregatedPredictions::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            estimate_marginals(&c, &t),
            Err(Error::InvalidInput(_))
        ));
    }
}
