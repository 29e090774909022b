//! Synthetic long-tailed scenarios and imbalance-aware metrics.
//!
//! The generator draws ground-truth classes from a geometric size profile
//! and produces pseudo-labels whose errors lean toward whatever class prior
//! the labeled profile implies, mimicking a classifier trained on skewed
//! data. Generation is fully deterministic given the seed.
//!
//! Random source: ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. Draw layout, in order: one shuffle of the truth vector,
//! then for each sample one uniform f64 per class (ascending class index)
//! turned into Gumbel noise by inversion. Same seed, same build: identical
//! bits out.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{ClassMarginals, ImbalanceProfile, PseudoLabelMatrix};

/// A full synthetic setup: class-size profiles for the (imagined) labeled
/// and unlabeled sets, how strongly pseudo-labels lean toward the labeled
/// prior, and how noisy they are.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub num_classes: usize,
    pub profile_labeled: ImbalanceProfile,
    pub profile_unlabeled: ImbalanceProfile,
    /// Multiplier on the labeled log-prior inside the pseudo-label logits.
    /// Zero means unbiased.
    pub bias_strength: f64,
    /// Softmax temperature: small values give near-one-hot rows.
    pub noise_temp: f64,
    pub seed: u64,
}

impl SyntheticScenario {
    pub fn new(
        num_classes: usize,
        profile_labeled: ImbalanceProfile,
        profile_unlabeled: ImbalanceProfile,
        bias_strength: f64,
        noise_temp: f64,
        seed: u64,
    ) -> Result<Self> {
        if profile_labeled.num_classes != num_classes
            || profile_unlabeled.num_classes != num_classes
        {
            return Err(Error::InvalidInput(format!(
                "profiles cover {} / {} classes but the scenario has {num_classes}",
                profile_labeled.num_classes, profile_unlabeled.num_classes
            )));
        }
        if !bias_strength.is_finite() || bias_strength < 0.0 {
            return Err(Error::InvalidInput(format!(
                "bias strength must be finite and >= 0, got {bias_strength}"
            )));
        }
        if !noise_temp.is_finite() || noise_temp <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise temperature must be finite and > 0, got {noise_temp}"
            )));
        }
        Ok(Self {
            num_classes,
            profile_labeled,
            profile_unlabeled,
            bias_strength,
            noise_temp,
            seed,
        })
    }
}

/// Class sizes of a geometric profile: class k (0-based) gets
/// floor(head_count * ratio^(-k / (K-1))), reversed if the profile says so.
pub fn class_counts(profile: &ImbalanceProfile) -> Vec<u64> {
    let k = profile.num_classes;
    let span = (k - 1) as f64;
    let mut counts: Vec<u64> = (0..k)
        .map(|i| {
            let raw = profile.head_count as f64 * profile.ratio.powf(-(i as f64) / span);
            raw.floor() as u64
        })
        .collect();
    if profile.reversed {
        counts.reverse();
    }
    counts
}

/// What [`generate_biased_pseudolabels`] returns: the label matrix, the
/// ground truth it was drawn around, and the exact class totals of that
/// truth (the refinement target an all-knowing caller would use).
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub labels: PseudoLabelMatrix,
    pub truth: Vec<usize>,
    pub true_marginals: ClassMarginals,
}

/// Standard Gumbel noise by inversion from a uniform draw in [0, 1). The
/// clamp keeps the double log finite at u = 0.
fn gumbel(u: f64) -> f64 {
    -(-(u.max(1e-300).ln())).ln()
}

/// Draws a synthetic pseudo-label matrix.
///
/// The truth vector holds exactly `class_counts(profile_unlabeled)` samples
/// of each class, shuffled. Each row is a softmax over
///
/// ```text
///     z_k = (1[k = truth] + bias_strength * ln prior_k) / noise_temp + g_k
/// ```
///
/// where `prior` is the labeled profile's class distribution and g_k is
/// standard Gumbel noise. With zero bias and vanishing temperature the rows
/// collapse onto the true class; positive bias drags probability mass toward
/// the labeled profile's head classes regardless of the truth.
pub fn generate_biased_pseudolabels(scenario: &SyntheticScenario) -> Result<GeneratedData> {
    let k = scenario.num_classes;
    let counts = class_counts(&scenario.profile_unlabeled);
    let m: u64 = counts.iter().sum();
    if m == 0 {
        return Err(Error::InvalidInput(
            "unlabeled profile generates zero samples".into(),
        ));
    }
    let m = m as usize;

    let mut truth = Vec::with_capacity(m);
    for (class, &n) in counts.iter().enumerate() {
        truth.extend(std::iter::repeat_n(class, n as usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    truth.shuffle(&mut rng);

    let labeled_counts = class_counts(&scenario.profile_labeled);
    let labeled_total: f64 = labeled_counts.iter().map(|&c| c as f64).sum();
    if labeled_total <= 0.0 {
        return Err(Error::InvalidInput(
            "labeled profile generates zero samples".into(),
        ));
    }
    let log_prior: Vec<f64> = labeled_counts
        .iter()
        .map(|&c| (c as f64 / labeled_total).ln())
        .collect();

    let inv_temp = 1.0 / scenario.noise_temp;
    let mut values = Array2::zeros((m, k));
    let mut logits = vec![0.0_f64; k];
    for (i, &y) in truth.iter().enumerate() {
        for (j, z) in logits.iter_mut().enumerate() {
            let mut signal = if j == y { 1.0 } else { 0.0 };
            if scenario.bias_strength > 0.0 {
                signal += scenario.bias_strength * log_prior[j];
            }
            *z = signal * inv_temp + gumbel(rng.random::<f64>());
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in logits.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        for (j, &e) in logits.iter().enumerate() {
            values[[i, j]] = e / sum;
        }
    }

    let mut tally = vec![0_u64; k];
    for &y in &truth {
        tally[y] += 1;
    }

    Ok(GeneratedData {
        labels: PseudoLabelMatrix::new(values)?,
        truth,
        true_marginals: ClassMarginals::from_counts(&tally)?,
    })
}

fn per_class_recalls(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions against {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no samples to score".into()));
    }
    let mut totals = vec![0_u64; num_classes];
    let mut correct = vec![0_u64; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidInput(format!(
                "class index out of range: prediction {p}, truth {t}, K = {num_classes}"
            )));
        }
        totals[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    for (class, &n) in totals.iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass { class });
        }
    }
    Ok(totals
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| c as f64 / n as f64)
        .collect())
}

/// Arithmetic mean of per-class recall. Insensitive to class sizes: a
/// majority-class guesser scores 1/K on the class it picks and zero
/// elsewhere no matter how large that class is.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    let recalls = per_class_recalls(pred, truth, num_classes)?;
    Ok(recalls.iter().sum::<f64>() / num_classes as f64)
}

/// Geometric mean of per-class recall: zero as soon as any class is never
/// recovered, and never above the balanced accuracy.
pub fn geometric_mean_score(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    let recalls = per_class_recalls(pred, truth, num_classes)?;
    if recalls.contains(&0.0) {
        return Ok(0.0);
    }
    let log_mean = recalls.iter().map(|r| r.ln()).sum::<f64>() / num_classes as f64;
    Ok(log_mean.exp())
}

/// Largest class count over smallest; `None` when a class is empty (the
/// ratio would be infinite) or the slice is empty.
pub fn imbalance_ratio(counts: &[u64]) -> Option<f64> {
    let max = *counts.iter().max()?;
    let min = *counts.iter().min()?;
    if min == 0 {
        return None;
    }
    Some(max as f64 / min as f64)
}
