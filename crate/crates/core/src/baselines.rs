//! Threshold-based state classification with optional moving-average
//! pre-filtering, empirical transition estimation from labeled paths, and
//! label-error scoring — the conventional comparison methods.
//!
//! The binary rule labels a sample by comparing it with an amplitude cut
//! point; the multi-state generalization uses one cut per adjacent state
//! pair, placed so the labeled state probabilities match given state
//! probabilities. Filtering the sequence with a moving average before
//! thresholding suppresses spurious state transitions at the cost of
//! distorting the labeled state probabilities.

use crate::distributions::{captured_mass, EmissionDistribution, IntegrationGrid};
use crate::fitting::MixtureModel;
use crate::markov::{MarkovChain, StatePath};
use crate::preprocess::ObservationSequence;
use crate::{Error, Result};

/// Amplitude cut points (strictly increasing, one fewer than the state
/// count) plus a moving-average span; span 1 means no filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdClassifier {
    thresholds: Vec<f64>,
    filter_span: usize,
}

impl ThresholdClassifier {
    pub fn new(thresholds: Vec<f64>, filter_span: usize) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidParameter("at least one threshold required".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("thresholds must be strictly increasing".into()));
        }
        if filter_span == 0 {
            return Err(Error::InvalidParameter("filter span must be >= 1".into()));
        }
        Ok(ThresholdClassifier {
            thresholds,
            filter_span,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn filter_span(&self) -> usize {
        self.filter_span
    }
}

/// The cut point minimizing the average misclassification probability for
/// two equal-variance Gaussians with the given priors:
/// `(mu1 + mu2)/2 + sigma^2 ln(p1/p2) / (mu2 - mu1)`.
pub fn optimal_threshold(mu1: f64, mu2: f64, sigma: f64, p1: f64, p2: f64) -> Result<f64> {
    if mu1 >= mu2 {
        return Err(Error::DegenerateSeparation(format!(
            "means must satisfy mu1 < mu2, got {mu1} and {mu2}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    check_priors(p1, p2)?;
    Ok(0.5 * (mu1 + mu2) + sigma * sigma * (p1 / p2).ln() / (mu2 - mu1))
}

/// Average error probability of threshold `tau`:
/// `p1 * P(r > tau | f1) + p2 * P(r < tau | f2)`, numerically integrated.
/// `f1` is the lower-amplitude state's density.
pub fn average_error_probability(
    tau: f64,
    f1: &EmissionDistribution,
    f2: &EmissionDistribution,
    p1: f64,
    p2: f64,
) -> Result<f64> {
    check_priors(p1, p2)?;
    if !tau.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite threshold {tau}")));
    }
    let grid = IntegrationGrid::covering(&[*f1, *f2])?;
    for (k, d) in [f1, f2].into_iter().enumerate() {
        let mass = captured_mass(d, &grid);
        if mass < 0.999 {
            return Err(Error::IntegrationCoverage(format!(
                "grid [{}, {}] captures only {mass:.6} of density {}",
                grid.lo,
                grid.hi,
                k + 1
            )));
        }
    }
    let span = grid.hi - grid.lo;
    let upper_tail = if tau >= grid.hi {
        0.0
    } else {
        let lo = tau.max(grid.lo);
        let n = (((grid.hi - lo) / span * grid.intervals as f64).ceil() as usize).max(16);
        IntegrationGrid::new(lo, grid.hi, n)?.simpson(|r| f1.log_pdf_raw(r).exp())
    };
    let lower_tail = if tau <= grid.lo {
        0.0
    } else {
        let hi = tau.min(grid.hi);
        let n = (((hi - grid.lo) / span * grid.intervals as f64).ceil() as usize).max(16);
        IntegrationGrid::new(grid.lo, hi, n)?.simpson(|r| f2.log_pdf_raw(r).exp())
    };
    Ok((p1 * upper_tail + p2 * lower_tail).clamp(0.0, 1.0))
}

fn check_priors(p1: f64, p2: f64) -> Result<()> {
    if !(p1 > 0.0 && p2 > 0.0) || (p1 + p2 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "priors ({p1}, {p2}) must be positive and sum to 1"
        )));
    }
    Ok(())
}

/// Centered moving average with shrinking windows at the edges, preserving
/// the sequence length so labels stay aligned with ground truth. For even
/// spans the window is `[t - span/2, t + span/2 - 1]`.
pub fn moving_average(obs: &ObservationSequence, span: usize) -> Result<ObservationSequence> {
    let n = obs.len();
    if span == 0 {
        return Err(Error::InvalidInput("span must be >= 1".into()));
    }
    if span > n {
        return Err(Error::InvalidInput(format!(
            "span {span} exceeds sequence length {n}"
        )));
    }
    if span == 1 {
        return Ok(obs.clone());
    }
    let samples = obs.samples();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &x in samples {
        prefix.push(prefix.last().unwrap() + x);
    }
    let back = span / 2;
    let fwd = span - back - 1;
    let filtered: Vec<f64> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
        })
        .collect();
    let mut out = ObservationSequence::new(filtered)?;
    out.spacing_m = obs.spacing_m;
    out.trace_id = obs.trace_id.clone();
    Ok(out)
}

/// Label each sample with the state whose amplitude band contains it, after
/// optional moving-average filtering. States are ordered by ascending
/// amplitude; a sample equal to a cut point goes to the upper state.
pub fn classify(classifier: &ThresholdClassifier, obs: &ObservationSequence) -> Result<StatePath> {
    let filtered = moving_average(obs, classifier.filter_span)?;
    let states = filtered
        .samples()
        .iter()
        .map(|&r| classifier.thresholds.iter().filter(|&&t| t <= r).count())
        .collect();
    Ok(StatePath(states))
}

/// Empirical chain estimated from a labeled path. Rows whose state was
/// never left get a uniform row and are reported in `unvisited`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEstimate {
    pub chain: MarkovChain,
    /// States with no outgoing transition in the path.
    pub unvisited: Vec<usize>,
}

/// Estimate transition probabilities by counting transitions in a labeled
/// path, and state probabilities from state frequencies.
pub fn estimate_from_labels(path: &StatePath, m: usize) -> Result<LabelEstimate> {
    if path.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 labels".into()));
    }
    if m == 0 {
        return Err(Error::InvalidInput("state count must be >= 1".into()));
    }
    if let Some(&bad) = path.states().iter().find(|&&s| s >= m) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {m} states"
        )));
    }
    let mut counts = vec![vec![0usize; m]; m];
    for w in path.states().windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let mut unvisited = Vec::new();
    let transition: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                unvisited.push(i);
                vec![1.0 / m as f64; m]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    let mut freq = vec![0usize; m];
    for &s in path.states() {
        freq[s] += 1;
    }
    let initial = freq
        .iter()
        .map(|&c| c as f64 / path.len() as f64)
        .collect();
    Ok(LabelEstimate {
        chain: MarkovChain::new(transition, initial)?,
        unvisited,
    })
}

/// Fraction of positions where the estimated path disagrees with the truth.
pub fn labeling_error_share(truth: &StatePath, estimate: &StatePath) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch(format!(
            "paths of length {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("empty paths".into()));
    }
    let wrong = truth
        .states()
        .iter()
        .zip(estimate.states())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Thresholds for a multi-state classifier, derived from a fitted mixture:
/// quantile cuts placed so the labeled state probabilities match the
/// mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureThresholds {
    /// Ascending amplitude cut points, one per adjacent pair.
    pub thresholds: Vec<f64>,
    /// `state_order[k]` is the mixture component index of the k-th
    /// ascending-amplitude band; use it to map classifier labels back to
    /// component indices.
    pub state_order: Vec<usize>,
}

impl MixtureThresholds {
    /// Map an ascending-amplitude label path to component indices.
    pub fn relabel(&self, path: &StatePath) -> StatePath {
        StatePath(path.states().iter().map(|&s| self.state_order[s]).collect())
    }
}

/// Place quantile cuts of the mixture CDF at the cumulative component
/// weights, components ordered by ascending mean amplitude.
pub fn thresholds_from_mixture(mix: &MixtureModel) -> Result<MixtureThresholds> {
    let k = mix.components().len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "mixture thresholds need at least 2 components".into(),
        ));
    }
    let mut state_order: Vec<usize> = (0..k).collect();
    state_order.sort_by(|&a, &b| {
        mix.components()[a]
            .mean()
            .total_cmp(&mix.components()[b].mean())
    });
    let mut cum = 0.0;
    let probs: Vec<f64> = state_order[..k - 1]
        .iter()
        .map(|&idx| {
            cum += mix.weights()[idx];
            cum
        })
        .collect();
    let thresholds = mix.quantiles(&probs)?;
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateSeparation(
            "mixture quantile cuts are not strictly increasing".into(),
        ));
    }
    Ok(MixtureThresholds {
        thresholds,
        state_order,
    })
}
