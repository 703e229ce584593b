//! Finite-state Markov chains: stationary analysis, mean state durations and
//! joint simulation of hidden states with emitted observations.
//!
//! State indices are 0-based in code; file outputs and printed tables use
//! 1-based labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::EmissionDistribution;
use crate::preprocess::ObservationSequence;
use crate::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// A row-stochastic transition matrix with initial state probabilities.
/// Transition rows are serialized as row-major nested JSON arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl MarkovChain {
    pub fn new(transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let chain = MarkovChain { transition, initial };
        chain.validate()?;
        Ok(chain)
    }

    /// Check stochasticity. Deserialized chains must be validated before use.
    pub fn validate(&self) -> Result<()> {
        let m = self.transition.len();
        if m == 0 {
            return Err(Error::InvalidParameter("state count must be >= 1".into()));
        }
        if self.initial.len() != m {
            return Err(Error::LengthMismatch(format!(
                "{} initial probabilities for {m} states",
                self.initial.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                return Err(Error::LengthMismatch(format!(
                    "transition row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParameter(format!(
                    "transition row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidParameter(format!(
                    "transition row {i} sums to {sum}"
                )));
            }
        }
        if self.initial.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "initial probabilities outside [0, 1]".into(),
            ));
        }
        let sum: f64 = self.initial.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParameter(format!(
                "initial probabilities sum to {sum}"
            )));
        }
        Ok(())
    }

    /// Number of states.
    pub fn m(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// The unique probability vector fixed under the transition matrix,
    /// solved as the linear system `(P^T - I) pi = 0` with a normalization
    /// row. Exact for the small state counts used here, no iteration.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let m = self.m();
        if m == 1 {
            return Ok(vec![1.0]);
        }
        // Build (P^T - I) with the last equation replaced by sum(pi) = 1.
        let mut a = vec![vec![0.0f64; m + 1]; m];
        for i in 0..m - 1 {
            for j in 0..m {
                a[i][j] = self.transition[j][i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..m {
            a[m - 1][j] = 1.0;
        }
        a[m - 1][m] = 1.0;

        // Gaussian elimination with partial pivoting; a vanishing pivot means
        // the stationary vector is not unique.
        for col in 0..m {
            let pivot_row = (col..m)
                .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
                .unwrap();
            if a[pivot_row][col].abs() < 1e-12 {
                return Err(Error::AmbiguousStationary(
                    "singular system; chain is reducible or otherwise lacks a unique stationary vector"
                        .into(),
                ));
            }
            a.swap(col, pivot_row);
            for r in 0..m {
                if r != col {
                    let factor = a[r][col] / a[col][col];
                    for c in col..=m {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
        let mut pi: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
        for p in &mut pi {
            *p = p.max(0.0);
        }
        let total: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= total;
        }

        let residual = (0..m)
            .map(|j| {
                let reproduced: f64 = (0..m).map(|i| pi[i] * self.transition[i][j]).sum();
                (reproduced - pi[j]).abs()
            })
            .fold(0.0f64, f64::max);
        if residual > 1e-12 {
            return Err(Error::AmbiguousStationary(format!(
                "solution residual {residual:.3e} exceeds 1e-12"
            )));
        }
        Ok(pi)
    }

    /// Mean dwell per visit of each state, `1 / (1 - p_ii)` samples.
    pub fn mean_state_durations(&self) -> Result<Vec<f64>> {
        self.transition
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row[i] >= 1.0 {
                    Err(Error::InfiniteDuration(i))
                } else {
                    Ok(1.0 / (1.0 - row[i]))
                }
            })
            .collect()
    }
}

/// A sequence of 0-based state indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePath(pub Vec<usize>);

impl StatePath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

/// Draw a category from a probability vector using a single uniform draw.
fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulate `n` steps of the chain, emitting one amplitude per visited state
/// from that state's density. The first state is drawn from the chain's
/// initial probabilities. Deterministic under a fixed seeded RNG.
pub fn simulate<R: Rng + ?Sized>(
    chain: &MarkovChain,
    emissions: &[EmissionDistribution],
    n: usize,
    rng: &mut R,
) -> Result<(StatePath, ObservationSequence)> {
    if emissions.len() != chain.m() {
        return Err(Error::LengthMismatch(format!(
            "{} emission densities for {} states",
            emissions.len(),
            chain.m()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sequence length must be >= 1".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut state = sample_categorical(chain.initial(), rng);
    for _ in 0..n {
        states.push(state);
        samples.push(emissions[state].sample(rng));
        state = sample_categorical(&chain.transition()[state], rng);
    }
    Ok((StatePath(states), ObservationSequence::new(samples)?))
}

/// Draw a state path without emissions. Together with [`emit_observations`]
/// this lets one path carry several emission scenarios, the way benchmark
/// tables vary the densities while reusing the underlying state sequence.
pub fn sample_path<R: Rng + ?Sized>(
    chain: &MarkovChain,
    n: usize,
    rng: &mut R,
) -> Result<StatePath> {
    if n == 0 {
        return Err(Error::InvalidInput("sequence length must be >= 1".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut state = sample_categorical(chain.initial(), rng);
    for _ in 0..n {
        states.push(state);
        state = sample_categorical(&chain.transition()[state], rng);
    }
    Ok(StatePath(states))
}

/// Draw one amplitude per path step from the visited state's density.
pub fn emit_observations<R: Rng + ?Sized>(
    path: &StatePath,
    emissions: &[EmissionDistribution],
    rng: &mut R,
) -> Result<ObservationSequence> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty state path".into()));
    }
    if let Some(&bad) = path.states().iter().find(|&&s| s >= emissions.len()) {
        return Err(Error::LengthMismatch(format!(
            "state {bad} out of range for {} emission densities",
            emissions.len()
        )));
    }
    let samples = path
        .states()
        .iter()
        .map(|&s| emissions[s].sample(rng))
        .collect();
    ObservationSequence::new(samples)
}

/// Merge state visits shorter than `min_run` samples into their neighbors —
/// a reporting convention applied before duration statistics, not part of
/// simulation or estimation. A short run is absorbed by the preceding run
/// (the following one when it starts the path); merging repeats until no
/// short run remains or a single run is left. `min_run <= 1` is the
/// identity.
pub fn merge_short_runs(path: &StatePath, min_run: usize) -> StatePath {
    if min_run <= 1 || path.len() <= 1 {
        return path.clone();
    }
    // Run-length encode, then repeatedly absorb the first short run.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &s in path.states() {
        match runs.last_mut() {
            Some((state, len)) if *state == s => *len += 1,
            _ => runs.push((s, 1)),
        }
    }
    loop {
        if runs.len() <= 1 {
            break;
        }
        let Some(idx) = runs.iter().position(|&(_, len)| len < min_run) else {
            break;
        };
        let (_, len) = runs.remove(idx);
        let absorb_into = if idx == 0 { 0 } else { idx - 1 };
        runs[absorb_into].1 += len;
        // Re-join neighbors that became equal after absorption.
        if absorb_into + 1 < runs.len() && runs[absorb_into].0 == runs[absorb_into + 1].0 {
            let (_, tail) = runs.remove(absorb_into + 1);
            runs[absorb_into].1 += tail;
        }
    }
    let mut out = Vec::with_capacity(path.len());
    for (state, len) in runs {
        out.extend(std::iter::repeat(state).take(len));
    }
    StatePath(out)
}
