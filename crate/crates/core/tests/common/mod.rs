//! Shared test support: an exhaustive path-enumeration oracle for posterior
//! and re-estimation checks, plus random instance generators.
//!
//! The oracle works in plain linear arithmetic directly from the model
//! definition — no forward-backward recursion, no log-domain tricks — so it
//! is an independent reference for the implementation under test. Only
//! usable for tiny instances (m^n paths).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lmsc_hmm::distributions::EmissionDistribution;
use lmsc_hmm::hmm::HmmModel;
use lmsc_hmm::markov::MarkovChain;
use lmsc_hmm::preprocess::ObservationSequence;

pub struct Enumerated {
    pub log_likelihood: f64,
    /// Linear state posteriors, n rows of m.
    pub gamma: Vec<Vec<f64>>,
    /// Linear transition posteriors, n-1 steps of m x m.
    pub zeta: Vec<Vec<Vec<f64>>>,
    /// Re-estimated transition matrix: sum_t zeta_t(i,j) / sum_t sum_j zeta_t(i,j).
    pub transition: Vec<Vec<f64>>,
    /// Re-estimated initial probabilities: sum_j zeta_0(i,j).
    pub initial: Vec<f64>,
}

/// Sum the joint density over every possible state path.
pub fn enumerate_posteriors(model: &HmmModel, obs: &ObservationSequence) -> Enumerated {
    let n = obs.len();
    let m = model.m();
    let chain = model.chain();
    let dens: Vec<Vec<f64>> = obs
        .samples()
        .iter()
        .map(|&r| {
            (0..m)
                .map(|i| model.emissions()[i].pdf(r).unwrap())
                .collect()
        })
        .collect();

    let mut total = 0.0f64;
    let mut gamma = vec![vec![0.0f64; m]; n];
    let mut zeta = vec![vec![vec![0.0f64; m]; m]; n - 1];

    let mut path = vec![0usize; n];
    loop {
        let mut prob = chain.initial()[path[0]] * dens[0][path[0]];
        for t in 1..n {
            prob *= chain.transition_prob(path[t - 1], path[t]) * dens[t][path[t]];
        }
        total += prob;
        for t in 0..n {
            gamma[t][path[t]] += prob;
        }
        for t in 0..n - 1 {
            zeta[t][path[t]][path[t + 1]] += prob;
        }

        // Odometer increment over the m^n paths.
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            path[pos] += 1;
            if path[pos] < m {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    for row in &mut gamma {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    for step in &mut zeta {
        for row in step.iter_mut() {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }

    let mut transition = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        let mut denom = 0.0;
        for step in &zeta {
            for j in 0..m {
                transition[i][j] += step[i][j];
                denom += step[i][j];
            }
        }
        if denom > 0.0 {
            for j in 0..m {
                transition[i][j] /= denom;
            }
        }
    }
    let initial: Vec<f64> = (0..m).map(|i| zeta[0][i].iter().sum()).collect();

    Enumerated {
        log_likelihood: total.ln(),
        gamma,
        zeta,
        transition,
        initial,
    }
}

/// A random fully-connected model with Gaussian emissions, safe for
/// enumeration and linear-domain comparisons.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize) -> HmmModel {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    let raw_init: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw_init.iter().sum();
    let initial = raw_init.into_iter().map(|v| v / sum).collect();
    let chain = MarkovChain::new(rows, initial).unwrap();
    let emissions: Vec<EmissionDistribution> = (0..m)
        .map(|i| {
            EmissionDistribution::gaussian(
                i as f64 + rng.random_range(-0.3..0.3),
                rng.random_range(0.2..0.8),
            )
            .unwrap()
        })
        .collect();
    HmmModel::new(chain, emissions).unwrap()
}

pub fn random_obs(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ObservationSequence {
    // Amplitudes roughly cover the emission means so no state is starved.
    let samples: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-0.8..(m as f64 - 0.2)))
        .collect();
    ObservationSequence::new(samples).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
