//! Log-domain forward-backward inference and Baum-Welch re-estimation.
//!
//! Transition and initial-state probabilities are re-estimated from an
//! amplitude sequence while the emission densities stay fixed; they are
//! assumed known a priori, typically from a curve-fitting step.
//!
//! All metrics live in the log domain: sums of exponentials are evaluated
//! with the max* operator, so the recursions stay finite for arbitrarily
//! long sequences where linear-domain metrics underflow within a few hundred
//! steps. A normalized linear-domain implementation is provided as an
//! independent reference for cross-validation on short sequences.

use serde::{Deserialize, Serialize};

use crate::distributions::EmissionDistribution;
use crate::markov::{MarkovChain, StatePath};
use crate::preprocess::ObservationSequence;
use crate::{Error, Result};

/// A Markov chain paired with one emission density per state. This is the
/// object Baum-Welch re-estimates; the densities are never modified.
/// Deserialized models must be checked with [`HmmModel::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    chain: MarkovChain,
    emissions: Vec<EmissionDistribution>,
}

impl HmmModel {
    pub fn new(chain: MarkovChain, emissions: Vec<EmissionDistribution>) -> Result<Self> {
        if emissions.len() != chain.m() {
            return Err(Error::LengthMismatch(format!(
                "{} emission densities for {} states",
                emissions.len(),
                chain.m()
            )));
        }
        for e in &emissions {
            e.validate()?;
        }
        Ok(HmmModel { chain, emissions })
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.emissions.len() != self.chain.m() {
            return Err(Error::LengthMismatch(format!(
                "{} emission densities for {} states",
                self.emissions.len(),
                self.chain.m()
            )));
        }
        for e in &self.emissions {
            e.validate()?;
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.chain.m()
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn emissions(&self) -> &[EmissionDistribution] {
        &self.emissions
    }
}

/// An n-by-m table of log values (forward/backward metrics or posteriors).
#[derive(Debug, Clone, PartialEq)]
pub struct LogTable {
    data: Vec<f64>,
    n: usize,
    m: usize,
}

impl LogTable {
    fn filled(n: usize, m: usize, value: f64) -> Self {
        LogTable {
            data: vec![value; n * m],
            n,
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn at(&self, t: usize, i: usize) -> f64 {
        self.data[t * self.m + i]
    }

    #[inline]
    fn set(&mut self, t: usize, i: usize, v: f64) {
        self.data[t * self.m + i] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.m..(t + 1) * self.m]
    }
}

/// The E-step output: log forward metrics, log backward metrics, log state
/// posteriors, and the sequence log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTables {
    pub alpha: LogTable,
    pub beta: LogTable,
    pub gamma: LogTable,
    pub log_likelihood: f64,
}

/// Log transition posteriors `zeta_t(i, j)` for t in `0..n-1`, row-major in
/// (i, j). Mainly a diagnostic/validation surface; re-estimation streams
/// these quantities without materializing the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPosteriors {
    data: Vec<f64>,
    steps: usize,
    m: usize,
}

impl TransitionPosteriors {
    /// Number of transition steps (`n - 1`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.data[(t * self.m + i) * self.m + j]
    }
}

/// Outcome of an iterated Baum-Welch fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: HmmModel,
    /// Log-likelihood of the model at the start of each iteration;
    /// non-decreasing up to numerical slack.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// max*(a, b) = ln(e^a + e^b), the log-domain replacement for addition:
/// the max plus a correction term computed with `ln_1p`. `-inf` is the
/// identity element. The correction is skipped once the gap exceeds the
/// resolution of f64.
#[inline]
pub fn max_star(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let diff = (a - b).abs();
    let max = a.max(b);
    if diff > 37.0 {
        max
    } else {
        max + (-diff).exp().ln_1p()
    }
}

/// max* over a slice, computed as a left fold; `-inf` for an empty slice.
pub fn max_star_slice(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, max_star)
}

/// Log transition matrix and log initial probabilities. Zero probabilities
/// map to `-inf` and stay structural zeros through re-estimation.
struct LogParams {
    m: usize,
    /// log p_ij, row-major.
    trans: Vec<f64>,
    init: Vec<f64>,
}

impl LogParams {
    fn from_chain(chain: &MarkovChain) -> Self {
        let m = chain.m();
        let mut trans = Vec::with_capacity(m * m);
        for row in chain.transition() {
            trans.extend(row.iter().map(|p| p.ln()));
        }
        let init = chain.initial().iter().map(|p| p.ln()).collect();
        LogParams { m, trans, init }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.m + j]
    }
}

/// Per-sample log emission densities, evaluated once so iterated fits do not
/// recompute them.
fn log_emissions(model: &HmmModel, obs: &ObservationSequence) -> Result<LogTable> {
    let n = obs.len();
    let m = model.m();
    let mut phi = LogTable::filled(n, m, f64::NEG_INFINITY);
    for (t, &r) in obs.samples().iter().enumerate() {
        for (i, e) in model.emissions().iter().enumerate() {
            phi.set(t, i, e.log_pdf(r)?);
        }
    }
    Ok(phi)
}

fn forward_from(phi: &LogTable, params: &LogParams) -> Result<(LogTable, f64)> {
    let (n, m) = (phi.n(), phi.m());
    let mut alpha = LogTable::filled(n, m, f64::NEG_INFINITY);
    for i in 0..m {
        alpha.set(0, i, params.init[i] + phi.at(0, i));
    }
    if max_star_slice(alpha.row(0)) == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood { t: 0 });
    }
    for t in 1..n {
        for i in 0..m {
            let mut acc = f64::NEG_INFINITY;
            for j in 0..m {
                acc = max_star(acc, alpha.at(t - 1, j) + params.at(j, i));
            }
            alpha.set(t, i, phi.at(t, i) + acc);
        }
        if max_star_slice(alpha.row(t)) == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood { t });
        }
    }
    let log_likelihood = max_star_slice(alpha.row(n - 1));
    Ok((alpha, log_likelihood))
}

fn backward_from(phi: &LogTable, params: &LogParams) -> LogTable {
    let (n, m) = (phi.n(), phi.m());
    let mut beta = LogTable::filled(n, m, 0.0);
    for t in (0..n - 1).rev() {
        for i in 0..m {
            let mut acc = f64::NEG_INFINITY;
            for j in 0..m {
                acc = max_star(acc, beta.at(t + 1, j) + params.at(i, j) + phi.at(t + 1, j));
            }
            beta.set(t, i, acc);
        }
    }
    beta
}

/// Log forward metrics `alpha_t(i)` and the sequence log-likelihood
/// `max*_i alpha_{n-1}(i)`.
///
/// Errors with [`Error::ZeroLikelihood`] when no state assigns positive
/// density to some observation — a model/support mismatch that must surface
/// rather than being floored away.
pub fn forward(model: &HmmModel, obs: &ObservationSequence) -> Result<(LogTable, f64)> {
    let phi = log_emissions(model, obs)?;
    forward_from(&phi, &LogParams::from_chain(model.chain()))
}

/// Log backward metrics `beta_t(i)`, with `beta_{n-1}(i) = 0` for all i.
pub fn backward(model: &HmmModel, obs: &ObservationSequence) -> Result<LogTable> {
    let phi = log_emissions(model, obs)?;
    Ok(backward_from(&phi, &LogParams::from_chain(model.chain())))
}

/// Log state posteriors: `gamma_t(i) = alpha_t(i) + beta_t(i)` normalized per
/// row with max*, so each row of `exp(gamma)` sums to one.
pub fn posteriors(alpha: &LogTable, beta: &LogTable) -> Result<LogTable> {
    if alpha.n() != beta.n() || alpha.m() != beta.m() {
        return Err(Error::LengthMismatch(format!(
            "alpha is {}x{}, beta is {}x{}",
            alpha.n(),
            alpha.m(),
            beta.n(),
            beta.m()
        )));
    }
    let (n, m) = (alpha.n(), alpha.m());
    let mut gamma = LogTable::filled(n, m, f64::NEG_INFINITY);
    for t in 0..n {
        let mut norm = f64::NEG_INFINITY;
        for i in 0..m {
            norm = max_star(norm, alpha.at(t, i) + beta.at(t, i));
        }
        if norm == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood { t });
        }
        for i in 0..m {
            gamma.set(t, i, alpha.at(t, i) + beta.at(t, i) - norm);
        }
    }
    Ok(gamma)
}

/// Full E-step: forward, backward, posteriors and log-likelihood.
pub fn e_step(model: &HmmModel, obs: &ObservationSequence) -> Result<PosteriorTables> {
    let phi = log_emissions(model, obs)?;
    let params = LogParams::from_chain(model.chain());
    let (alpha, log_likelihood) = forward_from(&phi, &params)?;
    let beta = backward_from(&phi, &params);
    let gamma = posteriors(&alpha, &beta)?;
    Ok(PosteriorTables {
        alpha,
        beta,
        gamma,
        log_likelihood,
    })
}

/// Log transition posteriors `zeta_t(i,j)`, normalized per step so each
/// step's `exp(zeta)` sums to one over (i, j).
pub fn transition_posteriors(
    model: &HmmModel,
    obs: &ObservationSequence,
) -> Result<TransitionPosteriors> {
    if obs.len() < 2 {
        return Err(Error::InvalidInput(
            "transition posteriors need at least 2 observations".into(),
        ));
    }
    let phi = log_emissions(model, obs)?;
    let params = LogParams::from_chain(model.chain());
    let (alpha, _) = forward_from(&phi, &params)?;
    let beta = backward_from(&phi, &params);
    let (n, m) = (phi.n(), phi.m());
    let mut data = vec![f64::NEG_INFINITY; (n - 1) * m * m];
    for t in 0..n - 1 {
        let mut norm = f64::NEG_INFINITY;
        let base = t * m * m;
        for i in 0..m {
            for j in 0..m {
                let v = alpha.at(t, i) + params.at(i, j) + phi.at(t + 1, j) + beta.at(t + 1, j);
                data[base + i * m + j] = v;
                norm = max_star(norm, v);
            }
        }
        for v in &mut data[base..base + m * m] {
            *v -= norm;
        }
    }
    Ok(TransitionPosteriors {
        data,
        steps: n - 1,
        m,
    })
}

/// Most probable state at each time instance: `argmax_i gamma_t(i)`, ties
/// broken toward the lowest state index.
pub fn decode(gamma: &LogTable) -> StatePath {
    let mut states = Vec::with_capacity(gamma.n());
    for t in 0..gamma.n() {
        let row = gamma.row(t);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        states.push(best);
    }
    StatePath(states)
}

/// One full Baum-Welch step: E-step on the current model, then re-estimation
/// of the transition and initial-state probabilities in the log domain. The
/// emission densities are carried over unchanged. Returns the updated model,
/// the log-likelihood of the *input* model, and the E-step tables.
///
/// Structural zeros (`p_ij = 0`) can never regain mass and are preserved. A
/// state with no posterior mass anywhere keeps its previous transition row,
/// since the data carries no evidence about it.
pub fn reestimate(
    model: &HmmModel,
    obs: &ObservationSequence,
) -> Result<(HmmModel, f64, PosteriorTables)> {
    let n = obs.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "re-estimation needs at least 2 observations".into(),
        ));
    }
    let m = model.m();
    let phi = log_emissions(model, obs)?;
    let params = LogParams::from_chain(model.chain());
    let (alpha, log_likelihood) = forward_from(&phi, &params)?;
    let beta = backward_from(&phi, &params);
    let gamma = posteriors(&alpha, &beta)?;

    // Accumulate max*_t zeta_t(i,j) without materializing the zeta table.
    // Each step is normalized by its own max* over (i,j); that normalizer
    // equals the sequence log-likelihood, so it cancels in the ratio below,
    // but keeping it per-step mirrors the posterior definition exactly.
    let mut acc = vec![f64::NEG_INFINITY; m * m];
    let mut step = vec![f64::NEG_INFINITY; m * m];
    let mut first_step = vec![f64::NEG_INFINITY; m * m];
    for t in 0..n - 1 {
        let mut norm = f64::NEG_INFINITY;
        for i in 0..m {
            for j in 0..m {
                let v = alpha.at(t, i) + params.at(i, j) + phi.at(t + 1, j) + beta.at(t + 1, j);
                step[i * m + j] = v;
                norm = max_star(norm, v);
            }
        }
        for (k, v) in step.iter().enumerate() {
            acc[k] = max_star(acc[k], v - norm);
        }
        if t == 0 {
            for (dst, v) in first_step.iter_mut().zip(&step) {
                *dst = v - norm;
            }
        }
    }

    // pi_ij = max*_t zeta_t(i,j) - max*_j of that row. The exponentials are
    // probabilities by construction; clamp the odd one-ulp excursion past 1.
    let mut transition = Vec::with_capacity(m);
    for i in 0..m {
        let row = &acc[i * m..(i + 1) * m];
        let denom = max_star_slice(row);
        if denom == f64::NEG_INFINITY {
            transition.push(model.chain().transition()[i].clone());
        } else {
            transition.push(row.iter().map(|v| (v - denom).exp().min(1.0)).collect());
        }
    }
    // pi_i = max*_j zeta_0(i,j).
    let initial: Vec<f64> = (0..m)
        .map(|i| max_star_slice(&first_step[i * m..(i + 1) * m]).exp().min(1.0))
        .collect();

    let chain = MarkovChain::new(transition, initial)?;
    let updated = HmmModel::new(chain, model.emissions().to_vec())?;
    Ok((
        updated,
        log_likelihood,
        PosteriorTables {
            alpha,
            beta,
            gamma,
            log_likelihood,
        },
    ))
}

/// Iterate [`reestimate`] until the absolute log-likelihood improvement
/// falls below `tol` or `max_iters` is reached. The trace records the
/// log-likelihood of the model entering each iteration.
pub fn fit(
    model0: &HmmModel,
    obs: &ObservationSequence,
    max_iters: usize,
    tol: f64,
) -> Result<FitReport> {
    if max_iters < 1 {
        return Err(Error::InvalidInput("max_iters must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let mut current = model0.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let (next, ll, _) = reestimate(&current, obs)?;
        current = next;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if (ll - prev).abs() < tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
    }
    Ok(FitReport {
        model: current,
        iterations: trace.len(),
        log_likelihood_trace: trace,
        converged,
    })
}

/// Normalized linear-domain forward-backward, an independent reference for
/// the log-domain path. Metrics are renormalized every step, and the tables
/// are converted back to logs so the output contract matches
/// [`posteriors`]. Limited to short sequences; anything that leaves f64
/// range reports [`Error::OracleRange`].
pub fn linear_forward_backward_oracle(
    model: &HmmModel,
    obs: &ObservationSequence,
) -> Result<PosteriorTables> {
    let n = obs.len();
    let m = model.m();
    if n > 10_000 {
        return Err(Error::OracleRange(format!(
            "linear-domain reference supports n <= 10000, got {n}"
        )));
    }
    // Densities in the linear domain on purpose: this path must not share
    // the log-domain evaluation it cross-checks.
    let mut dens = vec![0.0f64; n * m];
    for (t, &r) in obs.samples().iter().enumerate() {
        for i in 0..m {
            dens[t * m + i] = model.emissions()[i].pdf(r)?;
        }
    }
    let p = model.chain();

    let mut a = vec![0.0f64; n * m];
    let mut scales = vec![0.0f64; n];
    for i in 0..m {
        a[i] = p.initial()[i] * dens[i];
    }
    let c0: f64 = a[..m].iter().sum();
    if c0 <= 0.0 {
        return Err(Error::ZeroLikelihood { t: 0 });
    }
    if !c0.is_finite() {
        return Err(Error::OracleRange("non-finite forward scale".into()));
    }
    scales[0] = c0;
    for v in &mut a[..m] {
        *v /= c0;
    }
    for t in 1..n {
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += a[(t - 1) * m + j] * p.transition_prob(j, i);
            }
            a[t * m + i] = s * dens[t * m + i];
        }
        let ct: f64 = a[t * m..(t + 1) * m].iter().sum();
        if ct <= 0.0 {
            return Err(Error::ZeroLikelihood { t });
        }
        if !ct.is_finite() {
            return Err(Error::OracleRange("non-finite forward scale".into()));
        }
        scales[t] = ct;
        for v in &mut a[t * m..(t + 1) * m] {
            *v /= ct;
        }
    }

    let mut b = vec![0.0f64; n * m];
    for i in 0..m {
        b[(n - 1) * m + i] = 1.0;
    }
    for t in (0..n - 1).rev() {
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += p.transition_prob(i, j) * dens[(t + 1) * m + j] * b[(t + 1) * m + j];
            }
            b[t * m + i] = s / scales[t + 1];
        }
        if b[t * m..(t + 1) * m].iter().any(|v| !v.is_finite()) {
            return Err(Error::OracleRange("non-finite backward metric".into()));
        }
    }

    // Reconstruct unnormalized log metrics from the scaled tables.
    let log_scales: Vec<f64> = scales.iter().map(|c| c.ln()).collect();
    let mut cum = vec![0.0f64; n];
    let mut run = 0.0;
    for t in 0..n {
        run += log_scales[t];
        cum[t] = run;
    }
    let log_likelihood = cum[n - 1];

    let mut alpha = LogTable::filled(n, m, f64::NEG_INFINITY);
    let mut beta = LogTable::filled(n, m, f64::NEG_INFINITY);
    let mut gamma = LogTable::filled(n, m, f64::NEG_INFINITY);
    for t in 0..n {
        let tail = log_likelihood - cum[t];
        let row_sum: f64 = (0..m).map(|i| a[t * m + i] * b[t * m + i]).sum();
        for i in 0..m {
            alpha.set(t, i, a[t * m + i].ln() + cum[t]);
            beta.set(t, i, b[t * m + i].ln() + tail);
            gamma.set(t, i, (a[t * m + i] * b[t * m + i] / row_sum).ln());
        }
    }
    Ok(PosteriorTables {
        alpha,
        beta,
        gamma,
        log_likelihood,
    })
}
