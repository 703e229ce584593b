//! Simulated-annealing fit of a fixed-family mixture to an empirical
//! amplitude density.
//!
//! The distribution families are chosen a priori (one per propagation
//! state); the fit adjusts their parameters and weights so the weighted sum
//! tracks the histogram of the observed envelope. The fitted weights double
//! as the state-probability initialization for Baum-Welch, and the fitted
//! components become its fixed emission densities.
//!
//! The optimizer is a classic Metropolis annealer with geometric cooling.
//! The objective is the mean squared error between the mixture density and
//! the empirical density at bin centers; it is recorded in results so runs
//! are comparable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{check_weights, EmissionDistribution, IntegrationGrid};
use crate::preprocess::ObservationSequence;
use crate::{Error, Result};

/// A normalized histogram density: `bin_edges` has one more entry than
/// `density`, and `sum(density * width) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf {
    bin_edges: Vec<f64>,
    density: Vec<f64>,
}

impl EmpiricalPdf {
    pub fn new(bin_edges: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if bin_edges.len() != density.len() + 1 {
            return Err(Error::LengthMismatch(format!(
                "{} edges for {} bins",
                bin_edges.len(),
                density.len()
            )));
        }
        if density.is_empty() {
            return Err(Error::InvalidInput("empty histogram".into()));
        }
        if bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("bin edges must be strictly increasing".into()));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput("densities must be finite and non-negative".into()));
        }
        let mass: f64 = bin_edges
            .windows(2)
            .zip(&density)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "histogram mass is {mass}, expected 1"
            )));
        }
        Ok(EmpiricalPdf { bin_edges, density })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Histogram mean, treating each bin's mass as sitting at its center.
    pub fn mean(&self) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| 0.5 * (w[0] + w[1]) * d * (w[1] - w[0]))
            .sum()
    }

    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var: f64 = self
            .bin_edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| {
                let c = 0.5 * (w[0] + w[1]);
                (c - mean) * (c - mean) * d * (w[1] - w[0])
            })
            .sum();
        var.max(0.0).sqrt()
    }

    /// Quantile by linear interpolation of the cumulative histogram.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let mut cum = 0.0;
        for (w, d) in self.bin_edges.windows(2).zip(&self.density) {
            let mass = d * (w[1] - w[0]);
            if cum + mass >= q && mass > 0.0 {
                return w[0] + (q - cum) / mass * (w[1] - w[0]);
            }
            cum += mass;
        }
        *self.bin_edges.last().unwrap()
    }
}

/// Bin layout for [`empirical_pdf`]: a count of equal-width bins spanning
/// the sample range, or explicit edges.
#[derive(Debug, Clone, PartialEq)]
pub enum BinSpec {
    Count(usize),
    Edges(Vec<f64>),
}

/// Normalized histogram density of an observation sequence. With explicit
/// edges, samples outside the edge range are dropped and the density is
/// normalized over the retained ones.
pub fn empirical_pdf(obs: &ObservationSequence, bins: BinSpec) -> Result<EmpiricalPdf> {
    let samples = obs.samples();
    let edges = match bins {
        BinSpec::Count(0) => return Err(Error::InvalidInput("bin count must be >= 1".into())),
        BinSpec::Count(c) => {
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
            (0..=c)
                .map(|k| lo + (hi - lo) * k as f64 / c as f64)
                .collect::<Vec<_>>()
        }
        BinSpec::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(
                    "edges must be strictly increasing with at least 2 entries".into(),
                ));
            }
            e
        }
    };
    let b = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[b]);
    let mut counts = vec![0usize; b];
    let mut kept = 0usize;
    for &x in samples {
        if x < lo || x > hi {
            continue;
        }
        // Equal-width fast path would be fine, but edges may be irregular.
        let idx = match edges.binary_search_by(|e| e.total_cmp(&x)) {
            Ok(k) => k.min(b - 1),
            Err(k) => k - 1,
        };
        counts[idx] += 1;
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::InvalidInput("no samples within the bin edges".into()));
    }
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (kept as f64 * (w[1] - w[0])))
        .collect();
    EmpiricalPdf::new(edges, density)
}

/// A weighted mixture of emission densities. Families are fixed; fitting
/// adjusts parameters and weights only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    weights: Vec<f64>,
    components: Vec<EmissionDistribution>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<EmissionDistribution>) -> Result<Self> {
        check_weights(&weights, components.len())?;
        for c in &components {
            c.validate()?;
        }
        Ok(MixtureModel { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[EmissionDistribution] {
        &self.components
    }

    pub fn pdf(&self, r: f64) -> Result<f64> {
        crate::distributions::mixture_pdf(&self.weights, &self.components, r)
    }

    /// Mixture weights read as Markov state probabilities, the
    /// initialization handed to Baum-Welch.
    pub fn state_probabilities(&self) -> Vec<f64> {
        self.weights.clone()
    }

    /// Quantiles of the mixture by numeric inversion of its CDF on a
    /// covering grid.
    pub fn quantiles(&self, probs: &[f64]) -> Result<Vec<f64>> {
        let grid = IntegrationGrid::covering(&self.components)?;
        let n = grid.intervals;
        let h = (grid.hi - grid.lo) / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        let mut run = 0.0;
        let mut prev = self.pdf(grid.lo)?;
        cum.push(0.0);
        for k in 1..=n {
            let x = grid.lo + h * k as f64;
            let cur = self.pdf(x)?;
            run += 0.5 * (prev + cur) * h;
            cum.push(run);
            prev = cur;
        }
        let total = run;
        if total < 0.999 {
            return Err(Error::IntegrationCoverage(format!(
                "mixture grid captures only {total:.6} of the mass"
            )));
        }
        probs
            .iter()
            .map(|&p| {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidInput(format!("quantile prob {p} outside [0, 1]")));
                }
                let target = p * total;
                let k = cum.partition_point(|&c| c < target).min(n);
                if k == 0 {
                    return Ok(grid.lo);
                }
                let (c0, c1) = (cum[k - 1], cum[k]);
                let x0 = grid.lo + h * (k - 1) as f64;
                let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
                Ok(x0 + frac * h)
            })
            .collect()
    }
}

/// State probabilities implied by a fitted mixture (its weights).
pub fn state_probabilities(mix: &MixtureModel) -> Vec<f64> {
    mix.state_probabilities()
}

/// Distribution family tags for mixture fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Rayleigh,
    Rice,
    Lognormal,
}

impl Family {
    fn build(self, params: &[f64]) -> Result<EmissionDistribution> {
        match self {
            Family::Gaussian => EmissionDistribution::gaussian(params[0], params[1]),
            Family::Rayleigh => EmissionDistribution::rayleigh(params[0]),
            Family::Rice => EmissionDistribution::rice(params[0], params[1]),
            Family::Lognormal => EmissionDistribution::lognormal(params[0], params[1]),
        }
    }

    /// Initial parameters putting the component's location near `loc` with
    /// spread near `scale`.
    fn init_params(self, loc: f64, scale: f64) -> Vec<f64> {
        let loc = loc.max(1e-3);
        let scale = scale.max(1e-3);
        match self {
            Family::Gaussian => vec![loc, scale],
            // Rayleigh mean is sigma * sqrt(pi/2).
            Family::Rayleigh => vec![loc / 1.2533141373155003],
            Family::Rice => vec![loc, scale],
            Family::Lognormal => {
                let sigma_log = 0.25;
                vec![loc.ln() - 0.5 * sigma_log * sigma_log, sigma_log]
            }
        }
    }

    /// Where a family typically sits on the amplitude axis relative to the
    /// others, used to hand out initial quantile locations. Rayleigh models
    /// pure scatter (lowest envelope), Rice carries a line-of-sight
    /// component (highest); lognormal shadowing sits between. Ties keep
    /// declaration order.
    fn amplitude_affinity(self) -> u8 {
        match self {
            Family::Rayleigh => 0,
            Family::Lognormal => 1,
            Family::Gaussian => 2,
            Family::Rice => 3,
        }
    }
}

/// Annealing schedule and proposal configuration.
///
/// `None` fields are derived at run time: the initial temperature from the
/// objective spread over 100 random probes, the minimum temperature as
/// 1e-6 of the initial, and proposal scales from the initial parameter
/// magnitudes. The full proposal-scale vector is ordered weights first, then
/// each component's parameters in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    #[serde(default)]
    pub initial_temperature: Option<f64>,
    pub cooling_factor: f64,
    pub steps_per_temperature: usize,
    #[serde(default)]
    pub min_temperature: Option<f64>,
    #[serde(default)]
    pub proposal_scales: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            initial_temperature: None,
            cooling_factor: 0.95,
            steps_per_temperature: 200,
            min_temperature: None,
            proposal_scales: None,
            seed: 0,
        }
    }
}

impl SaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cooling_factor {} must lie in (0, 1)",
                self.cooling_factor
            )));
        }
        if self.steps_per_temperature == 0 {
            return Err(Error::InvalidParameter("steps_per_temperature must be >= 1".into()));
        }
        for (name, t) in [
            ("initial_temperature", self.initial_temperature),
            ("min_temperature", self.min_temperature),
        ] {
            if let Some(t) = t {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Error::InvalidParameter(format!("{name} {t} must be positive")));
                }
            }
        }
        Ok(())
    }
}

const INVALID_PROPOSAL_BUDGET: usize = 100;

struct Candidate {
    weights: Vec<f64>,
    params: Vec<Vec<f64>>,
}

impl Candidate {
    fn slot_count(&self) -> usize {
        self.weights.len() + self.params.iter().map(Vec::len).sum::<usize>()
    }
}

struct SaProblem<'a> {
    families: &'a [Family],
    centers: Vec<f64>,
    target: &'a [f64],
}

impl SaProblem<'_> {
    fn components(&self, cand: &Candidate) -> Result<Vec<EmissionDistribution>> {
        self.families
            .iter()
            .zip(&cand.params)
            .map(|(f, p)| f.build(p))
            .collect()
    }

    /// Components of distinct families must keep their relative places on
    /// the amplitude axis (blockage below shadowing below line of sight).
    /// Without this the annealer can settle in a role-swapped optimum —
    /// a lognormal imitating the Rayleigh bump and vice versa — which fits
    /// the histogram but detaches the states from their physical meaning.
    /// Same-family components are unconstrained.
    fn role_ordered(&self, comps: &[EmissionDistribution]) -> bool {
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                let (ai, aj) = (
                    self.families[i].amplitude_affinity(),
                    self.families[j].amplitude_affinity(),
                );
                let (mi, mj) = (comps[i].mean(), comps[j].mean());
                if (ai < aj && mi > mj) || (ai > aj && mi < mj) {
                    return false;
                }
            }
        }
        true
    }

    /// Mean squared error between mixture pdf and empirical density at bin
    /// centers; `None` when the candidate's parameters are out of domain or
    /// break the family role ordering.
    fn objective(&self, cand: &Candidate) -> Option<f64> {
        let comps = self.components(cand).ok()?;
        if !self.role_ordered(&comps) {
            return None;
        }
        let mut acc = 0.0;
        for (&c, &want) in self.centers.iter().zip(self.target) {
            let mut v = 0.0;
            for (w, d) in cand.weights.iter().zip(&comps) {
                v += w * d.log_pdf_raw(c).exp();
            }
            let diff = v - want;
            acc += diff * diff;
        }
        let mse = acc / self.centers.len() as f64;
        mse.is_finite().then_some(mse)
    }
}

/// Fit a mixture of the given families to an empirical density with
/// simulated annealing.
///
/// Deterministic under the configured seed; the returned objective is never
/// worse than the initial guess's (best-so-far tracking). Returns the fitted
/// mixture and its objective value.
pub fn fit_mixture_sa(
    target: &EmpiricalPdf,
    families: &[Family],
    cfg: &SaConfig,
) -> Result<(MixtureModel, f64)> {
    if families.is_empty() {
        return Err(Error::InvalidInput("at least one family required".into()));
    }
    cfg.validate()?;
    let problem = SaProblem {
        families,
        centers: target.centers(),
        target: target.density(),
    };

    // Method-of-moments split: uniform weights, locations spread across the
    // empirical quantiles, spreads from the overall histogram spread. Each
    // family takes the quantile matching its place on the amplitude axis so
    // components start near the role they are meant to model.
    let k = families.len();
    let spread = (target.std_dev() / k as f64).max(1e-3);
    let mut rank: Vec<usize> = (0..k).collect();
    rank.sort_by_key(|&i| families[i].amplitude_affinity());
    let mut quantile_slot = vec![0usize; k];
    for (slot, &comp) in rank.iter().enumerate() {
        quantile_slot[comp] = slot;
    }
    let init = Candidate {
        weights: vec![1.0 / k as f64; k],
        params: families
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let q = (quantile_slot[i] as f64 + 0.5) / k as f64;
                f.init_params(target.quantile(q), spread)
            })
            .collect(),
    };
    let init_objective = problem
        .objective(&init)
        .ok_or_else(|| Error::AnnealingFailed("initial guess has non-finite objective".into()))?;

    let scales = match &cfg.proposal_scales {
        Some(s) => {
            if s.len() != init.slot_count() {
                return Err(Error::LengthMismatch(format!(
                    "{} proposal scales for {} parameters",
                    s.len(),
                    init.slot_count()
                )));
            }
            s.clone()
        }
        None => {
            let mut s = vec![0.05; k];
            for p in &init.params {
                s.extend(p.iter().map(|v| 0.1 * v.abs().max(0.1)));
            }
            s
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let perturb =
        |cand: &Candidate, slot: usize, rng: &mut ChaCha8Rng| -> Option<Candidate> {
            let mut weights = cand.weights.clone();
            let mut params = cand.params.clone();
            let z: f64 = rng.sample(StandardNormal);
            if slot < k {
                // Perturb one weight on the simplex, then renormalize.
                weights[slot] += scales[slot] * z;
                if weights[slot] <= 1e-6 {
                    return None;
                }
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
            } else {
                let mut idx = slot - k;
                let mut comp = 0;
                while idx >= params[comp].len() {
                    idx -= params[comp].len();
                    comp += 1;
                }
                params[comp][idx] += scales[slot] * z;
                if problem.families[comp].build(&params[comp]).is_err() {
                    return None;
                }
            }
            Some(Candidate { weights, params })
        };

    // Auto temperature: objective spread over random single-slot probes.
    let t0 = match cfg.initial_temperature {
        Some(t) => t,
        None => {
            let mut values = Vec::with_capacity(100);
            let mut invalid = 0usize;
            while values.len() < 100 {
                let slot = rng.random_range(0..init.slot_count());
                match perturb(&init, slot, &mut rng).and_then(|c| problem.objective(&c)) {
                    Some(v) => {
                        values.push(v);
                        invalid = 0;
                    }
                    None => {
                        invalid += 1;
                        if invalid > INVALID_PROPOSAL_BUDGET {
                            return Err(Error::AnnealingFailed(
                                "temperature probes exhausted the invalid-proposal budget".into(),
                            ));
                        }
                    }
                }
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
            var.sqrt().max(1e-12)
        }
    };
    let t_min = cfg.min_temperature.unwrap_or(1e-6 * t0);

    let mut current = init;
    let mut current_obj = init_objective;
    let mut best = Candidate {
        weights: current.weights.clone(),
        params: current.params.clone(),
    };
    let mut best_obj = current_obj;

    let mut temperature = t0;
    while temperature >= t_min {
        for _ in 0..cfg.steps_per_temperature {
            let mut proposal = None;
            let mut invalid = 0usize;
            while proposal.is_none() {
                let slot = rng.random_range(0..current.slot_count());
                match perturb(&current, slot, &mut rng) {
                    Some(c) => match problem.objective(&c) {
                        Some(obj) => proposal = Some((c, obj)),
                        None => invalid += 1,
                    },
                    None => invalid += 1,
                }
                if invalid > INVALID_PROPOSAL_BUDGET {
                    return Err(Error::AnnealingFailed(
                        "invalid-proposal budget exhausted".into(),
                    ));
                }
            }
            let (cand, obj) = proposal.unwrap();
            let accept = obj <= current_obj || {
                let u: f64 = rng.random();
                u < (-(obj - current_obj) / temperature).exp()
            };
            if accept {
                current = cand;
                current_obj = obj;
                if current_obj < best_obj {
                    best_obj = current_obj;
                    best = Candidate {
                        weights: current.weights.clone(),
                        params: current.params.clone(),
                    };
                }
            }
        }
        temperature *= cfg.cooling_factor;
    }

    let components = problem.components(&best)?;
    Ok((MixtureModel::new(best.weights, components)?, best_obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(samples: Vec<f64>) -> ObservationSequence {
        ObservationSequence::new(samples).unwrap()
    }

    #[test]
    fn histogram_hand_counts() {
        let obs = seq(vec![0.25, 0.75, 0.75, 0.75]);
        let pdf = empirical_pdf(&obs, BinSpec::Edges(vec![0.0, 0.5, 1.0])).unwrap();
        assert_eq!(pdf.density(), &[0.5, 1.5]);
    }

    #[test]
    fn histogram_single_bin_mass() {
        let obs = seq(vec![0.2, 0.3, 0.25]);
        let pdf = empirical_pdf(&obs, BinSpec::Edges(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!(pdf.density(), &[1.0, 0.0]);
    }

    #[test]
    fn histogram_tracks_gaussian_density() {
        let d = EmissionDistribution::gaussian(1.0, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let samples: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
        let obs = seq(samples);
        let edges: Vec<f64> = (0..=100).map(|k| 2.0 * k as f64 / 100.0).collect();
        let pdf = empirical_pdf(&obs, BinSpec::Edges(edges)).unwrap();
        let mut max_err = 0.0f64;
        for (c, &h) in pdf.centers().iter().zip(pdf.density()) {
            max_err = max_err.max((h - d.pdf(*c).unwrap()).abs());
        }
        assert!(max_err < 0.05, "max histogram error {max_err}");
    }

    #[test]
    fn histogram_mass_is_one() {
        let obs = seq(vec![0.1, 0.4, 0.9, 1.7, 2.2, 0.8]);
        let pdf = empirical_pdf(&obs, BinSpec::Count(7)).unwrap();
        let mass: f64 = pdf
            .bin_edges()
            .windows(2)
            .zip(pdf.density())
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn histogram_rejects_empty_and_bad_bins() {
        let obs = seq(vec![1.0]);
        assert!(empirical_pdf(&obs, BinSpec::Count(0)).is_err());
        assert!(empirical_pdf(&obs, BinSpec::Edges(vec![1.0])).is_err());
        assert!(empirical_pdf(&obs, BinSpec::Edges(vec![5.0, 6.0])).is_err());
    }

    #[test]
    fn quantiles_of_uniform_histogram() {
        let pdf = EmpiricalPdf::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(pdf.quantile(0.25), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(pdf.quantile(1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pdf.mean(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mixture_quantiles_match_gaussian() {
        let mix = MixtureModel::new(
            vec![1.0],
            vec![EmissionDistribution::gaussian(1.0, 0.2).unwrap()],
        )
        .unwrap();
        let q = mix.quantiles(&[0.5, 0.8413447460685429]).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q[1], 1.2, epsilon = 1e-3);
    }

    #[test]
    fn single_gaussian_self_recovery() {
        let truth = EmissionDistribution::gaussian(1.0, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
        let target = empirical_pdf(&seq(samples), BinSpec::Count(200)).unwrap();
        let cfg = SaConfig {
            seed: 11,
            ..SaConfig::default()
        };
        let (mix, obj) = fit_mixture_sa(&target, &[Family::Gaussian], &cfg).unwrap();
        let EmissionDistribution::Gaussian { mu, sigma } = mix.components()[0] else {
            panic!("family changed");
        };
        assert_abs_diff_eq!(mu, 1.0, epsilon = 0.02);
        assert_abs_diff_eq!(sigma, 0.2, epsilon = 0.02);
        assert!(obj.is_finite());
    }

    #[test]
    fn two_gaussian_mixture_recovers_weights() {
        let chain_weights = [1.0 / 3.0, 2.0 / 3.0];
        let comps = [
            EmissionDistribution::gaussian(0.4, 0.2).unwrap(),
            EmissionDistribution::gaussian(1.0, 0.2).unwrap(),
        ];
        for (sample_seed, sa_seed) in [(21u64, 1u64), (22, 2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let samples: Vec<f64> = (0..100_000)
                .map(|_| {
                    let u: f64 = rng.random();
                    let k = usize::from(u >= chain_weights[0]);
                    comps[k].sample(&mut rng)
                })
                .collect();
            let target = empirical_pdf(&seq(samples), BinSpec::Count(200)).unwrap();
            let cfg = SaConfig {
                seed: sa_seed,
                ..SaConfig::default()
            };
            let (mix, _) =
                fit_mixture_sa(&target, &[Family::Gaussian, Family::Gaussian], &cfg).unwrap();
            // Components may swap; order by location.
            let mut pairs: Vec<(f64, f64)> = mix
                .components()
                .iter()
                .zip(mix.weights())
                .map(|(c, &w)| (c.mean(), w))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_abs_diff_eq!(pairs[0].1, 1.0 / 3.0, epsilon = 0.05);
            assert_abs_diff_eq!(pairs[1].1, 2.0 / 3.0, epsilon = 0.05);
            let probs = mix.state_probabilities();
            assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_annealing_never_beats_best_so_far() {
        let truth = EmissionDistribution::gaussian(0.8, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        let target = empirical_pdf(&seq(samples), BinSpec::Count(100)).unwrap();
        let cfg = SaConfig {
            initial_temperature: Some(0.5),
            min_temperature: Some(0.5),
            steps_per_temperature: 300,
            seed: 3,
            ..SaConfig::default()
        };
        let (_, obj) = fit_mixture_sa(&target, &[Family::Gaussian], &cfg).unwrap();

        // Reproduce the initial objective: uniform weight, quantile init.
        let init = Family::Gaussian.init_params(target.quantile(0.5), target.std_dev().max(1e-3));
        let d0 = Family::Gaussian.build(&init).unwrap();
        let mut acc = 0.0;
        for (c, &want) in target.centers().iter().zip(target.density()) {
            let diff = d0.pdf(*c).unwrap() - want;
            acc += diff * diff;
        }
        let init_obj = acc / target.centers().len() as f64;
        assert!(obj <= init_obj + 1e-15, "objective {obj} worse than initial {init_obj}");
    }

    #[test]
    fn sa_trajectory_is_reproducible() {
        let truth = EmissionDistribution::rayleigh(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        let target = empirical_pdf(&seq(samples), BinSpec::Count(120)).unwrap();
        let cfg = SaConfig {
            seed: 9,
            steps_per_temperature: 50,
            ..SaConfig::default()
        };
        let (m1, o1) = fit_mixture_sa(&target, &[Family::Rayleigh], &cfg).unwrap();
        let (m2, o2) = fit_mixture_sa(&target, &[Family::Rayleigh], &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(o1.to_bits(), o2.to_bits());
    }

    #[test]
    fn sa_config_validation() {
        let target = EmpiricalPdf::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let bad = SaConfig {
            cooling_factor: 1.5,
            ..SaConfig::default()
        };
        assert!(fit_mixture_sa(&target, &[Family::Gaussian], &bad).is_err());
        assert!(fit_mixture_sa(&target, &[], &SaConfig::default()).is_err());
    }
}
