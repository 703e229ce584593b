//! Emission-density families for per-state fast fading, plus the
//! Bhattacharyya separability measure between two densities.
//!
//! Four families cover the usual propagation conditions: Rice for direct
//! line of sight, lognormal for shadowing, Rayleigh for blockage, and
//! Gaussian for synthetic benchmarks. Densities are evaluated directly in
//! the log domain so they stay finite wherever the density is positive but
//! underflows the linear representation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT_2PI: f64 = 2.5066282746310002;

/// A per-state amplitude density with evaluate / log-evaluate / sample
/// capabilities. Immutable after construction; all operations are pure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EmissionDistribution {
    Gaussian { mu: f64, sigma: f64 },
    Rayleigh { sigma: f64 },
    Rice { nu: f64, sigma: f64 },
    Lognormal { mu_log: f64, sigma_log: f64 },
}

impl EmissionDistribution {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        let d = EmissionDistribution::Gaussian { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn rayleigh(sigma: f64) -> Result<Self> {
        let d = EmissionDistribution::Rayleigh { sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn rice(nu: f64, sigma: f64) -> Result<Self> {
        let d = EmissionDistribution::Rice { nu, sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal(mu_log: f64, sigma_log: f64) -> Result<Self> {
        let d = EmissionDistribution::Lognormal { mu_log, sigma_log };
        d.validate()?;
        Ok(d)
    }

    /// Check parameter domains. Deserialized values must be validated before
    /// use; the named constructors do this automatically.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EmissionDistribution::Gaussian { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            EmissionDistribution::Rayleigh { sigma } => sigma > 0.0 && sigma.is_finite(),
            EmissionDistribution::Rice { nu, sigma } => {
                nu >= 0.0 && nu.is_finite() && sigma > 0.0 && sigma.is_finite()
            }
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                mu_log.is_finite() && sigma_log > 0.0 && sigma_log.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Natural log of the density at `r`; `-inf` where the density is zero.
    ///
    /// Computed directly in the log domain (no exp -> ln round trip).
    pub fn log_pdf(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite amplitude {r}")));
        }
        Ok(self.log_pdf_raw(r))
    }

    /// Density at `r`; exactly 0 outside the support.
    pub fn pdf(&self, r: f64) -> Result<f64> {
        Ok(self.log_pdf(r)?.exp())
    }

    pub(crate) fn log_pdf_raw(&self, r: f64) -> f64 {
        match *self {
            EmissionDistribution::Gaussian { mu, sigma } => {
                let z = (r - mu) / sigma;
                -(sigma * SQRT_2PI).ln() - 0.5 * z * z
            }
            EmissionDistribution::Rayleigh { sigma } => {
                if r <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                r.ln() - 2.0 * sigma.ln() - (r * r) / (2.0 * sigma * sigma)
            }
            EmissionDistribution::Rice { nu, sigma } => {
                if r <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let s2 = sigma * sigma;
                r.ln() - 2.0 * sigma.ln() - (r * r + nu * nu) / (2.0 * s2) + ln_i0(r * nu / s2)
            }
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                if r <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (r.ln() - mu_log) / sigma_log;
                -r.ln() - (sigma_log * SQRT_2PI).ln() - 0.5 * z * z
            }
        }
    }

    /// Draw one amplitude. Deterministic under a fixed seeded RNG.
    ///
    /// Exact samplers, no rejection loops: Gaussian and lognormal via the
    /// standard normal transform, Rayleigh via inverse CDF, Rice as the
    /// envelope of a complex Gaussian offset by the line-of-sight component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EmissionDistribution::Gaussian { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
            EmissionDistribution::Rayleigh { sigma } => {
                let u: f64 = rng.random();
                sigma * (-2.0 * (1.0 - u).ln()).sqrt()
            }
            EmissionDistribution::Rice { nu, sigma } => {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                let a = nu + sigma * x;
                let b = sigma * y;
                (a * a + b * b).sqrt()
            }
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu_log + sigma_log * z).exp()
            }
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            EmissionDistribution::Gaussian { mu, .. } => mu,
            EmissionDistribution::Rayleigh { sigma } => sigma * (std::f64::consts::PI / 2.0).sqrt(),
            EmissionDistribution::Rice { nu, sigma } => rice_moments(nu, sigma).0,
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                (mu_log + 0.5 * sigma_log * sigma_log).exp()
            }
        }
    }

    /// Standard deviation of the distribution.
    pub fn std_dev(&self) -> f64 {
        match *self {
            EmissionDistribution::Gaussian { sigma, .. } => sigma,
            EmissionDistribution::Rayleigh { sigma } => sigma * (2.0 - std::f64::consts::PI / 2.0).sqrt(),
            EmissionDistribution::Rice { nu, sigma } => rice_moments(nu, sigma).1,
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                let s2 = sigma_log * sigma_log;
                (mu_log + 0.5 * s2).exp() * (s2.exp_m1()).sqrt()
            }
        }
    }

    /// Whether the support is bounded below by zero.
    pub fn positive_support(&self) -> bool {
        !matches!(self, EmissionDistribution::Gaussian { .. })
    }

    /// Upper bound beyond which the tail mass is negligible (well under
    /// 1e-6). Ten standard deviations above the mean suffices except for the
    /// lognormal, whose heavy tail needs a bound in log space.
    fn upper_extent(&self) -> f64 {
        match *self {
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                (self.mean() + 10.0 * self.std_dev()).max((mu_log + 12.0 * sigma_log).exp())
            }
            _ => self.mean() + 10.0 * self.std_dev(),
        }
    }

    /// Width of the sharpest feature a quadrature grid must resolve. The
    /// standard deviation works for the light-tailed families; the
    /// lognormal's peak near the mode is much narrower than its tail-driven
    /// standard deviation suggests.
    fn resolution_scale(&self) -> f64 {
        match *self {
            EmissionDistribution::Lognormal { mu_log, sigma_log } => {
                let mode_width = (mu_log - sigma_log * sigma_log).exp() * sigma_log;
                self.std_dev().min(mode_width)
            }
            _ => self.std_dev(),
        }
    }
}

/// Rice mean and standard deviation. For small `nu^2 / 2 sigma^2` the exact
/// Laguerre expression is evaluated in the log domain via I0 and I1; for
/// large ratios the series expansion around the line-of-sight amplitude is
/// used instead, where the exact formula loses digits to cancellation.
fn rice_moments(nu: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let x = nu * nu / (2.0 * s2);
    if x < 50.0 {
        let h = 0.5 * x;
        let i1_term = if x > 0.0 {
            x.ln() + ln_i1(h)
        } else {
            f64::NEG_INFINITY
        };
        let laguerre = -h + ln_add_exp((1.0 + x).ln() + ln_i0(h), i1_term);
        let mean = sigma * (std::f64::consts::PI / 2.0).sqrt() * laguerre.exp();
        let var = (nu * nu + 2.0 * s2 - mean * mean).max(0.0);
        (mean, var.sqrt())
    } else {
        let mean = nu + s2 / (2.0 * nu);
        let var = s2 - s2 * s2 / (2.0 * nu * nu);
        (mean, var.sqrt())
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn horner(t: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// ln I0(x), the log modified Bessel function of order zero, finite for all
/// finite x >= 0. Polynomial fits for small arguments, the exponential
/// asymptotic form for large ones, so the result never overflows.
pub(crate) fn ln_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 3.75 {
        let t = (x / 3.75) * (x / 3.75);
        horner(
            t,
            &[
                1.0, 3.5156229, 3.0899424, 1.2067492, 0.2659732, 0.0360768, 0.0045813,
            ],
        )
        .ln()
    } else {
        let t = 3.75 / x;
        let p = horner(
            t,
            &[
                0.39894228,
                0.01328592,
                0.00225319,
                -0.00157565,
                0.00916281,
                -0.02057706,
                0.02635537,
                -0.01647633,
                0.00392377,
            ],
        );
        x - 0.5 * x.ln() + p.ln()
    }
}

/// ln I1(x) for x >= 0; `-inf` at x = 0.
fn ln_i1(x: f64) -> f64 {
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    let x = x.abs();
    if x < 3.75 {
        let t = (x / 3.75) * (x / 3.75);
        let p = horner(
            t,
            &[
                0.5, 0.87890594, 0.51498869, 0.15084934, 0.02658733, 0.00301532, 0.00032411,
            ],
        );
        x.ln() + p.ln()
    } else {
        let t = 3.75 / x;
        let p = horner(
            t,
            &[
                0.39894228,
                -0.03988024,
                -0.00362018,
                0.00163801,
                -0.01031555,
                0.02282967,
                -0.02895312,
                0.01787654,
                -0.00420059,
            ],
        );
        x - 0.5 * x.ln() + p.ln()
    }
}

/// Bounds and resolution for composite-Simpson integration of densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationGrid {
    pub lo: f64,
    pub hi: f64,
    /// Number of Simpson intervals (rounded up to even).
    pub intervals: usize,
}

const MIN_INTERVALS: usize = 4096;
const MAX_INTERVALS: usize = 1 << 21;

impl IntegrationGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "integration bounds [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        if intervals < 2 {
            return Err(Error::InvalidInput("need at least 2 intervals".into()));
        }
        Ok(IntegrationGrid {
            lo,
            hi,
            intervals: intervals + intervals % 2,
        })
    }

    /// Grid covering all given densities: from the support boundary (or ten
    /// standard deviations below the mean for unbounded support) to ten
    /// standard deviations above the largest mean. Resolution scales with
    /// the narrowest density so sharp peaks stay resolved.
    pub fn covering(dists: &[EmissionDistribution]) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidInput("no distributions given".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut min_spread = f64::INFINITY;
        for d in dists {
            d.validate()?;
            let (m, s) = (d.mean(), d.std_dev());
            let d_lo = if d.positive_support() { 0.0 } else { m - 10.0 * s };
            lo = lo.min(d_lo);
            hi = hi.max(d.upper_extent());
            min_spread = min_spread.min(d.resolution_scale().max(1e-12));
        }
        let wanted = ((hi - lo) / (min_spread / 32.0)).ceil() as usize;
        let intervals = wanted.clamp(MIN_INTERVALS, MAX_INTERVALS);
        IntegrationGrid::new(lo, hi, intervals)
    }

    /// Composite Simpson rule over the grid.
    pub fn simpson<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.intervals;
        let h = (self.hi - self.lo) / n as f64;
        let mut acc = f(self.lo) + f(self.hi);
        let mut odd = 0.0;
        let mut even = 0.0;
        for k in 1..n {
            let x = self.lo + h * k as f64;
            if k % 2 == 1 {
                odd += f(x);
            } else {
                even += f(x);
            }
        }
        acc += 4.0 * odd + 2.0 * even;
        acc * h / 3.0
    }
}

/// Fraction of a density's mass captured by the grid.
pub(crate) fn captured_mass(dist: &EmissionDistribution, grid: &IntegrationGrid) -> f64 {
    grid.simpson(|r| dist.log_pdf_raw(r).exp())
}

/// Bhattacharyya distance `-ln integral sqrt(f1 f2)` between two densities,
/// numerically integrated on `grid`. Small negative quadrature noise is
/// clamped to zero.
///
/// Errors with [`Error::IntegrationCoverage`] when the grid captures less
/// than 0.999 of either density's mass, since the coefficient would then be
/// biased. Use [`IntegrationGrid::covering`] unless a custom range is needed.
pub fn bhattacharyya(
    f1: &EmissionDistribution,
    f2: &EmissionDistribution,
    grid: &IntegrationGrid,
) -> Result<f64> {
    f1.validate()?;
    f2.validate()?;
    for (k, d) in [f1, f2].into_iter().enumerate() {
        let mass = captured_mass(d, grid);
        if mass < 0.999 {
            return Err(Error::IntegrationCoverage(format!(
                "grid [{}, {}] captures only {mass:.6} of density {}",
                grid.lo,
                grid.hi,
                k + 1
            )));
        }
    }
    // Geometric mean via logs so far-apart densities do not underflow.
    let coef = grid.simpson(|r| (0.5 * (f1.log_pdf_raw(r) + f2.log_pdf_raw(r))).exp());
    Ok((-coef.ln()).max(0.0))
}

/// Weighted mixture density `sum_i w_i f_i(r)`.
pub fn mixture_pdf(weights: &[f64], dists: &[EmissionDistribution], r: f64) -> Result<f64> {
    check_weights(weights, dists.len())?;
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite amplitude {r}")));
    }
    Ok(weights
        .iter()
        .zip(dists)
        .map(|(w, d)| w * d.log_pdf_raw(r).exp())
        .sum())
}

pub(crate) fn check_weights(weights: &[f64], n_dists: usize) -> Result<()> {
    if weights.len() != n_dists {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} distributions",
            weights.len(),
            n_dists
        )));
    }
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidParameter("weights must lie in [0, 1]".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}
