//! Experiment harness behind the `lmsc-hmm` binary.
//!
//! Six run modes, selected by the `mode` field of a versioned JSON config
//! (`"schema": 1`) and mirrored by the binary's subcommands:
//!
//! - `simulate` — draw a state path and observations from a configured
//!   chain, optionally as a position-stamped trace.
//! - `fit-bw` — Baum-Welch re-estimation on an observation file with fixed
//!   emission densities.
//! - `baseline` — threshold classification with configurable cut points and
//!   filter spans.
//! - `sweep` — the synthetic two-state benchmark: for each configured mean
//!   spacing, simulate, run Baum-Welch plus the threshold methods, and
//!   tabulate estimates against the Bhattacharyya distance.
//! - `curve-fit` — simulated-annealing mixture fit of an amplitude
//!   histogram.
//! - `pipeline` — the full measurement workflow: ingest (or synthesize) a
//!   trace, down-sample to 1 m, curve-fit the mixture, run Baum-Welch with
//!   the fitted densities, and report state probabilities and mean durations
//!   next to the threshold baselines.
//!
//! A master seed expands deterministically into per-task seeds, so results
//! are bit-reproducible for a given config regardless of worker count.
//! Every output artifact carries a hash of the config that produced it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    classify, estimate_from_labels, labeling_error_share, optimal_threshold,
    thresholds_from_mixture, ThresholdClassifier,
};
use crate::distributions::{bhattacharyya, EmissionDistribution, IntegrationGrid};
use crate::fitting::{empirical_pdf, fit_mixture_sa, BinSpec, Family, MixtureModel, SaConfig};
use crate::hmm::{decode, e_step, fit, FitReport, HmmModel};
use crate::markov::{
    emit_observations, merge_short_runs, sample_path, simulate, MarkovChain, StatePath,
};
use crate::preprocess::{
    downsample_by_distance, load_observations, load_trace, save_observations, save_trace,
    MeasurementTrace, ObservationSequence,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

pub const CONFIG_SCHEMA: u32 = 1;

/// Top-level experiment configuration, deserialized from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub task: TaskConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TaskConfig {
    Simulate(SimulateConfig),
    FitBw(FitBwConfig),
    Baseline(BaselineConfig),
    Sweep(SweepConfig),
    CurveFit(CurveFitConfig),
    Pipeline(PipelineConfig),
}

impl TaskConfig {
    pub fn mode_name(&self) -> &'static str {
        match self {
            TaskConfig::Simulate(_) => "simulate",
            TaskConfig::FitBw(_) => "fit-bw",
            TaskConfig::Baseline(_) => "baseline",
            TaskConfig::Sweep(_) => "sweep",
            TaskConfig::CurveFit(_) => "curve-fit",
            TaskConfig::Pipeline(_) => "pipeline",
        }
    }
}

/// Baum-Welch stopping rule: absolute log-likelihood improvement below
/// `tol`, capped at `max_iters` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwSettings {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for BwSettings {
    fn default() -> Self {
        BwSettings {
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }
}

fn default_max_iters() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-6
}

/// Annealing settings as they appear in config files. The SA seed is not
/// configured here; the harness derives it from the master seed (one per
/// restart).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SaSettings {
    #[serde(default)]
    pub initial_temperature: Option<f64>,
    #[serde(default)]
    pub cooling_factor: Option<f64>,
    #[serde(default)]
    pub steps_per_temperature: Option<usize>,
    #[serde(default)]
    pub min_temperature: Option<f64>,
    #[serde(default)]
    pub proposal_scales: Option<Vec<f64>>,
}

impl SaSettings {
    fn to_sa_config(&self, seed: u64) -> SaConfig {
        let defaults = SaConfig::default();
        SaConfig {
            initial_temperature: self.initial_temperature,
            cooling_factor: self.cooling_factor.unwrap_or(defaults.cooling_factor),
            steps_per_temperature: self
                .steps_per_temperature
                .unwrap_or(defaults.steps_per_temperature),
            min_temperature: self.min_temperature,
            proposal_scales: self.proposal_scales.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub chain: MarkovChain,
    pub emissions: Vec<EmissionDistribution>,
    pub n: usize,
    /// When set, emit a position-stamped trace with this step instead of a
    /// plain observation file.
    #[serde(default)]
    pub trace_step_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBwConfig {
    pub observations: PathBuf,
    pub emissions: Vec<EmissionDistribution>,
    /// Initial chain; uniform transition rows and uniform initial
    /// probabilities when omitted.
    #[serde(default)]
    pub init_chain: Option<MarkovChain>,
    #[serde(default)]
    pub bw: BwSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub observations: PathBuf,
    pub thresholds: Vec<f64>,
    #[serde(default = "default_baseline_spans")]
    pub filter_spans: Vec<usize>,
    /// Optional ground-truth state file (1-based labels) for error scoring.
    #[serde(default)]
    pub truth_states: Option<PathBuf>,
}

fn default_baseline_spans() -> Vec<usize> {
    vec![1, 10, 20]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_mu1_grid")]
    pub mu1_grid: Vec<f64>,
    #[serde(default = "default_mu2")]
    pub mu2: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_sweep_chain")]
    pub chain: MarkovChain,
    #[serde(default = "default_sweep_n")]
    pub n: usize,
    #[serde(default)]
    pub bw: BwSettings,
    /// Baum-Welch starting chain; uniform when omitted.
    #[serde(default)]
    pub bw_init: Option<MarkovChain>,
    #[serde(default = "default_sweep_spans")]
    pub filter_spans: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mu1_grid: default_mu1_grid(),
            mu2: default_mu2(),
            sigma: default_sigma(),
            chain: default_sweep_chain(),
            n: default_sweep_n(),
            bw: BwSettings::default(),
            bw_init: None,
            filter_spans: default_sweep_spans(),
        }
    }
}

fn default_mu1_grid() -> Vec<f64> {
    vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
}

fn default_mu2() -> f64 {
    1.0
}

fn default_sigma() -> f64 {
    0.2
}

fn default_sweep_chain() -> MarkovChain {
    MarkovChain::new(
        vec![vec![0.950, 0.050], vec![0.025, 0.975]],
        vec![1.0 / 3.0, 2.0 / 3.0],
    )
    .expect("benchmark chain is valid")
}

fn default_sweep_n() -> usize {
    100_000
}

fn default_sweep_spans() -> Vec<usize> {
    vec![10, 20]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFitConfig {
    pub observations: PathBuf,
    pub families: Vec<Family>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub sa: SaSettings,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_bins() -> usize {
    200
}

fn default_restarts() -> usize {
    1
}

/// Generator for a synthetic measurement trace: a chain sampled at a fine
/// spatial step with per-state emissions. Stands in for real campaign data,
/// which is not bundled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceConfig {
    /// Chain at the fine step (not at the down-sampled spacing).
    pub chain: MarkovChain,
    pub emissions: Vec<EmissionDistribution>,
    pub n: usize,
    pub step_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Measurement trace CSV; mutually exclusive with `synthetic`.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticTraceConfig>,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    pub families: Vec<Family>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub sa: SaSettings,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub bw: BwSettings,
    #[serde(default)]
    pub bw_init: Option<MarkovChain>,
    #[serde(default = "default_pipeline_spans")]
    pub filter_spans: Vec<usize>,
    /// Merge state visits shorter than this many samples before estimating
    /// durations (reporting convention; 1 = off).
    #[serde(default = "default_min_run")]
    pub min_run: usize,
    /// Emit a fit-quality warning when the curve-fit objective exceeds this.
    #[serde(default)]
    pub fit_objective_ceiling: Option<f64>,
}

fn default_spacing() -> f64 {
    1.0
}

fn default_pipeline_spans() -> Vec<usize> {
    vec![1, 10]
}

fn default_min_run() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema {}, expected {CONFIG_SCHEMA}",
                self.schema
            )));
        }
        match &self.task {
            TaskConfig::Simulate(c) => {
                c.chain.validate()?;
                for e in &c.emissions {
                    e.validate()?;
                }
                if c.emissions.len() != c.chain.m() {
                    return Err(Error::Config(format!(
                        "{} emissions for {} states",
                        c.emissions.len(),
                        c.chain.m()
                    )));
                }
                if c.n == 0 {
                    return Err(Error::Config("n must be >= 1".into()));
                }
                if let Some(step) = c.trace_step_m {
                    if !(step > 0.0) {
                        return Err(Error::Config(format!("trace_step_m {step} must be positive")));
                    }
                }
            }
            TaskConfig::FitBw(c) => {
                for e in &c.emissions {
                    e.validate()?;
                }
                if let Some(chain) = &c.init_chain {
                    chain.validate()?;
                    if chain.m() != c.emissions.len() {
                        return Err(Error::Config("init_chain size mismatch".into()));
                    }
                }
                validate_bw(&c.bw)?;
            }
            TaskConfig::Baseline(c) => {
                ThresholdClassifier::new(c.thresholds.clone(), 1)?;
                if c.filter_spans.is_empty() || c.filter_spans.contains(&0) {
                    return Err(Error::Config("filter_spans must be non-empty and >= 1".into()));
                }
            }
            TaskConfig::Sweep(c) => {
                c.chain.validate()?;
                if c.chain.m() != 2 {
                    return Err(Error::Config("sweep requires a 2-state chain".into()));
                }
                if !(c.sigma > 0.0) {
                    return Err(Error::Config(format!("sigma {} must be positive", c.sigma)));
                }
                for &mu1 in &c.mu1_grid {
                    if mu1 >= c.mu2 {
                        return Err(Error::Config(format!(
                            "mu1 {mu1} must be below mu2 {}",
                            c.mu2
                        )));
                    }
                }
                if c.n < 2 {
                    return Err(Error::Config("n must be >= 2".into()));
                }
                if let Some(chain) = &c.bw_init {
                    chain.validate()?;
                    if chain.m() != 2 {
                        return Err(Error::Config("bw_init must have 2 states".into()));
                    }
                }
                validate_bw(&c.bw)?;
                if c.filter_spans.contains(&0) {
                    return Err(Error::Config("filter spans must be >= 1".into()));
                }
            }
            TaskConfig::CurveFit(c) => {
                if c.families.is_empty() {
                    return Err(Error::Config("at least one family required".into()));
                }
                if c.bins == 0 || c.restarts == 0 {
                    return Err(Error::Config("bins and restarts must be >= 1".into()));
                }
            }
            TaskConfig::Pipeline(c) => {
                match (&c.trace, &c.synthetic) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give either `trace` or `synthetic`, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Config("one of `trace` or `synthetic` is required".into()))
                    }
                    _ => {}
                }
                if let Some(s) = &c.synthetic {
                    s.chain.validate()?;
                    if s.emissions.len() != s.chain.m() {
                        return Err(Error::Config("synthetic emissions size mismatch".into()));
                    }
                    for e in &s.emissions {
                        e.validate()?;
                    }
                    if s.n == 0 || !(s.step_m > 0.0) {
                        return Err(Error::Config("synthetic n and step_m must be positive".into()));
                    }
                }
                if c.families.len() < 2 {
                    return Err(Error::Config("pipeline needs at least 2 families".into()));
                }
                if !(c.spacing_m > 0.0) {
                    return Err(Error::Config(format!(
                        "spacing_m {} must be positive",
                        c.spacing_m
                    )));
                }
                if c.bins == 0 || c.restarts == 0 {
                    return Err(Error::Config("bins and restarts must be >= 1".into()));
                }
                if c.min_run == 0 {
                    return Err(Error::Config("min_run must be >= 1".into()));
                }
                if c.filter_spans.is_empty() || c.filter_spans.contains(&0) {
                    return Err(Error::Config("filter_spans must be non-empty and >= 1".into()));
                }
                if let Some(chain) = &c.bw_init {
                    chain.validate()?;
                    if chain.m() != c.families.len() {
                        return Err(Error::Config("bw_init size must match families".into()));
                    }
                }
                validate_bw(&c.bw)?;
            }
        }
        Ok(())
    }
}

fn validate_bw(bw: &BwSettings) -> Result<()> {
    if bw.max_iters == 0 {
        return Err(Error::Config("bw.max_iters must be >= 1".into()));
    }
    if !(bw.tol > 0.0) {
        return Err(Error::Config(format!("bw.tol {} must be positive", bw.tol)));
    }
    Ok(())
}

/// Load and validate a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Hex-encoded SHA-256 of the canonical config JSON, truncated to 16 chars.
/// Written into every output artifact so results are traceable.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic per-task seed expansion (SplitMix64 over master ^ index).
/// Concurrent execution order cannot change any task's seed.
pub fn task_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Provenance attached to every result artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: u32,
    pub mode: String,
    pub seed: u64,
    pub config_hash: String,
    pub runtime_seconds: f64,
}

fn run_meta(config: &ExperimentConfig, started: Instant) -> RunMeta {
    RunMeta {
        schema: CONFIG_SCHEMA,
        mode: config.task.mode_name().to_string(),
        seed: config.seed,
        config_hash: config_hash(config),
        runtime_seconds: started.elapsed().as_secs_f64(),
    }
}

/// One benchmark point: a method's estimates at one mean spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub mu1: f64,
    pub bhattacharyya: f64,
    pub p12_hat: f64,
    pub p1_hat: f64,
    pub error_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub meta: RunMeta,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub meta: RunMeta,
    pub n: usize,
    pub state_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBwResult {
    pub meta: RunMeta,
    pub report: FitReport,
    pub stationary: Vec<f64>,
    pub mean_durations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMethodResult {
    pub method: String,
    pub transition: Vec<Vec<f64>>,
    pub state_probabilities: Vec<f64>,
    pub unvisited_states: Vec<usize>,
    pub error_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub meta: RunMeta,
    pub methods: Vec<BaselineMethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFitResult {
    pub meta: RunMeta,
    pub mixture: MixtureModel,
    pub objective: f64,
    pub restarts: usize,
    pub bins: usize,
}

/// Estimates from one state-identification method in a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMethodRow {
    pub method: String,
    pub transition: Vec<Vec<f64>>,
    /// Stationary probabilities of the estimated chain.
    pub state_probabilities: Vec<f64>,
    /// Mean state durations in samples; multiply by the spacing for meters.
    pub mean_durations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub meta: RunMeta,
    pub n_raw: usize,
    pub n_downsampled: usize,
    pub spacing_m: f64,
    pub mixture: MixtureModel,
    pub sa_objective: f64,
    pub fit_warning: Option<String>,
    /// Bhattacharyya distance between amplitude-adjacent fitted components.
    pub adjacent_bhattacharyya: Vec<f64>,
    pub bw_iterations: usize,
    pub bw_converged: bool,
    pub methods: Vec<PipelineMethodRow>,
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

fn expect_task<'a, T>(
    config: &'a ExperimentConfig,
    extract: impl Fn(&'a TaskConfig) -> Option<&'a T>,
    wanted: &str,
) -> Result<&'a T> {
    config.validate()?;
    extract(&config.task).ok_or_else(|| {
        Error::Config(format!(
            "config mode is `{}`, expected `{wanted}`",
            config.task.mode_name()
        ))
    })
}

/// Simulated states and observations, written as CSV by [`execute`].
pub struct SimulatedData {
    pub states: StatePath,
    pub observations: ObservationSequence,
    pub trace: Option<MeasurementTrace>,
    pub result: SimulateResult,
}

pub fn run_simulate(config: &ExperimentConfig) -> Result<SimulatedData> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::Simulate(c) => Some(c),
            _ => None,
        },
        "simulate",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(config.seed, 0));
    let (states, observations) = simulate(&c.chain, &c.emissions, c.n, &mut rng)?;
    let trace = match c.trace_step_m {
        Some(step) => Some(MeasurementTrace::new(
            (0..c.n).map(|k| k as f64 * step).collect(),
            observations.samples().to_vec(),
        )?),
        None => None,
    };
    let mut state_counts = vec![0usize; c.chain.m()];
    for &s in states.states() {
        state_counts[s] += 1;
    }
    Ok(SimulatedData {
        states,
        observations,
        trace,
        result: SimulateResult {
            meta: run_meta(config, started),
            n: c.n,
            state_counts,
        },
    })
}

pub struct FitBwOutput {
    pub result: FitBwResult,
    pub decoded: StatePath,
}

pub fn run_fit_bw(config: &ExperimentConfig) -> Result<FitBwOutput> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::FitBw(c) => Some(c),
            _ => None,
        },
        "fit-bw",
    )?;
    let obs = load_observations(&c.observations)?;
    let init = match &c.init_chain {
        Some(chain) => chain.clone(),
        None => uniform_chain(c.emissions.len())?,
    };
    let model0 = HmmModel::new(init, c.emissions.clone())?;
    let report = fit(&model0, &obs, c.bw.max_iters, c.bw.tol)?;
    let stationary = report.model.chain().stationary_distribution()?;
    let mean_durations = report.model.chain().mean_state_durations()?;
    let tables = e_step(&report.model, &obs)?;
    let decoded = decode(&tables.gamma);
    Ok(FitBwOutput {
        result: FitBwResult {
            meta: run_meta(config, started),
            report,
            stationary,
            mean_durations,
        },
        decoded,
    })
}

fn uniform_chain(m: usize) -> Result<MarkovChain> {
    MarkovChain::new(vec![vec![1.0 / m as f64; m]; m], vec![1.0 / m as f64; m])
}

pub struct BaselineOutput {
    pub result: BaselineResult,
    /// One label path per filter span, in config order.
    pub labels: Vec<(String, StatePath)>,
}

pub fn run_baseline(config: &ExperimentConfig) -> Result<BaselineOutput> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::Baseline(c) => Some(c),
            _ => None,
        },
        "baseline",
    )?;
    let obs = load_observations(&c.observations)?;
    let truth = match &c.truth_states {
        Some(path) => Some(load_states(path)?),
        None => None,
    };
    let m = c.thresholds.len() + 1;
    let mut methods = Vec::new();
    let mut labels = Vec::new();
    for &span in &c.filter_spans {
        let classifier = ThresholdClassifier::new(c.thresholds.clone(), span)?;
        let path = classify(&classifier, &obs)?;
        let est = estimate_from_labels(&path, m)?;
        let error_share = match &truth {
            Some(t) => Some(labeling_error_share(t, &path)?),
            None => None,
        };
        methods.push(BaselineMethodResult {
            method: format!("T{span}"),
            transition: est.chain.transition().to_vec(),
            state_probabilities: est.chain.initial().to_vec(),
            unvisited_states: est.unvisited,
            error_share,
        });
        labels.push((format!("T{span}"), path));
    }
    Ok(BaselineOutput {
        result: BaselineResult {
            meta: run_meta(config, started),
            methods,
        },
        labels,
    })
}

/// One sweep grid point evaluated with every method. All points share one
/// state path; each draws its own observations from it, so the estimated
/// state probabilities vary across spacings only through the methods, not
/// through path resampling.
fn sweep_point(c: &SweepConfig, truth_path: &StatePath, mu1: f64, seed: u64) -> Result<Vec<SweepRow>> {
    let f1 = EmissionDistribution::gaussian(mu1, c.sigma)?;
    let f2 = EmissionDistribution::gaussian(c.mu2, c.sigma)?;
    let emissions = vec![f1, f2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = emit_observations(truth_path, &emissions, &mut rng)?;

    let grid = IntegrationGrid::covering(&emissions)?;
    let b = bhattacharyya(&f1, &f2, &grid)?;

    let mut rows = Vec::new();

    // Baum-Welch with the true densities held fixed.
    let init = match &c.bw_init {
        Some(chain) => chain.clone(),
        None => uniform_chain(2)?,
    };
    let model0 = HmmModel::new(init, emissions.clone())?;
    let report = fit(&model0, &obs, c.bw.max_iters, c.bw.tol)?;
    let tables = e_step(&report.model, &obs)?;
    let decoded = decode(&tables.gamma);
    let stationary = report.model.chain().stationary_distribution()?;
    rows.push(SweepRow {
        method: "BW".into(),
        mu1,
        bhattacharyya: b,
        p12_hat: report.model.chain().transition_prob(0, 1),
        p1_hat: stationary[0],
        error_share: labeling_error_share(truth_path, &decoded)?,
    });

    // Threshold methods assume the true state probabilities are known.
    let pi = c.chain.stationary_distribution()?;
    let tau = optimal_threshold(mu1, c.mu2, c.sigma, pi[0], pi[1])?;
    let mut spans = vec![1usize];
    spans.extend(&c.filter_spans);
    for span in spans {
        let classifier = ThresholdClassifier::new(vec![tau], span)?;
        let path = classify(&classifier, &obs)?;
        let est = estimate_from_labels(&path, 2)?;
        rows.push(SweepRow {
            method: format!("T{span}"),
            mu1,
            bhattacharyya: b,
            p12_hat: est.chain.transition_prob(0, 1),
            p1_hat: est.chain.initial()[0],
            error_share: labeling_error_share(truth_path, &path)?,
        });
    }
    Ok(rows)
}

/// Derivation index of the shared sweep state path, distinct from the
/// per-grid-point observation seeds.
const SWEEP_PATH_TASK: u64 = 0xA77;

/// Run the synthetic benchmark sweep, one job per grid point, up to
/// `workers` in parallel. Rows come back sorted by (mu1, method) so the
/// output is independent of scheduling.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::Sweep(c) => Some(c),
            _ => None,
        },
        "sweep",
    )?;
    let master = config.seed;
    let mut path_rng = ChaCha8Rng::seed_from_u64(task_seed(master, SWEEP_PATH_TASK));
    let truth_path = sample_path(&c.chain, c.n, &mut path_rng)?;
    let jobs: Vec<(usize, f64)> = c.mu1_grid.iter().copied().enumerate().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(idx, mu1)| sweep_point(c, &truth_path, mu1, task_seed(master, idx as u64)))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| a.mu1.total_cmp(&b.mu1).then(a.method.cmp(&b.method)));
    Ok(SweepResult {
        meta: run_meta(config, started),
        rows,
    })
}

pub fn run_curve_fit(config: &ExperimentConfig) -> Result<CurveFitResult> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::CurveFit(c) => Some(c),
            _ => None,
        },
        "curve-fit",
    )?;
    let obs = load_observations(&c.observations)?;
    let target = empirical_pdf(&obs, BinSpec::Count(c.bins))?;
    let (mixture, objective) =
        best_of_restarts(&target, &c.families, &c.sa, c.restarts, config.seed)?;
    Ok(CurveFitResult {
        meta: run_meta(config, started),
        mixture,
        objective,
        restarts: c.restarts,
        bins: c.bins,
    })
}

/// Independent SA restarts with derived seeds; the best objective wins.
fn best_of_restarts(
    target: &crate::fitting::EmpiricalPdf,
    families: &[Family],
    sa: &SaSettings,
    restarts: usize,
    master_seed: u64,
) -> Result<(MixtureModel, f64)> {
    let mut best: Option<(MixtureModel, f64)> = None;
    for k in 0..restarts {
        let cfg = sa.to_sa_config(task_seed(master_seed, 0x5a00 + k as u64));
        let (mix, obj) = fit_mixture_sa(target, families, &cfg)?;
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((mix, obj));
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Generate a synthetic measurement trace from a fine-step chain.
pub fn generate_synthetic_trace(
    cfg: &SyntheticTraceConfig,
    seed: u64,
) -> Result<(MeasurementTrace, StatePath)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (states, obs) = simulate(&cfg.chain, &cfg.emissions, cfg.n, &mut rng)?;
    let positions = (0..cfg.n).map(|k| k as f64 * cfg.step_m).collect();
    let trace = MeasurementTrace::new(positions, obs.samples().to_vec())?;
    Ok((trace, states))
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineResult> {
    let started = Instant::now();
    let c = expect_task(
        config,
        |t| match t {
            TaskConfig::Pipeline(c) => Some(c),
            _ => None,
        },
        "pipeline",
    )?;

    // Ingest.
    let trace = match (&c.trace, &c.synthetic) {
        (Some(path), None) => load_trace(path)?,
        (None, Some(synth)) => generate_synthetic_trace(synth, task_seed(config.seed, 0))?.0,
        _ => unreachable!("validated"),
    };
    let n_raw = trace.len();
    let obs = downsample_by_distance(&trace, c.spacing_m)?;
    let n_downsampled = obs.len();

    // Curve fit on the overall amplitude density.
    let target = empirical_pdf(&obs, BinSpec::Count(c.bins))?;
    let (mixture, sa_objective) =
        best_of_restarts(&target, &c.families, &c.sa, c.restarts, config.seed)?;
    let fit_warning = c.fit_objective_ceiling.and_then(|ceiling| {
        (sa_objective > ceiling).then(|| {
            format!("curve-fit objective {sa_objective:.6e} exceeds the configured ceiling {ceiling:.6e}")
        })
    });

    // Separability of the fitted components, adjacent by amplitude.
    let cuts = thresholds_from_mixture(&mixture)?;
    let mut adjacent_bhattacharyya = Vec::new();
    for pair in cuts.state_order.windows(2) {
        let (a, b) = (mixture.components()[pair[0]], mixture.components()[pair[1]]);
        let grid = IntegrationGrid::covering(&[a, b])?;
        adjacent_bhattacharyya.push(bhattacharyya(&a, &b, &grid)?);
    }

    // Baum-Welch with the fitted densities fixed and the fitted weights as
    // the initial state probabilities.
    let m = c.families.len();
    let init_chain = match &c.bw_init {
        Some(chain) => chain.clone(),
        None => MarkovChain::new(vec![vec![1.0 / m as f64; m]; m], mixture.state_probabilities())?,
    };
    let model0 = HmmModel::new(init_chain, mixture.components().to_vec())?;
    let report = fit(&model0, &obs, c.bw.max_iters, c.bw.tol)?;
    let tables = e_step(&report.model, &obs)?;
    let bw_path = merge_short_runs(&decode(&tables.gamma), c.min_run);

    let mut methods = Vec::new();
    let bw_chain = if c.min_run > 1 {
        // Durations from the merged decoded path, consistent with the
        // reporting convention.
        estimate_from_labels(&bw_path, m)?.chain
    } else {
        report.model.chain().clone()
    };
    methods.push(PipelineMethodRow {
        method: "BW".into(),
        transition: bw_chain.transition().to_vec(),
        state_probabilities: bw_chain.stationary_distribution()?,
        mean_durations: bw_chain.mean_state_durations()?,
    });

    // Threshold baselines on the same observations, cuts from the fitted
    // mixture quantiles, labels mapped back to component order.
    for &span in &c.filter_spans {
        let classifier = ThresholdClassifier::new(cuts.thresholds.clone(), span)?;
        let ascending = classify(&classifier, &obs)?;
        let labeled = merge_short_runs(&cuts.relabel(&ascending), c.min_run);
        let est = estimate_from_labels(&labeled, m)?;
        methods.push(PipelineMethodRow {
            method: format!("T{span}"),
            transition: est.chain.transition().to_vec(),
            state_probabilities: est.chain.initial().to_vec(),
            mean_durations: est.chain.mean_state_durations()?,
        });
    }

    Ok(PipelineResult {
        meta: run_meta(config, started),
        n_raw,
        n_downsampled,
        spacing_m: c.spacing_m,
        mixture,
        sa_objective,
        fit_warning,
        adjacent_bhattacharyya,
        bw_iterations: report.iterations,
        bw_converged: report.converged,
        methods,
    })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}`, expected csv or json")),
        }
    }
}

pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub format: OutputFormat,
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, &text)
}

fn states_csv(path: &StatePath) -> String {
    let mut out = String::from("state\n");
    for &s in path.states() {
        out.push_str(&format!("{}\n", s + 1));
    }
    out
}

fn load_states(path: &Path) -> Result<StatePath> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            msg: e.to_string(),
        })?;
    let mut states = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row,
            msg: e.to_string(),
        })?;
        let raw = record.get(0).unwrap_or("");
        let label: usize = raw.trim().parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            row,
            msg: format!("`{raw}` is not a state label"),
        })?;
        if label == 0 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row,
                msg: "state labels are 1-based".into(),
            });
        }
        states.push(label - 1);
    }
    if states.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no states",
            path.display()
        )));
    }
    Ok(StatePath(states))
}

/// Plot-ready sweep CSV: one row per (mu1, method) point; the trailing
/// column ties every row to the config that produced it.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("method,mu1,bhattacharyya,p12_hat,p1_hat,error_share,config_hash\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.method, r.mu1, r.bhattacharyya, r.p12_hat, r.p1_hat, r.error_share, result.meta.config_hash
        ));
    }
    out
}

/// Human-readable sweep table: one block per quantity, methods as columns,
/// one row per spacing (widest separation first).
pub fn sweep_table(result: &SweepResult) -> String {
    let mut methods: Vec<&str> = result.rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let mut mu1s: Vec<f64> = result.rows.iter().map(|r| r.mu1).collect();
    mu1s.sort_by(f64::total_cmp);
    mu1s.dedup();

    let lookup = |mu1: f64, method: &str| -> Option<&SweepRow> {
        result
            .rows
            .iter()
            .find(|r| r.mu1 == mu1 && r.method == method)
    };

    let mut out = String::new();
    out.push_str(&format!(
        "config {}  seed {}\n\n",
        result.meta.config_hash, result.meta.seed
    ));
    for (title, field) in [
        ("estimated p1", 0usize),
        ("estimated p12", 1),
        ("label error share", 2),
    ] {
        out.push_str(&format!("{title}\n"));
        out.push_str(&format!("{:>6} {:>6}", "B", "mu1"));
        for m in &methods {
            out.push_str(&format!(" {m:>8}"));
        }
        out.push('\n');
        for &mu1 in &mu1s {
            let Some(first) = methods.first().and_then(|m| lookup(mu1, m)) else {
                continue;
            };
            out.push_str(&format!("{:>6.2} {:>6.2}", first.bhattacharyya, mu1));
            for m in &methods {
                let cell = lookup(mu1, m)
                    .map(|r| match field {
                        0 => r.p1_hat,
                        1 => r.p12_hat,
                        _ => r.error_share,
                    })
                    .unwrap_or(f64::NAN);
                out.push_str(&format!(" {cell:>8.3}"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Human-readable pipeline table: state probabilities and mean durations per
/// method, mirroring the usual three-state reporting layout.
pub fn pipeline_table(result: &PipelineResult) -> String {
    let m = result
        .methods
        .first()
        .map(|r| r.state_probabilities.len())
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str(&format!(
        "config {}  seed {}\n",
        result.meta.config_hash, result.meta.seed
    ));
    out.push_str(&format!(
        "samples: {} raw -> {} at {} m spacing\n",
        result.n_raw, result.n_downsampled, result.spacing_m
    ));
    out.push_str(&format!(
        "curve-fit objective: {:.6e}{}\n",
        result.sa_objective,
        result
            .fit_warning
            .as_deref()
            .map(|w| format!("  WARNING: {w}"))
            .unwrap_or_default()
    ));
    out.push_str("adjacent component Bhattacharyya:");
    for b in &result.adjacent_bhattacharyya {
        out.push_str(&format!(" {b:.2}"));
    }
    out.push_str("\n\n");
    out.push_str(&format!("{:>12} {:>8}", "", "method"));
    for i in 1..=m {
        out.push_str(&format!(" {:>9}", format!("state {i}")));
    }
    out.push('\n');
    for (label, field) in [("p_i", 0usize), ("D_i (m)", 1)] {
        for row in &result.methods {
            out.push_str(&format!("{label:>12} {:>8}", row.method));
            for i in 0..m {
                let v = match field {
                    0 => row.state_probabilities[i],
                    _ => row.mean_durations[i] * result.spacing_m,
                };
                out.push_str(&format!(" {v:>9.3}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Write all artifacts for a finished run into `out_dir`; returns the paths.
pub fn execute(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let dir = &opts.out_dir;
    let mut written = Vec::new();

    match &config.task {
        TaskConfig::Simulate(c) => {
            let data = run_simulate(config)?;
            if c.trace_step_m.is_some() {
                let path = dir.join("trace.csv");
                save_trace(data.trace.as_ref().expect("trace requested"), &path)?;
                written.push(path);
            } else {
                let path = dir.join("observations.csv");
                save_observations(&data.observations, &path)?;
                written.push(path);
            }
            let states = dir.join("states.csv");
            write_file(&states, &states_csv(&data.states))?;
            written.push(states);
            let report = dir.join("simulate_report.json");
            write_json(&report, &data.result)?;
            written.push(report);
        }
        TaskConfig::FitBw(_) => {
            let out = run_fit_bw(config)?;
            let decoded = dir.join("decoded_states.csv");
            write_file(&decoded, &states_csv(&out.decoded))?;
            written.push(decoded);
            let report = dir.join("fit_report.json");
            write_json(&report, &out.result)?;
            written.push(report);
        }
        TaskConfig::Baseline(_) => {
            let out = run_baseline(config)?;
            // One integer label column per method.
            let mut csv = out
                .labels
                .iter()
                .map(|(name, _)| name.to_lowercase())
                .collect::<Vec<_>>()
                .join(",");
            csv.push('\n');
            if let Some((_, first)) = out.labels.first() {
                for t in 0..first.len() {
                    let row: Vec<String> = out
                        .labels
                        .iter()
                        .map(|(_, path)| (path.states()[t] + 1).to_string())
                        .collect();
                    csv.push_str(&row.join(","));
                    csv.push('\n');
                }
            }
            let labels = dir.join("labels.csv");
            write_file(&labels, &csv)?;
            written.push(labels);
            let report = dir.join("baseline_report.json");
            write_json(&report, &out.result)?;
            written.push(report);
        }
        TaskConfig::Sweep(_) => {
            let result = run_sweep(config, opts.workers)?;
            if opts.format == OutputFormat::Csv {
                let csv = dir.join("sweep.csv");
                write_file(&csv, &sweep_csv(&result))?;
                written.push(csv);
            }
            let table = dir.join("sweep_table.txt");
            write_file(&table, &sweep_table(&result))?;
            written.push(table);
            let report = dir.join("sweep_report.json");
            write_json(&report, &result)?;
            written.push(report);
        }
        TaskConfig::CurveFit(_) => {
            let result = run_curve_fit(config)?;
            let report = dir.join("mixture.json");
            write_json(&report, &result)?;
            written.push(report);
        }
        TaskConfig::Pipeline(_) => {
            let result = run_pipeline(config)?;
            let table = dir.join("pipeline_table.txt");
            write_file(&table, &pipeline_table(&result))?;
            written.push(table);
            let report = dir.join("pipeline_report.json");
            write_json(&report, &result)?;
            written.push(report);
        }
    }
    Ok(written)
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical failures, 4 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::InvalidParameter(_)
        | Error::InvalidInput(_)
        | Error::LengthMismatch(_) => 2,
        Error::Io { .. } => 4,
        _ => 3,
    }
}

/// A ready-made synthetic three-state pipeline config: a fine-step chain
/// with line-of-sight (Rice), shadowing (lognormal) and blockage (Rayleigh)
/// states, intended to be down-sampled to 1 m. Stands in for measurement
/// campaigns whose raw data is not publicly available.
///
/// The annealing temperature is pinned near the curve-fit objective scale of
/// this scenario (densities of order 1, MSE of order 1e-3) instead of the
/// probe-based automatic choice; the automatic temperature runs hot enough
/// for the low-weight shadowing component to wander off before cooling.
/// Two restarts with derived seeds make the fit robust, and the objective
/// ceiling flags a run that still settles badly.
pub fn synthetic_pipeline_demo_config(seed: u64, n_fine: usize) -> ExperimentConfig {
    let fine_chain = MarkovChain::new(
        vec![
            vec![0.9910, 0.0070, 0.0020],
            vec![0.0300, 0.9512, 0.0188],
            vec![0.0016, 0.0058, 0.9926],
        ],
        vec![0.4628, 0.1164, 0.4208],
    )
    .expect("demo chain is valid");
    let emissions = vec![
        EmissionDistribution::Rice { nu: 1.1, sigma: 0.20 },
        EmissionDistribution::Lognormal { mu_log: -0.70, sigma_log: 0.30 },
        EmissionDistribution::Rayleigh { sigma: 0.12 },
    ];
    ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed,
        task: TaskConfig::Pipeline(PipelineConfig {
            trace: None,
            synthetic: Some(SyntheticTraceConfig {
                chain: fine_chain,
                emissions,
                n: n_fine,
                step_m: 0.2,
            }),
            spacing_m: 1.0,
            families: vec![Family::Rice, Family::Lognormal, Family::Rayleigh],
            bins: default_bins(),
            sa: SaSettings {
                initial_temperature: Some(5e-4),
                ..SaSettings::default()
            },
            restarts: 2,
            bw: BwSettings::default(),
            bw_init: None,
            filter_spans: vec![1, 10],
            min_run: 1,
            fit_objective_ceiling: Some(3e-3),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_hash_stability() {
        let config = ExperimentConfig {
            schema: 1,
            seed: 42,
            task: TaskConfig::Sweep(SweepConfig::default()),
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
        assert_eq!(config_hash(&config), config_hash(&back));
        assert_eq!(config_hash(&config).len(), 16);
    }

    #[test]
    fn config_mode_tags_are_kebab_case() {
        let json = r#"{
            "schema": 1, "seed": 7, "mode": "curve-fit",
            "observations": "obs.csv",
            "families": ["rice", "lognormal", "rayleigh"]
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.task.mode_name(), "curve-fit");
        config.validate().unwrap();
    }

    #[test]
    fn unsupported_schema_rejected() {
        let config = ExperimentConfig {
            schema: 2,
            seed: 0,
            task: TaskConfig::Sweep(SweepConfig::default()),
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn pipeline_requires_exactly_one_source() {
        let mut config = synthetic_pipeline_demo_config(1, 1000);
        config.validate().unwrap();
        if let TaskConfig::Pipeline(c) = &mut config.task {
            c.trace = Some(PathBuf::from("x.csv"));
        }
        assert!(config.validate().is_err());
        if let TaskConfig::Pipeline(c) = &mut config.task {
            c.trace = None;
            c.synthetic = None;
        }
        assert!(config.validate().is_err());
    }

    #[test]
    fn task_seeds_are_stable_and_distinct() {
        let s0 = task_seed(123, 0);
        let s1 = task_seed(123, 1);
        assert_ne!(s0, s1);
        assert_eq!(s0, task_seed(123, 0));
        assert_ne!(task_seed(124, 0), s0);
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let config = ExperimentConfig {
            schema: 1,
            seed: 0,
            task: TaskConfig::Sweep(SweepConfig::default()),
        };
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}
