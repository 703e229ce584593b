//! Harness-level behavior: reproducibility under concurrency, output file
//! schemas, config handling and the binary's exit codes.

use std::fs;
use std::process::Command;

use lmsc_hmm::cli::{
    config_hash, execute, run_baseline, run_curve_fit, run_fit_bw, run_simulate, run_sweep,
    sweep_csv, BaselineConfig, BwSettings, CurveFitConfig, ExperimentConfig, FitBwConfig,
    OutputFormat, RunOptions, SaSettings, SimulateConfig, SweepConfig, SweepResult, TaskConfig,
    CONFIG_SCHEMA,
};
use lmsc_hmm::distributions::EmissionDistribution;
use lmsc_hmm::fitting::Family;
use lmsc_hmm::markov::MarkovChain;

fn two_state_chain() -> MarkovChain {
    MarkovChain::new(
        vec![vec![0.950, 0.050], vec![0.025, 0.975]],
        vec![1.0 / 3.0, 2.0 / 3.0],
    )
    .unwrap()
}

fn small_sweep_config() -> ExperimentConfig {
    ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 99,
        task: TaskConfig::Sweep(SweepConfig {
            mu1_grid: vec![0.4, 0.7],
            n: 4000,
            bw: BwSettings {
                max_iters: 20,
                tol: 1e-6,
            },
            ..SweepConfig::default()
        }),
    }
}

#[test]
fn sweep_is_reproducible_across_worker_counts() {
    let config = small_sweep_config();
    let serial = run_sweep(&config, 1).unwrap();
    let parallel = run_sweep(&config, 4).unwrap();
    assert_eq!(serial.rows, parallel.rows);
}

#[test]
fn sweep_row_count_and_csv_schema() {
    let config = small_sweep_config();
    let result = run_sweep(&config, 2).unwrap();
    // 2 grid points x (BW, T1, T10, T20).
    assert_eq!(result.rows.len(), 8);
    let csv = sweep_csv(&result);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,mu1,bhattacharyya,p12_hat,p1_hat,error_share,config_hash"
    );
    assert_eq!(lines.count(), 8);
    let hash = config_hash(&config);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(&hash), "row missing config hash: {line}");
    }
}

#[test]
fn sweep_json_report_round_trips() {
    let config = small_sweep_config();
    let result = run_sweep(&config, 2).unwrap();
    let json = serde_json::to_string(&result).unwrap();
    let back: SweepResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, result);
}

#[test]
fn empty_sweep_grid_produces_headers_only() {
    let mut config = small_sweep_config();
    if let TaskConfig::Sweep(c) = &mut config.task {
        c.mu1_grid.clear();
    }
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        workers: 1,
        format: OutputFormat::Csv,
    };
    let files = execute(&config, &opts).unwrap();
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(
        csv.trim_end(),
        "method,mu1,bhattacharyya,p12_hat,p1_hat,error_share,config_hash"
    );
    assert!(files.iter().any(|p| p.ends_with("sweep_report.json")));
}

#[test]
fn simulate_fit_baseline_file_flow() {
    let dir = tempfile::tempdir().unwrap();
    let sim_config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 5,
        task: TaskConfig::Simulate(SimulateConfig {
            chain: two_state_chain(),
            emissions: vec![
                EmissionDistribution::gaussian(0.4, 0.2).unwrap(),
                EmissionDistribution::gaussian(1.0, 0.2).unwrap(),
            ],
            n: 5000,
            trace_step_m: None,
        }),
    };
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        workers: 1,
        format: OutputFormat::Csv,
    };
    execute(&sim_config, &opts).unwrap();
    let obs_path = dir.path().join("observations.csv");
    let states_path = dir.path().join("states.csv");
    assert!(obs_path.exists() && states_path.exists());

    // State labels are 1-based.
    let states_text = fs::read_to_string(&states_path).unwrap();
    let mut lines = states_text.lines();
    assert_eq!(lines.next().unwrap(), "state");
    assert!(lines.all(|l| l == "1" || l == "2"));

    let fit_config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 5,
        task: TaskConfig::FitBw(FitBwConfig {
            observations: obs_path.clone(),
            emissions: vec![
                EmissionDistribution::gaussian(0.4, 0.2).unwrap(),
                EmissionDistribution::gaussian(1.0, 0.2).unwrap(),
            ],
            init_chain: None,
            bw: BwSettings {
                max_iters: 30,
                tol: 1e-6,
            },
        }),
    };
    let fit = run_fit_bw(&fit_config).unwrap();
    assert_eq!(fit.decoded.len(), 5000);
    assert!(fit.result.report.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    // Self-transitions dominate in the generating chain.
    assert!(fit.result.report.model.chain().transition_prob(0, 0) > 0.5);

    let baseline_config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 0,
        task: TaskConfig::Baseline(BaselineConfig {
            observations: obs_path,
            thresholds: vec![0.6537901879626703],
            filter_spans: vec![1, 10],
            truth_states: Some(states_path),
        }),
    };
    let out = run_baseline(&baseline_config).unwrap();
    assert_eq!(out.result.methods.len(), 2);
    for method in &out.result.methods {
        let share = method.error_share.expect("truth supplied");
        assert!(share < 0.2, "{}: error share {share}", method.method);
    }
}

#[test]
fn curve_fit_runs_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim_config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 31,
        task: TaskConfig::Simulate(SimulateConfig {
            chain: MarkovChain::new(vec![vec![1.0]], vec![1.0]).unwrap(),
            emissions: vec![EmissionDistribution::rayleigh(0.5).unwrap()],
            n: 20_000,
            trace_step_m: None,
        }),
    };
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        workers: 1,
        format: OutputFormat::Csv,
    };
    execute(&sim_config, &opts).unwrap();

    let config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 7,
        task: TaskConfig::CurveFit(CurveFitConfig {
            observations: dir.path().join("observations.csv"),
            families: vec![Family::Rayleigh],
            bins: 120,
            sa: SaSettings::default(),
            restarts: 2,
        }),
    };
    let result = run_curve_fit(&config).unwrap();
    let EmissionDistribution::Rayleigh { sigma } = result.mixture.components()[0] else {
        panic!("family fixed in advance");
    };
    assert!((sigma - 0.5).abs() < 0.05, "recovered sigma {sigma}");
}

#[test]
fn simulate_trace_emits_positions() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed: 2,
        task: TaskConfig::Simulate(SimulateConfig {
            chain: two_state_chain(),
            emissions: vec![
                EmissionDistribution::rice(1.0, 0.25).unwrap(),
                EmissionDistribution::rayleigh(0.2).unwrap(),
            ],
            n: 100,
            trace_step_m: Some(0.2),
        }),
    };
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        workers: 1,
        format: OutputFormat::Csv,
    };
    execute(&config, &opts).unwrap();
    let trace = lmsc_hmm::preprocess::load_trace(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 100);
    assert!((trace.positions()[1] - 0.2).abs() < 1e-12);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let config = |seed| ExperimentConfig {
        schema: CONFIG_SCHEMA,
        seed,
        task: TaskConfig::Simulate(SimulateConfig {
            chain: two_state_chain(),
            emissions: vec![
                EmissionDistribution::gaussian(0.4, 0.2).unwrap(),
                EmissionDistribution::gaussian(1.0, 0.2).unwrap(),
            ],
            n: 64,
            trace_step_m: None,
        }),
    };
    let a = run_simulate(&config(9)).unwrap();
    let b = run_simulate(&config(9)).unwrap();
    let c = run_simulate(&config(10)).unwrap();
    assert_eq!(a.observations.samples(), b.observations.samples());
    assert_ne!(a.observations.samples(), c.observations.samples());
}

#[test]
fn binary_runs_and_reports_config_errors() {
    let bin = env!("CARGO_BIN_EXE_lmsc-hmm");
    let dir = tempfile::tempdir().unwrap();

    let config_path = dir.path().join("sim.json");
    fs::write(
        &config_path,
        r#"{
            "schema": 1, "seed": 3, "mode": "simulate",
            "chain": {"transition": [[0.95, 0.05], [0.025, 0.975]],
                      "initial": [0.3333333333333333, 0.6666666666666666]},
            "emissions": [
                {"type": "gaussian", "mu": 0.4, "sigma": 0.2},
                {"type": "gaussian", "mu": 1.0, "sigma": 0.2}
            ],
            "n": 500
        }"#,
    )
    .unwrap();

    let out_dir = dir.path().join("out");
    let ok = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&config_path)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(ok.status.success(), "stderr: {}", String::from_utf8_lossy(&ok.stderr));
    assert!(out_dir.join("observations.csv").exists());

    // Wrong subcommand for the config's mode: config error, exit 2.
    let mismatch = Command::new(bin)
        .args(["sweep", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(mismatch.status.code(), Some(2));

    // Unsupported schema: exit 2.
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema": 9, "mode": "sweep"}"#).unwrap();
    let bad_run = Command::new(bin)
        .args(["sweep", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(bad_run.status.code(), Some(2));

    // Missing observation file: I/O error, exit 4.
    let io_cfg = dir.path().join("io.json");
    fs::write(
        &io_cfg,
        r#"{
            "schema": 1, "mode": "fit-bw",
            "observations": "/nonexistent/obs.csv",
            "emissions": [{"type": "rayleigh", "sigma": 0.5}]
        }"#,
    )
    .unwrap();
    let io_run = Command::new(bin)
        .args(["fit-bw", "--config"])
        .arg(&io_cfg)
        .output()
        .unwrap();
    assert_eq!(io_run.status.code(), Some(4));
}
