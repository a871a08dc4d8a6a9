//! Implementations of the four subcommands and the exit-code policy.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use odofuse::frame_alignment::{alignment_mse, associate, horn_align};
use odofuse::fusion_filter::{
    run_fixed_rate, AvailabilityPolicy, FilterConfig, NoiseConfig, RunError,
};
use odofuse::sim_harness::{
    dead_reckon, emulate_streams, generate_truth, initial_covariance, run_scenario, Scenario,
    SimError,
};
use odofuse::state_model::ModelConfig;
use odofuse::wrap_to_pi;

use crate::formats;
use crate::formats::ReplayParams;

/// Command failures, grouped by exit code: 2 config/parse, 3 numerical, 4 I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(_) => CliError::Config(e.to_string()),
            SimError::Run(RunError::Ingest { .. }) => CliError::Config(e.to_string()),
            SimError::Run(RunError::Filter(_)) => CliError::Numerical(e.to_string()),
        }
    }
}

fn read_scenario(path: &str) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {path}: {e}")))?;
    let scenario: Scenario =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

fn ensure_dir(dir: &str) -> Result<PathBuf, CliError> {
    let path = PathBuf::from(dir);
    fs::create_dir_all(&path)
        .map_err(|e| CliError::Io(format!("cannot create directory {dir}: {e}")))?;
    Ok(path)
}

pub fn cmd_run(
    scenario_path: &str,
    estimate_uncertainties: bool,
    seed: Option<u64>,
    out: &str,
) -> Result<(), CliError> {
    let mut scenario = read_scenario(scenario_path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let result = run_scenario(&scenario, estimate_uncertainties)?;
    let dir = ensure_dir(out)?;
    formats::write_estimate_csv(&dir.join("estimate.csv"), &result.records)?;
    formats::write_truth_csv(&dir.join("truth.csv"), &result.truth.samples)?;
    formats::write_metrics_csv(&dir.join("metrics.csv"), &result.metrics)?;
    // the emulated streams, replayable through `replay`
    let streams = emulate_streams(&result.truth, &scenario);
    formats::write_sensor_log(&dir.join("sensors.jsonl"), &streams.merged())?;
    println!(
        "run complete: {} steps, final position error {:.4} m, final yaw error {:.4} rad",
        result.records.len() - 1,
        result.metrics.final_position_error(),
        result.metrics.final_yaw_error()
    );
    Ok(())
}

/// Parses a `lo:hi:n` sweep grid into `n` evenly spaced values.
fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("malformed range '{spec}', expected lo:hi:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() || n == 0 || lo > hi {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

pub fn cmd_sensitivity(
    scenario_path: &str,
    param: &str,
    range: &str,
    out: &str,
) -> Result<(), CliError> {
    let scenario = read_scenario(scenario_path)?;
    let values = parse_range(range)?;
    let truth = generate_truth(&scenario);
    let dir = ensure_dir(out)?;
    let p = &scenario.true_params;

    let mut summary = String::from("index,value,final_pos_err,final_yaw_err\n");
    for (i, &value) in values.iter().enumerate() {
        // the grid value perturbs one parameter away from its true value
        let (rr, rl, offset) = match param {
            "radius_r" => (p.radius_r + value, p.radius_l, 0.0),
            "radius_l" => (p.radius_r, p.radius_l + value, 0.0),
            "bias" => (p.radius_r, p.radius_l, value),
            other => return Err(CliError::Config(format!("unknown sweep param '{other}'"))),
        };
        if !(rr > 0.0 && rl > 0.0) {
            return Err(CliError::Config(format!(
                "range value {value} makes a wheel radius non-positive"
            )));
        }
        let dr = dead_reckon(&truth, rr, rl, p.track_width, offset);
        let points: Vec<(f64, f64, f64)> = dr.iter().map(|s| (s.t, s.x, s.y)).collect();
        formats::write_path_csv(&dir.join(format!("traj_{i:03}.csv")), &points)?;
        let last = dr.last().unwrap();
        let tru = truth.samples.last().unwrap();
        let pos_err = (last.x - tru.x).hypot(last.y - tru.y);
        let yaw_err = wrap_to_pi(last.psi - tru.psi).abs();
        summary.push_str(&format!("{i},{value},{pos_err},{yaw_err}\n"));
    }
    let summary_path = dir.join("summary.csv");
    fs::write(&summary_path, summary)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", summary_path.display())))?;
    println!("sensitivity sweep complete: {} grid points", values.len());
    Ok(())
}

/// Parses a `t0:t1` time window.
fn parse_window(spec: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Config(format!("malformed window '{spec}', expected t0:t1"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    let t0: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let t1: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    if !t0.is_finite() || !t1.is_finite() || t0 > t1 {
        return Err(bad());
    }
    Ok((t0, t1))
}

pub fn cmd_align(
    path_a: &str,
    path_b: &str,
    window: Option<&str>,
    out: Option<&str>,
) -> Result<(), CliError> {
    let mut a = formats::read_path_csv(Path::new(path_a))?;
    let mut b = formats::read_path_csv(Path::new(path_b))?;
    if let Some(spec) = window {
        let (t0, t1) = parse_window(spec)?;
        a = a
            .windowed(t0, t1)
            .map_err(|e| CliError::Numerical(format!("{path_a} in window {spec}: {e}")))?;
        b = b
            .windowed(t0, t1)
            .map_err(|e| CliError::Numerical(format!("{path_b} in window {spec}: {e}")))?;
    }
    let pairs = associate(&a, &b).map_err(|e| CliError::Numerical(e.to_string()))?;
    let tf = horn_align(&pairs).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mse = alignment_mse(&tf, &pairs);
    println!("theta={}", tf.theta);
    println!("tx={}", tf.tx);
    println!("ty={}", tf.ty);
    println!("mse={}", mse);
    if let Some(out) = out {
        // path B expressed in frame A, over the full (windowed) extent of B
        let transformed: Vec<(f64, f64, f64)> = b
            .samples
            .iter()
            .map(|s| {
                let (x, y) = tf.apply_point((s.x, s.y));
                (s.t, x, y)
            })
            .collect();
        formats::write_path_csv(Path::new(out), &transformed)?;
    }
    Ok(())
}

pub fn cmd_replay(log_path: &str, params_path: &str, out: &str) -> Result<(), CliError> {
    let text = fs::read_to_string(params_path)
        .map_err(|e| CliError::Io(format!("cannot read {params_path}: {e}")))?;
    let params: ReplayParams =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{params_path}: {e}")))?;
    params.validate()?;
    let measurements = formats::read_sensor_log(Path::new(log_path))?;

    let model = ModelConfig {
        track_width: params.track_width,
        sample_time: 1.0 / params.filter_rate,
    };
    let noise = if params.estimate_uncertainties {
        NoiseConfig::default()
    } else {
        NoiseConfig::default().with_frozen_uncertainties()
    };
    let cfg = FilterConfig {
        model,
        noise,
        policy: AvailabilityPolicy::from_rates(
            1.5,
            [
                params.rates.imu,
                params.rates.encoder,
                params.rates.gnss,
                params.rates.pose,
            ],
        ),
        antenna: params.antenna_offset(),
        estimate_uncertainties: params.estimate_uncertainties,
    };
    let initial = params.initial_filter_state(initial_covariance());
    let steps = (params.duration * params.filter_rate).round() as usize;
    let records = run_fixed_rate(initial, &cfg, steps, &measurements).map_err(|e| match e {
        RunError::Ingest { .. } => CliError::Config(e.to_string()),
        RunError::Filter(_) => CliError::Numerical(e.to_string()),
    })?;
    let dir = ensure_dir(out)?;
    formats::write_estimate_csv(&dir.join("estimate.csv"), &records)?;
    println!("replay complete: {} steps, {} records ingested", steps, measurements.len());
    Ok(())
}
