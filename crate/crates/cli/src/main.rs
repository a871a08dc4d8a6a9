//! Command-line front end: run simulated scenarios, sweep model-parameter
//! sensitivities, align trajectory files between reference frames and replay
//! recorded sensor logs through the filter.

mod commands;
mod formats;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "odofuse", version, about = "Differential-drive sensor-fusion localization tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated scenario and write estimate/truth/metric CSVs.
    Run {
        /// Scenario description (TOML).
        scenario: String,
        /// Estimate wheel radii and gyro bias online (on) or lock them at
        /// their nominal values (off).
        #[arg(long, default_value = "on", value_parser = parse_on_off)]
        estimate_uncertainties: bool,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: String,
    },
    /// Sweep one model parameter over a grid and dead-reckon each point.
    Sensitivity {
        scenario: String,
        /// Swept parameter: the grid value is added to the true parameter.
        #[arg(long, value_parser = ["radius_r", "radius_l", "bias"])]
        param: String,
        /// Grid specification lo:hi:n (n points, endpoints included).
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value = "out")]
        out: String,
    },
    /// Estimate the rigid transform aligning trajectory B onto trajectory A.
    Align {
        path_a: String,
        path_b: String,
        /// Restrict both paths to the time window t0:t1.
        #[arg(long)]
        window: Option<String>,
        /// If given, also write B transformed into A's frame.
        #[arg(long)]
        out: Option<String>,
    },
    /// Replay a recorded sensor log (JSON lines) through the filter.
    Replay {
        log: String,
        /// Filter parameters (TOML).
        params: String,
        #[arg(long, default_value = "out")]
        out: String,
    },
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected 'on' or 'off', got '{other}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            estimate_uncertainties,
            seed,
            out,
        } => commands::cmd_run(&scenario, estimate_uncertainties, seed, &out),
        Command::Sensitivity {
            scenario,
            param,
            range,
            out,
        } => commands::cmd_sensitivity(&scenario, &param, &range, &out),
        Command::Align {
            path_a,
            path_b,
            window,
            out,
        } => commands::cmd_align(&path_a, &path_b, window.as_deref(), out.as_deref()),
        Command::Replay { log, params, out } => commands::cmd_replay(&log, &params, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
