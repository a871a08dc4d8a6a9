//! File formats shared by the commands: trajectory/metric CSVs, JSON-lines
//! sensor logs and the replay parameter file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use odofuse::frame_alignment::{TimedPath, TimedPoint};
use odofuse::fusion_filter::{Covariance, FilterState, Measurement, StepRecord};
use odofuse::measurement_models::GnssAntennaOffset;
use odofuse::sim_harness::{RunMetrics, TruthSample};
use odofuse::state_model::StateVector;

use crate::commands::CliError;

pub const ESTIMATE_HEADER: &str =
    "t,X,Y,psi,omega_r,omega_l,radius_r,radius_l,bias,p11,p22,p33,p44,p55,p66,p77,p88";
pub const TRUTH_HEADER: &str = "t,X,Y,psi,omega_r,omega_l";
pub const METRICS_HEADER: &str = "t,pos_err,yaw_err,s_pose,s_vel,cum_yaw_vel";

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("writing {}: {e}", path.display()))
}

/// One row per filter iteration: state estimate plus covariance diagonal.
pub fn write_estimate_csv(path: &Path, records: &[StepRecord]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{ESTIMATE_HEADER}")?;
        for rec in records {
            let s = &rec.state.x;
            write!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                rec.state.t, s.x, s.y, s.psi, s.omega_r, s.omega_l, s.radius_r, s.radius_l, s.bias
            )?;
            for i in 0..8 {
                write!(w, ",{}", rec.state.p[(i, i)])?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

pub fn write_truth_csv(path: &Path, samples: &[TruthSample]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{TRUTH_HEADER}")?;
        for s in samples {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.t, s.x, s.y, s.psi, s.omega_r, s.omega_l
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

pub fn write_metrics_csv(path: &Path, m: &RunMetrics) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for k in 0..m.t.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                m.t[k], m.pos_err[k], m.yaw_err[k], m.s_pose[k], m.s_vel[k], m.cum_yaw_vel[k]
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Plain (t, X, Y) trajectory rows, as written for aligned paths.
pub fn write_path_csv(path: &Path, points: &[(f64, f64, f64)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "t,X,Y")?;
        for (t, x, y) in points {
            writeln!(w, "{t},{x},{y}")?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Reads a trajectory from any CSV whose header declares `t`, `X` and `Y`
/// columns (extra columns are ignored), e.g. estimate.csv or truth.csv.
pub fn read_path_csv(path: &Path) -> Result<TimedPath, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(CliError::Io(format!("reading {}: {e}", path.display()))),
        None => {
            return Err(CliError::Config(format!(
                "{}: empty file, expected a CSV header",
                path.display()
            )))
        }
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        columns
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                CliError::Config(format!(
                    "{}: header has no '{name}' column (found: {header})",
                    path.display()
                ))
            })
    };
    let (ti, xi, yi) = (col("t")?, col("X")?, col("Y")?);

    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64, CliError> {
            fields
                .get(i)
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{} line {}: malformed row '{line}'",
                        path.display(),
                        lineno + 1
                    ))
                })
        };
        samples.push(TimedPoint {
            t: parse(ti)?,
            x: parse(xi)?,
            y: parse(yi)?,
        });
    }
    TimedPath::new(samples)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reads a JSON-lines sensor log. Within each kind timestamps must be
/// non-decreasing; across kinds no global ordering is required.
pub fn read_sensor_log(path: &Path) -> Result<Vec<Measurement>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut all = Vec::new();
    let mut last_t: [Option<f64>; 4] = [None; 4];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: Measurement = serde_json::from_str(&line).map_err(|e| {
            CliError::Config(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        if !m.t.is_finite() || m.values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config(format!(
                "{} line {}: non-finite value in {} record",
                path.display(),
                lineno + 1,
                m.kind.name()
            )));
        }
        if m.values.len() != m.kind.dim() {
            return Err(CliError::Config(format!(
                "{} line {}: {} record has {} values, expected {}",
                path.display(),
                lineno + 1,
                m.kind.name(),
                m.values.len(),
                m.kind.dim()
            )));
        }
        let slot = &mut last_t[m.kind.index()];
        if let Some(prev) = *slot {
            if m.t < prev {
                return Err(CliError::Config(format!(
                    "{} line {}: {} timestamp {} is out of order (previous {})",
                    path.display(),
                    lineno + 1,
                    m.kind.name(),
                    m.t,
                    prev
                )));
            }
        }
        *slot = Some(m.t);
        all.push(m);
    }
    // the filter loop consumes a single time-ordered slice
    all.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(a.kind.index().cmp(&b.kind.index()))
    });
    Ok(all)
}

pub fn write_sensor_log(path: &Path, measurements: &[Measurement]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut emit = || -> std::io::Result<()> {
        for m in measurements {
            let line = serde_json::to_string(m).expect("measurement serializes");
            writeln!(w, "{line}")?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Filter parameters for replaying a recorded log; mirrors the configuration a
/// scenario run derives internally.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayParams {
    pub track_width: f64,
    pub filter_rate: f64,
    pub duration: f64,
    #[serde(default = "default_true")]
    pub estimate_uncertainties: bool,
    pub rates: ReplayRates,
    #[serde(default)]
    pub antenna: AntennaParams,
    pub initial: InitialState,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRates {
    pub imu: f64,
    pub encoder: f64,
    pub gnss: f64,
    pub pose: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaParams {
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub omega_r: f64,
    #[serde(default)]
    pub omega_l: f64,
    pub radius_r: f64,
    pub radius_l: f64,
    #[serde(default)]
    pub bias: f64,
}

impl ReplayParams {
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: &str| Err(CliError::Config(format!("replay params: {m}")));
        if !(self.track_width > 0.0) {
            return err("track_width must be positive");
        }
        if !(self.filter_rate > 0.0) {
            return err("filter_rate must be positive");
        }
        if !(self.duration > 0.0) {
            return err("duration must be positive");
        }
        if [self.rates.imu, self.rates.encoder, self.rates.gnss, self.rates.pose]
            .iter()
            .any(|r| !(*r > 0.0))
        {
            return err("sensor rates must be positive");
        }
        if !(self.initial.radius_r > 0.0 && self.initial.radius_l > 0.0) {
            return err("initial wheel radii must be positive");
        }
        Ok(())
    }

    pub fn antenna_offset(&self) -> GnssAntennaOffset {
        GnssAntennaOffset {
            d: self.antenna.d,
            alpha: self.antenna.alpha,
        }
    }

    pub fn initial_filter_state(&self, p: Covariance) -> FilterState {
        FilterState {
            x: StateVector {
                x: self.initial.x,
                y: self.initial.y,
                psi: self.initial.psi,
                omega_r: self.initial.omega_r,
                omega_l: self.initial.omega_l,
                radius_r: self.initial.radius_r,
                radius_l: self.initial.radius_l,
                bias: self.initial.bias,
            },
            p,
            t: 0.0,
        }
    }
}
