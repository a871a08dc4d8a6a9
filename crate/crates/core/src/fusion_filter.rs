//! The fusion EKF: fixed-rate predict/correct loop over asynchronous,
//! multi-rate measurement queues, with the correction restricted to the
//! observable states whenever no absolute position source is fresh.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement_models::{
    stack_predictions, GnssAntennaOffset, MeasurementPrediction, SensorKind, SensorSet, StackError,
};
use crate::state_model::{idx, predict_state, state_jacobian, ModelConfig, StateVector, STATE_DIM};
use crate::wrap_to_pi;

pub type Covariance = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// The filter's full belief: state estimate, covariance and time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub x: StateVector,
    pub p: Covariance,
    pub t: f64,
}

impl FilterState {
    /// Symmetry and positive semi-definiteness check on the covariance.
    pub fn covariance_healthy(&self) -> bool {
        let scale = self.p.amax().max(1e-300);
        let sym_err = (self.p - self.p.transpose()).amax();
        if sym_err > 1e-12 * scale {
            return false;
        }
        let eigs = self.p.symmetric_eigenvalues();
        let floor = -1e-10 * self.p.trace().abs();
        eigs.iter().all(|&e| e >= floor)
    }
}

/// One timestamped sensor sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: SensorKind,
    pub t: f64,
    pub values: Vec<f64>,
    /// Reference-frame label, absolute-pose kinds only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
}

/// Process and measurement noise covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Process noise added per prediction step.
    pub q: Covariance,
    pub r_imu: SMatrix<f64, 1, 1>,
    pub r_enc: SMatrix<f64, 2, 2>,
    pub r_gnss: SMatrix<f64, 2, 2>,
    pub r_pose: SMatrix<f64, 3, 3>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            q: Covariance::from_diagonal(&nalgebra::SVector::from([
                1e-6, 1e-6, 1e-7, 1e-2, 1e-2, 1e-10, 1e-10, 1e-10,
            ])),
            r_imu: SMatrix::<f64, 1, 1>::new(1e-5),
            r_enc: SMatrix::<f64, 2, 2>::from_diagonal_element(1e-4),
            r_gnss: SMatrix::<f64, 2, 2>::from_diagonal_element(1e-2),
            r_pose: SMatrix::<f64, 3, 3>::from_diagonal(&nalgebra::Vector3::new(
                1e-2, 1e-2, 1e-4,
            )),
        }
    }
}

impl NoiseConfig {
    /// Zeroes the process noise of the radius and bias states so they stay
    /// locked at their initial values.
    pub fn with_frozen_uncertainties(mut self) -> Self {
        for i in [idx::RADIUS_R, idx::RADIUS_L, idx::BIAS] {
            for j in 0..STATE_DIM {
                self.q[(i, j)] = 0.0;
                self.q[(j, i)] = 0.0;
            }
        }
        self
    }

    /// Block-diagonal measurement noise for the available kinds, stacked in
    /// canonical order.
    pub fn stacked_r(&self, available: &SensorSet) -> DMatrix<f64> {
        let n = available.total_dim();
        let mut r = DMatrix::zeros(n, n);
        let mut offset = 0;
        for kind in available.iter() {
            let d = kind.dim();
            match kind {
                SensorKind::ImuYawRate => r.view_mut((offset, offset), (d, d)).copy_from(&self.r_imu),
                SensorKind::Encoder => r.view_mut((offset, offset), (d, d)).copy_from(&self.r_enc),
                SensorKind::GnssPosition => {
                    r.view_mut((offset, offset), (d, d)).copy_from(&self.r_gnss)
                }
                SensorKind::AbsolutePose => {
                    r.view_mut((offset, offset), (d, d)).copy_from(&self.r_pose)
                }
            }
            offset += d;
        }
        r
    }
}

/// Freshness policy: a queued sample counts as available while it is younger
/// than `staleness_factor` nominal periods.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvailabilityPolicy {
    pub staleness_factor: f64,
    /// Nominal sampling period per kind [s], indexed by `SensorKind::index`.
    pub nominal_period: [f64; 4],
}

impl AvailabilityPolicy {
    pub fn from_rates(staleness_factor: f64, rates_hz: [f64; 4]) -> Self {
        Self {
            staleness_factor,
            nominal_period: rates_hz.map(|r| 1.0 / r),
        }
    }

    pub fn max_age(&self, kind: SensorKind) -> f64 {
        self.staleness_factor * self.nominal_period[kind.index()]
    }
}

impl Default for AvailabilityPolicy {
    /// 100 Hz proprioceptive sensors, 10 Hz GNSS, 20 Hz pose source.
    fn default() -> Self {
        Self::from_rates(1.5, [100.0, 100.0, 10.0, 20.0])
    }
}

/// Which states the correction step may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrectionMask {
    pub correctable: [bool; STATE_DIM],
}

impl CorrectionMask {
    pub fn full() -> Self {
        Self {
            correctable: [true; STATE_DIM],
        }
    }

    /// Only the wheel speeds, the observable subset without position measures.
    pub fn wheel_speeds_only() -> Self {
        let mut correctable = [false; STATE_DIM];
        correctable[idx::OMEGA_R] = true;
        correctable[idx::OMEGA_L] = true;
        Self { correctable }
    }

    /// Mask for the given availability. Without an absolute position source
    /// only the wheel speeds are corrected; `estimate_uncertainties = false`
    /// additionally locks the radii and bias at all times.
    pub fn for_availability(available: &SensorSet, estimate_uncertainties: bool) -> Self {
        let mut mask = if available.has_absolute() {
            Self::full()
        } else {
            Self::wheel_speeds_only()
        };
        if !estimate_uncertainties {
            mask.correctable[idx::RADIUS_R] = false;
            mask.correctable[idx::RADIUS_L] = false;
            mask.correctable[idx::BIAS] = false;
        }
        mask
    }
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("innovation covariance numerically singular (condition estimate {cond:.3e})")]
    SingularInnovation { cond: f64 },
    #[error("measurement/prediction row mismatch: {measurement} vs {prediction}")]
    RowMismatch { measurement: usize, prediction: usize },
    #[error(transparent)]
    Stack(#[from] StackError),
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("non-finite value in {kind} measurement at t={t}")]
    NonFinite { kind: &'static str, t: f64 },
    #[error("{kind} measurement has {got} values, expected {expected}")]
    WrongSize {
        kind: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown reference frame {frame:?} on {kind} measurement")]
    UnknownFrame { kind: &'static str, frame: String },
}

#[derive(Debug, Default)]
struct QueueInner {
    /// Newest un-fused sample per kind; latest-wins within a step.
    latest: [Option<Measurement>; 4],
    /// Timestamp of the last fused sample per kind.
    last_fused: [Option<f64>; 4],
}

/// Per-kind measurement queue. Appends may come from several producer threads;
/// the filter step drains it under the same lock.
#[derive(Debug, Default)]
pub struct MeasurementQueue {
    inner: Mutex<QueueInner>,
    /// Accepted frame labels for absolute-pose kinds; `None` accepts any.
    known_frames: Option<Vec<String>>,
}

impl MeasurementQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_known_frames(frames: Vec<String>) -> Self {
        Self {
            inner: Mutex::new(QueueInner::default()),
            known_frames: Some(frames),
        }
    }

    /// Retains `m` for the next filter step. Samples older than the last fused
    /// timestamp of their kind are silently discarded; within a step the
    /// newest sample of each kind wins.
    pub fn ingest(&self, m: Measurement) -> Result<(), IngestError> {
        let kind = m.kind;
        if !m.t.is_finite() || m.values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite {
                kind: kind.name(),
                t: m.t,
            });
        }
        if m.values.len() != kind.dim() {
            return Err(IngestError::WrongSize {
                kind: kind.name(),
                got: m.values.len(),
                expected: kind.dim(),
            });
        }
        if kind.is_absolute() {
            if let (Some(known), Some(frame)) = (&self.known_frames, &m.frame) {
                if !known.iter().any(|f| f == frame) {
                    return Err(IngestError::UnknownFrame {
                        kind: kind.name(),
                        frame: frame.clone(),
                    });
                }
            }
        }
        let mut inner = self.inner.lock().unwrap();
        let i = kind.index();
        if let Some(fused_t) = inner.last_fused[i] {
            if m.t <= fused_t {
                return Ok(());
            }
        }
        match &inner.latest[i] {
            Some(existing) if existing.t > m.t => {}
            _ => inner.latest[i] = Some(m),
        }
        Ok(())
    }

    /// Kinds with an un-fused sample no older than the policy allows.
    pub fn availability(&self, now: f64, policy: &AvailabilityPolicy) -> SensorSet {
        let inner = self.inner.lock().unwrap();
        let mut set = SensorSet::empty();
        for kind in SensorKind::CANONICAL_ORDER {
            if let Some(m) = &inner.latest[kind.index()] {
                if now - m.t <= policy.max_age(kind) {
                    set.insert(kind);
                }
            }
        }
        set
    }

    /// Newest queued sample of a kind, if any.
    pub fn latest_of(&self, kind: SensorKind) -> Option<Measurement> {
        self.inner.lock().unwrap().latest[kind.index()].clone()
    }

    /// Removes and returns the queued samples for `kinds`, marking them fused.
    fn take_for_fusion(&self, kinds: &SensorSet) -> Vec<Measurement> {
        let mut inner = self.inner.lock().unwrap();
        let mut taken = Vec::new();
        for kind in kinds.iter() {
            let i = kind.index();
            if let Some(m) = inner.latest[i].take() {
                inner.last_fused[i] = Some(m.t);
                taken.push(m);
            }
        }
        taken
    }
}

/// Everything the step loop needs besides the belief itself.
#[derive(Clone, Debug)]
pub struct FilterConfig {
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub policy: AvailabilityPolicy,
    pub antenna: GnssAntennaOffset,
    pub estimate_uncertainties: bool,
}

/// Time and covariance propagation through the full 8-state model.
pub fn predict_step(fs: &FilterState, cfg: &ModelConfig, noise: &NoiseConfig) -> FilterState {
    let a = state_jacobian(&fs.x, cfg);
    let p = a * fs.p * a.transpose() + noise.q;
    FilterState {
        x: predict_state(&fs.x, cfg),
        p: 0.5 * (p + p.transpose()),
        t: fs.t + cfg.sample_time,
    }
}

/// Masked EKF correction. The gain is computed on the full state and its rows
/// for non-correctable states are zeroed; the covariance update uses the
/// symmetric Joseph form, which stays consistent for an arbitrary gain.
pub fn correct_step(
    fs: &FilterState,
    pred: &MeasurementPrediction,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    mask: &CorrectionMask,
) -> Result<FilterState, FilterError> {
    let m = pred.values.len();
    if z.len() != m {
        return Err(FilterError::RowMismatch {
            measurement: z.len(),
            prediction: m,
        });
    }

    let mut innovation = z - &pred.values;
    for row in pred.angle_rows() {
        innovation[row] = wrap_to_pi(innovation[row]);
    }

    let c = &pred.jacobian;
    let p = DMatrix::from_iterator(STATE_DIM, STATE_DIM, fs.p.iter().copied());
    let s = c * &p * c.transpose() + r;

    let svd = s.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !cond.is_finite() || cond > 1e12 {
        return Err(FilterError::SingularInnovation { cond });
    }
    let s_chol = s
        .cholesky()
        .ok_or(FilterError::SingularInnovation { cond })?;

    // K = P Cᵀ S⁻¹, then zero the rows of the states we must not touch.
    let mut k = s_chol.solve(&(c * &p)).transpose();
    for (i, correctable) in mask.correctable.iter().enumerate() {
        if !correctable {
            k.row_mut(i).fill(0.0);
        }
    }

    let dx = &k * &innovation;
    let mut xv = fs.x.as_vector();
    for i in 0..STATE_DIM {
        xv[i] += dx[i];
    }

    let ikc = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - &k * c;
    let p_new = &ikc * &p * ikc.transpose() + &k * r * k.transpose();
    let mut p_out = Covariance::zeros();
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            p_out[(i, j)] = 0.5 * (p_new[(i, j)] + p_new[(j, i)]);
        }
    }

    Ok(FilterState {
        x: StateVector::from_vector(&xv),
        p: p_out,
        t: fs.t,
    })
}

/// One fixed-rate filter iteration: predict, then correct with whatever subset
/// of sensors is fresh. With nothing available this is a pure odometry step.
pub fn filter_step(
    fs: &FilterState,
    queue: &MeasurementQueue,
    cfg: &FilterConfig,
) -> Result<FilterState, FilterError> {
    filter_step_traced(fs, queue, cfg).map(|(state, _)| state)
}

/// Like [`filter_step`] but also reports which sensor kinds were fused.
pub fn filter_step_traced(
    fs: &FilterState,
    queue: &MeasurementQueue,
    cfg: &FilterConfig,
) -> Result<(FilterState, SensorSet), FilterError> {
    let predicted = predict_step(fs, &cfg.model, &cfg.noise);
    let available = queue.availability(predicted.t, &cfg.policy);
    if available.is_empty() {
        return Ok((predicted, available));
    }

    let pred = stack_predictions(&predicted.x, &available, &cfg.model, &cfg.antenna)?;
    let samples = queue.take_for_fusion(&available);
    let mut z = DVector::zeros(available.total_dim());
    let mut offset = 0;
    for (kind, sample) in pred.kinds.iter().zip(&samples) {
        debug_assert_eq!(*kind, sample.kind);
        for (j, v) in sample.values.iter().enumerate() {
            z[offset + j] = *v;
        }
        offset += kind.dim();
    }

    let r = cfg.noise.stacked_r(&available);
    let mask = CorrectionMask::for_availability(&available, cfg.estimate_uncertainties);
    correct_step(&predicted, &pred, &z, &r, &mask).map(|state| (state, available))
}

/// One filter iteration as recorded by [`run_fixed_rate`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub state: FilterState,
    /// Kinds fused at this iteration; empty for the initial record and for
    /// pure-prediction steps.
    pub fused: SensorSet,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("measurement {index}: {source}")]
    Ingest {
        index: usize,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Drives the filter for `steps` iterations on its fixed grid, feeding it the
/// given time-ordered measurements as they come due. Record 0 is the initial
/// belief; the output cadence is one record per step regardless of sensor
/// rates.
pub fn run_fixed_rate(
    initial: FilterState,
    cfg: &FilterConfig,
    steps: usize,
    measurements: &[Measurement],
) -> Result<Vec<StepRecord>, RunError> {
    let queue = MeasurementQueue::new();
    let ts = cfg.model.sample_time;
    let mut records = Vec::with_capacity(steps + 1);
    records.push(StepRecord {
        state: initial,
        fused: SensorSet::empty(),
    });
    let mut fs = initial;
    let mut next = 0;
    for k in 1..=steps {
        let now = k as f64 * ts;
        while next < measurements.len() && measurements[next].t <= now + 1e-9 {
            queue
                .ingest(measurements[next].clone())
                .map_err(|source| RunError::Ingest {
                    index: next,
                    source,
                })?;
            next += 1;
        }
        let (state, fused) = filter_step_traced(&fs, &queue, cfg)?;
        fs = state;
        records.push(StepRecord { state, fused });
    }
    Ok(records)
}

/// Numerical rank of the linearized observability matrix [C; CA; ...; CA^7]
/// for the given sensor subset.
pub fn observability_rank(
    x: &StateVector,
    available: &SensorSet,
    cfg: &ModelConfig,
    antenna: &GnssAntennaOffset,
) -> usize {
    if available.is_empty() {
        return 0;
    }
    let pred = stack_predictions(x, available, cfg, antenna).expect("non-empty availability");
    let c = pred.jacobian;
    let a = state_jacobian(x, cfg);
    let a_dyn = DMatrix::from_iterator(STATE_DIM, STATE_DIM, a.iter().copied());

    let m = c.nrows();
    let mut obs = DMatrix::zeros(m * STATE_DIM, STATE_DIM);
    let mut block = c;
    for i in 0..STATE_DIM {
        obs.view_mut((i * m, 0), (m, STATE_DIM)).copy_from(&block);
        block = &block * &a_dyn;
    }

    let svd = obs.svd(false, false);
    let max_sv = svd.singular_values.max();
    if max_sv == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > 1e-10 * max_sv).count()
}
