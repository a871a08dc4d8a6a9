//! Predicted-measurement functions and Jacobians for the four sensor types,
//! with dynamic stacking of whichever subset is currently available.

use nalgebra::{DMatrix, DVector, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state_model::{idx, ModelConfig, StateVector, STATE_DIM};

/// The four fused sensor types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    ImuYawRate,
    Encoder,
    GnssPosition,
    AbsolutePose,
}

impl SensorKind {
    /// Fixed stacking order for measurement vectors and noise blocks.
    pub const CANONICAL_ORDER: [SensorKind; 4] = [
        SensorKind::ImuYawRate,
        SensorKind::Encoder,
        SensorKind::GnssPosition,
        SensorKind::AbsolutePose,
    ];

    /// Number of measurement rows contributed by this kind.
    pub fn dim(self) -> usize {
        match self {
            SensorKind::ImuYawRate => 1,
            SensorKind::Encoder => 2,
            SensorKind::GnssPosition => 2,
            SensorKind::AbsolutePose => 3,
        }
    }

    /// Whether this kind provides absolute position information.
    pub fn is_absolute(self) -> bool {
        matches!(self, SensorKind::GnssPosition | SensorKind::AbsolutePose)
    }

    pub fn index(self) -> usize {
        match self {
            SensorKind::ImuYawRate => 0,
            SensorKind::Encoder => 1,
            SensorKind::GnssPosition => 2,
            SensorKind::AbsolutePose => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::ImuYawRate => "imu_yaw_rate",
            SensorKind::Encoder => "encoder",
            SensorKind::GnssPosition => "gnss_position",
            SensorKind::AbsolutePose => "absolute_pose",
        }
    }
}

/// Small set of sensor kinds, iterated in canonical order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SensorSet([bool; 4]);

impl SensorSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self([true; 4])
    }

    pub fn insert(&mut self, kind: SensorKind) {
        self.0[kind.index()] = true;
    }

    pub fn with(mut self, kind: SensorKind) -> Self {
        self.insert(kind);
        self
    }

    pub fn contains(&self, kind: SensorKind) -> bool {
        self.0[kind.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn has_absolute(&self) -> bool {
        self.iter().any(|k| k.is_absolute())
    }

    /// Total measurement rows contributed by the contained kinds.
    pub fn total_dim(&self) -> usize {
        self.iter().map(SensorKind::dim).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = SensorKind> + '_ {
        SensorKind::CANONICAL_ORDER
            .into_iter()
            .filter(move |k| self.contains(*k))
    }
}

impl FromIterator<SensorKind> for SensorSet {
    fn from_iter<I: IntoIterator<Item = SensorKind>>(iter: I) -> Self {
        let mut set = Self::empty();
        for k in iter {
            set.insert(k);
        }
        set
    }
}

/// GNSS antenna mounting offset from the center of mass, in polar coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssAntennaOffset {
    /// Radial offset [m].
    pub d: f64,
    /// Angular offset [rad].
    pub alpha: f64,
}

impl GnssAntennaOffset {
    pub fn none() -> Self {
        Self { d: 0.0, alpha: 0.0 }
    }
}

/// Predicted encoder measurement: the two wheel speeds.
pub fn predict_encoder(x: &StateVector) -> Vector2<f64> {
    Vector2::new(x.omega_r, x.omega_l)
}

pub fn encoder_jacobian() -> SMatrix<f64, 2, STATE_DIM> {
    let mut c = SMatrix::zeros();
    c[(0, idx::OMEGA_R)] = 1.0;
    c[(1, idx::OMEGA_L)] = 1.0;
    c
}

/// Predicted absolute-pose measurement: the vehicle pose itself.
pub fn predict_pose(x: &StateVector) -> Vector3<f64> {
    Vector3::new(x.x, x.y, x.psi)
}

pub fn pose_jacobian() -> SMatrix<f64, 3, STATE_DIM> {
    let mut c = SMatrix::zeros();
    c[(0, idx::X)] = 1.0;
    c[(1, idx::Y)] = 1.0;
    c[(2, idx::PSI)] = 1.0;
    c
}

/// Predicted GNSS position: vehicle position displaced by the antenna offset.
pub fn predict_gnss(x: &StateVector, offset: &GnssAntennaOffset) -> Vector2<f64> {
    let angle = x.psi + offset.alpha;
    Vector2::new(x.x + offset.d * angle.cos(), x.y + offset.d * angle.sin())
}

pub fn gnss_jacobian(x: &StateVector, offset: &GnssAntennaOffset) -> SMatrix<f64, 2, STATE_DIM> {
    let angle = x.psi + offset.alpha;
    let mut c = SMatrix::zeros();
    c[(0, idx::X)] = 1.0;
    c[(0, idx::PSI)] = -offset.d * angle.sin();
    c[(1, idx::Y)] = 1.0;
    c[(1, idx::PSI)] = offset.d * angle.cos();
    c
}

/// Predicted IMU yaw rate: wheel-model yaw rate plus the estimated bias.
pub fn predict_imu_yaw_rate(x: &StateVector, cfg: &ModelConfig) -> f64 {
    x.wheel_yaw_rate(cfg.track_width) + x.bias
}

pub fn imu_jacobian(x: &StateVector, cfg: &ModelConfig) -> SMatrix<f64, 1, STATE_DIM> {
    let t = cfg.track_width;
    let mut c = SMatrix::zeros();
    c[(0, idx::OMEGA_R)] = x.radius_r / t;
    c[(0, idx::OMEGA_L)] = -x.radius_l / t;
    c[(0, idx::RADIUS_R)] = x.omega_r / t;
    c[(0, idx::RADIUS_L)] = -x.omega_l / t;
    c[(0, idx::BIAS)] = 1.0;
    c
}

/// Stacked predicted measurement for the currently available sensor subset.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementPrediction {
    pub values: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// One entry per row block, in canonical order.
    pub kinds: Vec<SensorKind>,
}

impl MeasurementPrediction {
    /// Row indices whose innovation must be wrapped as an angle (the heading
    /// row of an absolute-pose block).
    pub fn angle_rows(&self) -> Vec<usize> {
        let mut rows = Vec::new();
        let mut offset = 0;
        for kind in &self.kinds {
            if *kind == SensorKind::AbsolutePose {
                rows.push(offset + 2);
            }
            offset += kind.dim();
        }
        rows
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StackError {
    #[error("no sensor kinds available to stack; scheduler should not request a correction")]
    EmptyAvailability,
}

/// Stacks predicted values and Jacobian rows for the available kinds in
/// canonical order (IMU, encoder, GNSS, pose).
pub fn stack_predictions(
    x: &StateVector,
    available: &SensorSet,
    cfg: &ModelConfig,
    offset: &GnssAntennaOffset,
) -> Result<MeasurementPrediction, StackError> {
    if available.is_empty() {
        return Err(StackError::EmptyAvailability);
    }
    let rows = available.total_dim();
    let mut values = DVector::zeros(rows);
    let mut jacobian = DMatrix::zeros(rows, STATE_DIM);
    let mut kinds = Vec::new();
    let mut r = 0;
    for kind in available.iter() {
        match kind {
            SensorKind::ImuYawRate => {
                values[r] = predict_imu_yaw_rate(x, cfg);
                jacobian.view_mut((r, 0), (1, STATE_DIM)).copy_from(&imu_jacobian(x, cfg));
            }
            SensorKind::Encoder => {
                values.rows_mut(r, 2).copy_from(&predict_encoder(x));
                jacobian.view_mut((r, 0), (2, STATE_DIM)).copy_from(&encoder_jacobian());
            }
            SensorKind::GnssPosition => {
                values.rows_mut(r, 2).copy_from(&predict_gnss(x, offset));
                jacobian
                    .view_mut((r, 0), (2, STATE_DIM))
                    .copy_from(&gnss_jacobian(x, offset));
            }
            SensorKind::AbsolutePose => {
                values.rows_mut(r, 3).copy_from(&predict_pose(x));
                jacobian.view_mut((r, 0), (3, STATE_DIM)).copy_from(&pose_jacobian());
            }
        }
        kinds.push(kind);
        r += kind.dim();
    }
    Ok(MeasurementPrediction {
        values,
        jacobian,
        kinds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn state(values: [f64; 8]) -> StateVector {
        StateVector::from_vector(&nalgebra::SVector::from(values))
    }

    fn cfg() -> ModelConfig {
        ModelConfig {
            track_width: 0.5,
            sample_time: 1.0 / 60.0,
        }
    }

    #[test]
    fn encoder_projects_wheel_speeds() {
        assert_eq!(
            predict_encoder(&state([0.0; 8])),
            Vector2::new(0.0, 0.0)
        );
        let x = state([0.0, 0.0, 0.0, 10.0, -10.0, 0.1, 0.1, 0.0]);
        assert_eq!(predict_encoder(&x), Vector2::new(10.0, -10.0));
        let x = state([0.0, 0.0, 0.0, 3.2, 3.1, 0.1, 0.1, 0.0]);
        assert_eq!(predict_encoder(&x), Vector2::new(3.2, 3.1));
    }

    #[test]
    fn pose_projects_unwrapped_heading() {
        let x = state([1.0, 2.0, 0.5, 0.0, 0.0, 0.1, 0.1, 0.0]);
        assert_eq!(predict_pose(&x), Vector3::new(1.0, 2.0, 0.5));
        let x = state([-3.5, 7.25, 3.30, 0.0, 0.0, 0.1, 0.1, 0.0]);
        assert_eq!(predict_pose(&x), Vector3::new(-3.5, 7.25, 3.30));
    }

    #[test]
    fn gnss_antenna_displacement() {
        let x = state([1.0, 2.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.0]);
        let zero = GnssAntennaOffset::none();
        assert_eq!(predict_gnss(&x, &zero), Vector2::new(1.0, 2.0));

        let off = GnssAntennaOffset { d: 0.3, alpha: 0.0 };
        let p = predict_gnss(&x, &off);
        assert_relative_eq!(p.x, 1.3, max_relative = 1e-12);
        assert_relative_eq!(p.y, 2.0, max_relative = 1e-12);

        let x = state([1.0, 2.0, FRAC_PI_2, 0.0, 0.0, 0.1, 0.1, 0.0]);
        let p = predict_gnss(&x, &off);
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 2.3, epsilon = 1e-12);
    }

    #[test]
    fn imu_yaw_rate_from_wheels_and_bias() {
        let x = state([0.0; 8]);
        let x = StateVector {
            radius_r: 0.1,
            radius_l: 0.1,
            ..x
        };
        assert_eq!(predict_imu_yaw_rate(&x, &cfg()), 0.0);

        let x = state([0.0, 0.0, 0.0, 10.0, 10.0, 0.1, 0.1, 0.02]);
        assert_relative_eq!(predict_imu_yaw_rate(&x, &cfg()), 0.02, epsilon = 1e-12);

        let x = state([0.0, 0.0, 0.0, 10.0, -10.0, 0.1, 0.1, 0.0]);
        assert_relative_eq!(predict_imu_yaw_rate(&x, &cfg()), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn proprioceptive_stack_matches_published_structure() {
        let x = state([5.0, -2.0, 0.8, 4.0, 3.0, 0.11, 0.09, 0.01]);
        let available = SensorSet::empty()
            .with(SensorKind::ImuYawRate)
            .with(SensorKind::Encoder);
        let pred =
            stack_predictions(&x, &available, &cfg(), &GnssAntennaOffset::none()).unwrap();
        assert_eq!(pred.values.len(), 3);
        assert_eq!(pred.jacobian.nrows(), 3);
        // first three columns (X, Y, psi) exactly zero
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(pred.jacobian[(r, c)], 0.0);
            }
        }
        let t = cfg().track_width;
        assert_relative_eq!(pred.jacobian[(0, idx::OMEGA_R)], x.radius_r / t);
        assert_relative_eq!(pred.jacobian[(0, idx::OMEGA_L)], -x.radius_l / t);
        assert_relative_eq!(pred.jacobian[(0, idx::RADIUS_R)], x.omega_r / t);
        assert_relative_eq!(pred.jacobian[(0, idx::RADIUS_L)], -x.omega_l / t);
        assert_eq!(pred.jacobian[(0, idx::BIAS)], 1.0);
        assert_eq!(pred.jacobian[(1, idx::OMEGA_R)], 1.0);
        assert_eq!(pred.jacobian[(2, idx::OMEGA_L)], 1.0);
    }

    #[test]
    fn full_stack_has_eight_rows() {
        let x = state([5.0, -2.0, 0.8, 4.0, 3.0, 0.11, 0.09, 0.01]);
        let pred =
            stack_predictions(&x, &SensorSet::all(), &cfg(), &GnssAntennaOffset::none()).unwrap();
        assert_eq!(pred.values.len(), 8);
        assert_eq!(pred.kinds, SensorKind::CANONICAL_ORDER.to_vec());
        assert_eq!(pred.angle_rows(), vec![7]);
    }

    #[test]
    fn single_kind_stack_equals_predictor() {
        let x = state([5.0, -2.0, 0.8, 4.0, 3.0, 0.11, 0.09, 0.01]);
        let off = GnssAntennaOffset { d: 0.3, alpha: 0.2 };
        let only_gnss = SensorSet::empty().with(SensorKind::GnssPosition);
        let pred = stack_predictions(&x, &only_gnss, &cfg(), &off).unwrap();
        let direct = predict_gnss(&x, &off);
        assert_eq!(pred.values.as_slice(), direct.as_slice());
    }

    #[test]
    fn empty_set_rejected() {
        let x = state([0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.0]);
        let err = stack_predictions(&x, &SensorSet::empty(), &cfg(), &GnssAntennaOffset::none());
        assert_eq!(err.unwrap_err(), StackError::EmptyAvailability);
    }
}
