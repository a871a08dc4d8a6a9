//! Uncertain differential-drive kinematic model: state vector, discrete state
//! transition and its analytic linearization.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

/// Number of estimated states.
pub const STATE_DIM: usize = 8;

/// Indices of the individual states inside the 8-vector.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const PSI: usize = 2;
    pub const OMEGA_R: usize = 3;
    pub const OMEGA_L: usize = 4;
    pub const RADIUS_R: usize = 5;
    pub const RADIUS_L: usize = 6;
    pub const BIAS: usize = 7;
}

/// The 8 estimated states: planar pose, wheel angular speeds, wheel radii and
/// IMU yaw-rate bias. Heading is stored unbounded; wrapping is applied only to
/// innovations and error metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// Position east [m].
    pub x: f64,
    /// Position north [m].
    pub y: f64,
    /// Heading [rad], unbounded.
    pub psi: f64,
    /// Right wheel angular speed [rad/s].
    pub omega_r: f64,
    /// Left wheel angular speed [rad/s].
    pub omega_l: f64,
    /// Right wheel radius [m].
    pub radius_r: f64,
    /// Left wheel radius [m].
    pub radius_l: f64,
    /// IMU yaw-rate bias [rad/s].
    pub bias: f64,
}

impl StateVector {
    pub fn as_vector(&self) -> SVector<f64, STATE_DIM> {
        SVector::from([
            self.x,
            self.y,
            self.psi,
            self.omega_r,
            self.omega_l,
            self.radius_r,
            self.radius_l,
            self.bias,
        ])
    }

    pub fn from_vector(v: &SVector<f64, STATE_DIM>) -> Self {
        Self {
            x: v[idx::X],
            y: v[idx::Y],
            psi: v[idx::PSI],
            omega_r: v[idx::OMEGA_R],
            omega_l: v[idx::OMEGA_L],
            radius_r: v[idx::RADIUS_R],
            radius_l: v[idx::RADIUS_L],
            bias: v[idx::BIAS],
        }
    }

    /// All fields finite and wheel radii strictly positive.
    pub fn is_valid(&self) -> bool {
        self.as_vector().iter().all(|v| v.is_finite()) && self.radius_r > 0.0 && self.radius_l > 0.0
    }

    /// Forward body speed implied by the current wheel speeds and radii [m/s].
    pub fn body_speed(&self) -> f64 {
        0.5 * (self.omega_r * self.radius_r + self.omega_l * self.radius_l)
    }

    /// Yaw rate implied by the wheel speeds and radii, bias excluded [rad/s].
    pub fn wheel_yaw_rate(&self, track_width: f64) -> f64 {
        (self.omega_r * self.radius_r - self.omega_l * self.radius_l) / track_width
    }
}

/// Vehicle geometry and filter timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Wheel separation [m].
    pub track_width: f64,
    /// Filter step period [s].
    pub sample_time: f64,
}

impl ModelConfig {
    pub fn is_valid(&self) -> bool {
        self.track_width > 0.0 && self.sample_time > 0.0
    }
}

/// One explicit-Euler step of the midpoint-speed kinematics. Wheel speeds,
/// radii and bias evolve statically.
pub fn predict_state(x: &StateVector, cfg: &ModelConfig) -> StateVector {
    let v = x.body_speed();
    let yaw_rate = x.wheel_yaw_rate(cfg.track_width);
    StateVector {
        x: x.x + v * x.psi.cos() * cfg.sample_time,
        y: x.y + v * x.psi.sin() * cfg.sample_time,
        psi: x.psi + yaw_rate * cfg.sample_time,
        ..*x
    }
}

/// Analytic Jacobian of [`predict_state`] with respect to the state.
pub fn state_jacobian(x: &StateVector, cfg: &ModelConfig) -> SMatrix<f64, STATE_DIM, STATE_DIM> {
    let ts = cfg.sample_time;
    let t = cfg.track_width;
    let (sin_psi, cos_psi) = x.psi.sin_cos();
    let v = x.body_speed();

    let mut a = SMatrix::<f64, STATE_DIM, STATE_DIM>::identity();
    a[(idx::X, idx::PSI)] = -v * sin_psi * ts;
    a[(idx::X, idx::OMEGA_R)] = 0.5 * x.radius_r * cos_psi * ts;
    a[(idx::X, idx::OMEGA_L)] = 0.5 * x.radius_l * cos_psi * ts;
    a[(idx::X, idx::RADIUS_R)] = 0.5 * x.omega_r * cos_psi * ts;
    a[(idx::X, idx::RADIUS_L)] = 0.5 * x.omega_l * cos_psi * ts;

    a[(idx::Y, idx::PSI)] = v * cos_psi * ts;
    a[(idx::Y, idx::OMEGA_R)] = 0.5 * x.radius_r * sin_psi * ts;
    a[(idx::Y, idx::OMEGA_L)] = 0.5 * x.radius_l * sin_psi * ts;
    a[(idx::Y, idx::RADIUS_R)] = 0.5 * x.omega_r * sin_psi * ts;
    a[(idx::Y, idx::RADIUS_L)] = 0.5 * x.omega_l * sin_psi * ts;

    a[(idx::PSI, idx::OMEGA_R)] = x.radius_r / t * ts;
    a[(idx::PSI, idx::OMEGA_L)] = -x.radius_l / t * ts;
    a[(idx::PSI, idx::RADIUS_R)] = x.omega_r / t * ts;
    a[(idx::PSI, idx::RADIUS_L)] = -x.omega_l / t * ts;
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(values: [f64; 8]) -> StateVector {
        StateVector::from_vector(&SVector::from(values))
    }

    fn cfg() -> ModelConfig {
        ModelConfig {
            track_width: 0.5,
            sample_time: 1.0 / 60.0,
        }
    }

    #[test]
    fn zero_speed_is_fixed_point() {
        let x = state([0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.0]);
        assert_eq!(predict_state(&x, &cfg()), x);
    }

    #[test]
    fn straight_motion() {
        let x = state([0.0, 0.0, 0.0, 10.0, 10.0, 0.1, 0.1, 0.0]);
        let next = predict_state(&x, &cfg());
        assert_relative_eq!(next.x, 1.0 / 60.0, max_relative = 1e-12);
        assert_eq!(next.y, 0.0);
        assert_eq!(next.psi, 0.0);
        assert_eq!(next.omega_r, 10.0);
        assert_eq!(next.radius_r, 0.1);
    }

    #[test]
    fn pure_rotation() {
        let x = state([0.0, 0.0, 0.0, 10.0, -10.0, 0.1, 0.1, 0.0]);
        let next = predict_state(&x, &cfg());
        assert_eq!(next.x, 0.0);
        assert_eq!(next.y, 0.0);
        assert_relative_eq!(next.psi, 4.0 / 60.0, max_relative = 1e-12);
    }

    #[test]
    fn static_states_bit_identical() {
        let x = state([1.0, -2.0, 0.7, 3.3, -1.1, 0.103, 0.097, 0.012]);
        let next = predict_state(&x, &cfg());
        assert_eq!(next.omega_r.to_bits(), x.omega_r.to_bits());
        assert_eq!(next.omega_l.to_bits(), x.omega_l.to_bits());
        assert_eq!(next.radius_r.to_bits(), x.radius_r.to_bits());
        assert_eq!(next.radius_l.to_bits(), x.radius_l.to_bits());
        assert_eq!(next.bias.to_bits(), x.bias.to_bits());
    }

    #[test]
    fn jacobian_hand_values() {
        let x0 = state([0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.0]);
        let a0 = state_jacobian(&x0, &cfg());
        assert_eq!(a0[(idx::X, idx::PSI)], 0.0);

        let x1 = state([0.0, 0.0, 0.0, 10.0, 10.0, 0.1, 0.1, 0.0]);
        let a1 = state_jacobian(&x1, &cfg());
        assert_relative_eq!(a1[(idx::X, idx::OMEGA_R)], 0.05 / 60.0, max_relative = 1e-12);
        // static rows are identity rows
        for row in idx::OMEGA_R..STATE_DIM {
            for col in 0..STATE_DIM {
                assert_eq!(a1[(row, col)], if row == col { 1.0 } else { 0.0 });
            }
        }
    }
}
