//! Sensor-fusion localization for differential-drive robots.
//!
//! The filter fuses wheel encoders, an IMU yaw-rate channel and up to two
//! absolute pose sources (GNSS position, map-based pose) in an EKF built on an
//! uncertain kinematic model that estimates the wheel radii and the gyro bias
//! online. Measurements arrive asynchronously at different rates; the filter
//! runs on a fixed grid and corrects with whatever subset is fresh, restricting
//! the correction to the observable states when no absolute source is present.

pub mod frame_alignment;
pub mod fusion_filter;
pub mod measurement_models;
pub mod sim_harness;
pub mod state_model;

/// Wraps an angle to the interval (-pi, pi].
pub fn wrap_to_pi(angle: f64) -> f64 {
    use std::f64::consts::PI;
    PI - (PI - angle).rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::wrap_to_pi;
    use std::f64::consts::PI;

    #[test]
    fn wrap_covers_boundaries() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert_eq!(wrap_to_pi(-PI), PI);
        assert_eq!(wrap_to_pi(0.0), 0.0);
        assert!((wrap_to_pi(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_to_pi(2.0 * PI)).abs() < 1e-12);
        for k in -10..10 {
            let a = 0.3 + 2.0 * PI * k as f64;
            assert!((wrap_to_pi(a) - 0.3).abs() < 1e-9);
        }
    }
}
