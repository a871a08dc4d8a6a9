//! Planar rigid alignment between absolute-pose reference frames, estimated in
//! closed form from paired trajectory segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wrap_to_pi;

/// A timestamped planar trajectory with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedPath {
    pub samples: Vec<TimedPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TimedPath {
    pub fn new(samples: Vec<TimedPoint>) -> Result<Self, AlignError> {
        if samples.len() < 2 {
            return Err(AlignError::TooFewSamples { got: samples.len() });
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(AlignError::NonMonotonicTime);
        }
        Ok(Self { samples })
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// Linear interpolation at `t`; `None` outside the time range.
    pub fn interpolate(&self, t: f64) -> Option<(f64, f64)> {
        let (start, end) = self.time_range();
        if t < start || t > end {
            return None;
        }
        let i = match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Some((self.samples[i].x, self.samples[i].y)),
            Err(i) => i,
        };
        let a = &self.samples[i - 1];
        let b = &self.samples[i];
        let w = (t - a.t) / (b.t - a.t);
        Some((a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)))
    }

    /// Restricts the path to samples with `t0 <= t <= t1`.
    pub fn windowed(&self, t0: f64, t1: f64) -> Result<Self, AlignError> {
        Self::new(
            self.samples
                .iter()
                .copied()
                .filter(|s| s.t >= t0 && s.t <= t1)
                .collect(),
        )
    }
}

/// Planar rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    /// Rotation [rad], in (-pi, pi].
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform2D {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn apply_point(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (
            c * p.0 - s * p.1 + self.tx,
            s * p.0 + c * p.1 + self.ty,
        )
    }

    /// Transforms a pose; the heading is incremented by theta and re-wrapped.
    pub fn apply_pose(&self, pose: (f64, f64, f64)) -> (f64, f64, f64) {
        let (x, y) = self.apply_point((pose.0, pose.1));
        (x, y, wrap_to_pi(pose.2 + self.theta))
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self {
            theta: wrap_to_pi(-self.theta),
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("path needs at least 2 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("path timestamps must be strictly increasing")]
    NonMonotonicTime,
    #[error("no temporal overlap between the two paths")]
    NoOverlap,
    #[error("association produced {got} pairs, need at least 2")]
    TooFewPairs { got: usize },
    #[error("degenerate point set: all points coincident, rotation undefined")]
    Degenerate,
}

/// Pairs each sample of `a` inside the temporal overlap with `b` linearly
/// interpolated at the same timestamp.
pub fn associate(a: &TimedPath, b: &TimedPath) -> Result<Vec<((f64, f64), (f64, f64))>, AlignError> {
    let (a0, a1) = a.time_range();
    let (b0, b1) = b.time_range();
    let start = a0.max(b0);
    let end = a1.min(b1);
    if end < start {
        return Err(AlignError::NoOverlap);
    }
    let pairs: Vec<_> = a
        .samples
        .iter()
        .filter(|s| s.t >= start && s.t <= end)
        .filter_map(|s| b.interpolate(s.t).map(|q| ((s.x, s.y), q)))
        .collect();
    if pairs.len() < 2 {
        return Err(AlignError::TooFewPairs { got: pairs.len() });
    }
    Ok(pairs)
}

/// Closed-form least-squares rigid transform mapping the second point of each
/// pair onto the first (scale fixed at 1): centroids are removed, the rotation
/// comes from the correlation terms and the translation from the rotated
/// centroid difference.
pub fn horn_align(pairs: &[((f64, f64), (f64, f64))]) -> Result<RigidTransform2D, AlignError> {
    if pairs.len() < 2 {
        return Err(AlignError::TooFewPairs { got: pairs.len() });
    }
    let n = pairs.len() as f64;
    let (mut cax, mut cay, mut cbx, mut cby) = (0.0, 0.0, 0.0, 0.0);
    for ((ax, ay), (bx, by)) in pairs {
        cax += ax;
        cay += ay;
        cbx += bx;
        cby += by;
    }
    cax /= n;
    cay /= n;
    cbx /= n;
    cby /= n;

    // correlation terms of the centered points
    let mut dot = 0.0;
    let mut cross = 0.0;
    let mut spread = 0.0;
    for ((ax, ay), (bx, by)) in pairs {
        let (pax, pay) = (ax - cax, ay - cay);
        let (pbx, pby) = (bx - cbx, by - cby);
        dot += pax * pbx + pay * pby;
        cross += pay * pbx - pax * pby;
        spread += (pax * pax + pay * pay).max(pbx * pbx + pby * pby);
    }
    if dot.hypot(cross) <= 1e-15 * spread.max(1e-300) {
        return Err(AlignError::Degenerate);
    }

    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Ok(RigidTransform2D {
        theta,
        tx: cax - (c * cbx - s * cby),
        ty: cay - (s * cbx + c * cby),
    })
}

/// Mean squared point error of a candidate transform over the pairs.
pub fn alignment_mse(tf: &RigidTransform2D, pairs: &[((f64, f64), (f64, f64))]) -> f64 {
    let n = pairs.len() as f64;
    pairs
        .iter()
        .map(|(a, b)| {
            let p = tf.apply_point(*b);
            let (dx, dy) = (a.0 - p.0, a.1 - p.1);
            dx * dx + dy * dy
        })
        .sum::<f64>()
        / n
}
