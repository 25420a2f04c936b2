//! Open-loop spline schedule plus linear state feedback.
//!
//! Parameter layout: `knots` offsets per joint (joint-major), then a 4x4
//! gain matrix (row per joint) on `(z - H, phi - pi/2, z_dot, phi_dot)`.
//! Joint targets are `nominal + spline(t) + K * e`, clamped inside the limits.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::model::{PlanarState, NA, PITCH, Z};

/// Feedback features per step.
pub const FEATURES: usize = 4;

/// Saturation of each feedback feature (m, rad, m/s, rad/s).
pub const FEATURE_CLIP: [f64; FEATURES] = [0.1, 0.3, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPolicy {
    pub knots: usize,
    /// Time of the last knot (s); the schedule holds afterwards.
    pub horizon: f64,
    pub params: Vec<f64>,
}

impl PlanarPolicy {
    pub fn dims(knots: usize) -> usize {
        NA * knots + NA * FEATURES
    }

    pub fn zeros(knots: usize, horizon: f64) -> Self {
        Self {
            knots,
            horizon,
            params: vec![0.0; Self::dims(knots)],
        }
    }

    pub fn from_params(knots: usize, horizon: f64, params: &[f64]) -> Self {
        assert_eq!(params.len(), Self::dims(knots), "parameter vector has the wrong length");
        Self {
            knots,
            horizon,
            params: params.to_vec(),
        }
    }

    /// Cubic Hermite (Catmull-Rom) interpolation through the joint's knots.
    pub fn schedule(&self, joint: usize, t: f64) -> f64 {
        let y = &self.params[joint * self.knots..(joint + 1) * self.knots];
        let n = self.knots;
        if n == 1 || t <= 0.0 {
            return y[0];
        }
        if t >= self.horizon {
            return y[n - 1];
        }
        let dt = self.horizon / (n - 1) as f64;
        let i = ((t / dt) as usize).min(n - 2);
        let u = (t - i as f64 * dt) / dt;
        let tangent = |k: usize| {
            if k == 0 {
                y[1] - y[0]
            } else if k == n - 1 {
                y[n - 1] - y[n - 2]
            } else {
                0.5 * (y[k + 1] - y[k - 1])
            }
        };
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * y[i]
            + (u3 - 2.0 * u2 + u) * tangent(i)
            + (-2.0 * u3 + 3.0 * u2) * y[i + 1]
            + (u3 - u2) * tangent(i + 1)
    }

    /// Feedback inputs, saturated so the feedback acts as a local balance
    /// correction and leaves the open-loop swing alone far from upright.
    pub fn features(state: &PlanarState, target_height: f64) -> [f64; FEATURES] {
        [
            (state.q[Z] - target_height).clamp(-FEATURE_CLIP[0], FEATURE_CLIP[0]),
            (state.q[PITCH] - FRAC_PI_2).clamp(-FEATURE_CLIP[1], FEATURE_CLIP[1]),
            state.v[Z].clamp(-FEATURE_CLIP[2], FEATURE_CLIP[2]),
            state.v[PITCH].clamp(-FEATURE_CLIP[3], FEATURE_CLIP[3]),
        ]
    }

    /// Joint targets at time `t`, kept `margin` inside `limits`.
    pub fn targets(
        &self,
        t: f64,
        state: &PlanarState,
        nominal: &[f64; NA],
        limits: &[[f64; 2]; NA],
        target_height: f64,
        margin: f64,
    ) -> [f64; NA] {
        let e = Self::features(state, target_height);
        let gains = &self.params[NA * self.knots..];
        std::array::from_fn(|j| {
            let fb: f64 = (0..FEATURES).map(|k| gains[j * FEATURES + k] * e[k]).sum();
            let raw = nominal[j] + self.schedule(j, t) + fb;
            raw.clamp(limits[j][0] + margin, limits[j][1] - margin)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_passes_through_knots_and_holds() {
        let mut p = PlanarPolicy::zeros(4, 0.9);
        p.params[..4].copy_from_slice(&[0.0, 1.0, -0.5, 0.25]);
        for (k, y) in [0.0, 1.0, -0.5, 0.25].iter().enumerate() {
            assert!((p.schedule(0, k as f64 * 0.3) - y).abs() < 1e-12);
        }
        assert_eq!(p.schedule(0, 5.0), 0.25);
        assert_eq!(p.schedule(1, 0.4), 0.0);
    }
}
