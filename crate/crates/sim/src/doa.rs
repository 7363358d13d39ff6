//! DoA bias from stationary-target radial velocities.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaBiasObservation {
    /// Measured DoA in degrees, including the bias.
    pub theta_meas: f64,
    /// Measured relative radial velocity.
    pub v_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoaBiasFit {
    pub v_s: f64,
    /// Degrees.
    pub theta_b: f64,
}

const MIN_SPAN_DEG: f64 = 10.0;

/// Least-squares fit of `v_t = A cos(theta) + B sin(theta)`, i.e. of
/// `v_s cos(theta + theta_b)` with `v_s = |(A, B)|` and `theta_b = atan2(-B, A)`.
pub fn estimate_doa_bias(obs: &[DoaBiasObservation]) -> Result<DoaBiasFit> {
    if obs.iter().any(|o| !o.theta_meas.is_finite() || !o.v_t.is_finite()) {
        return Err(SimError::Config("non-finite DoA observation".into()));
    }
    if obs.len() < 3 {
        return Err(SimError::InsufficientGeometry(format!("{} observations, need 3", obs.len())));
    }
    let (lo, hi) = obs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), o| (l.min(o.theta_meas), h.max(o.theta_meas)));
    if hi - lo <= MIN_SPAN_DEG {
        return Err(SimError::InsufficientGeometry(format!("angles span {:.3} deg", hi - lo)));
    }
    let (mut cc, mut cs, mut ss, mut cv, mut sv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for o in obs {
        let (s, c) = o.theta_meas.to_radians().sin_cos();
        cc += c * c;
        cs += c * s;
        ss += s * s;
        cv += c * o.v_t;
        sv += s * o.v_t;
    }
    let det = cc * ss - cs * cs;
    if det.abs() <= 1e-12 * (cc * ss).max(f64::MIN_POSITIVE) {
        return Err(SimError::InsufficientGeometry("rank-deficient normal equations".into()));
    }
    let a = (ss * cv - cs * sv) / det;
    let b = (cc * sv - cs * cv) / det;
    Ok(DoaBiasFit {
        v_s: a.hypot(b),
        theta_b: (-b).atan2(a).to_degrees(),
    })
}

/// Observations of stationary targets seen from a platform moving at `v_s`
/// with a DoA bias `theta_b`, at the given true angles.
pub fn synthesize_observations(v_s: f64, theta_b_deg: f64, true_deg: &[f64]) -> Vec<DoaBiasObservation> {
    true_deg
        .iter()
        .map(|&t| DoaBiasObservation {
            theta_meas: t - theta_b_deg,
            v_t: v_s * t.to_radians().cos(),
        })
        .collect()
}
