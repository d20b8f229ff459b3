//! Actor kinematics and the built-in traffic controller.

mod lanes;
mod traffic;

pub use lanes::{Lane, LaneGraph, LaneId};
pub use traffic::{
    environment_step, spawn_actors, EnvironmentControls, IdmParams, SpawnParams, TrafficActor,
    TrafficParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Pose;

pub const DEFAULT_DT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("placed {placed} of {requested} actors under the spacing constraint")]
    Spawn { placed: usize, requested: usize },
    #[error("lane graph: {0}")]
    Lanes(String),
    #[error("lane file line {line}: {reason}")]
    LaneFile { line: usize, reason: String },
    #[error(transparent)]
    Bank(#[from] crate::bank::BankError),
}

/// Longitudinal acceleration (m/s²) and yaw rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub accel: f64,
    pub yaw_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLimits {
    pub max_accel: f64,
    pub max_yaw_rate: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            max_accel: 8.0,
            max_yaw_rate: 1.5,
        }
    }
}

impl ControlSignal {
    pub const ZERO: ControlSignal = ControlSignal {
        accel: 0.0,
        yaw_rate: 0.0,
    };

    pub fn new(accel: f64, yaw_rate: f64) -> Self {
        Self { accel, yaw_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.yaw_rate.is_finite()
    }

    pub fn clamp(self, limits: &ControlLimits) -> Self {
        Self {
            accel: self.accel.clamp(-limits.max_accel, limits.max_accel),
            yaw_rate: self
                .yaw_rate
                .clamp(-limits.max_yaw_rate, limits.max_yaw_rate),
        }
    }

    pub fn within(&self, limits: &ControlLimits) -> bool {
        self.accel.abs() <= limits.max_accel && self.yaw_rate.abs() <= limits.max_yaw_rate
    }
}

/// `∫₀ᵀ (v0 + a·t)·e^{iωt} dt` as (real, imag).
fn velocity_integral(v0: f64, a: f64, w: f64, t: f64) -> (f64, f64) {
    if (w * t).abs() < 1e-2 {
        // Σ (iω)ⁿ/n! · (v0·Tⁿ⁺¹/(n+1) + a·Tⁿ⁺²/(n+2))
        let (mut re, mut im) = (0.0, 0.0);
        let mut coeff = 1.0; // ωⁿ/n!
        for n in 0..12 {
            let term =
                coeff * (v0 * t.powi(n + 1) / (n + 1) as f64 + a * t.powi(n + 2) / (n + 2) as f64);
            match n % 4 {
                0 => re += term,
                1 => im += term,
                2 => re -= term,
                _ => im -= term,
            }
            coeff *= w / (n + 1) as f64;
        }
        return (re, im);
    }
    let (s, c) = (w * t).sin_cos();
    // v0·(e^{iωT} − 1)/(iω) + a·(T·e^{iωT}/(iω) + (e^{iωT} − 1)/ω²)
    let re = v0 * s / w + a * (t * s / w + (c - 1.0) / (w * w));
    let im = v0 * (1.0 - c) / w + a * (-t * c / w + s / (w * w));
    (re, im)
}

/// Advance a unicycle by `dt` under constant acceleration and yaw rate.
///
/// Speed is floored at zero: if braking would reverse the actor it stops at `-speed/accel`
/// and stays put for the rest of the step while the heading keeps turning.
pub fn integrate_pose(
    pose: &Pose,
    speed: f64,
    c: ControlSignal,
    dt: f64,
) -> Result<(Pose, f64), DynamicsError> {
    if !pose.is_finite() {
        return Err(DynamicsError::NonFinite("pose"));
    }
    if !speed.is_finite() {
        return Err(DynamicsError::NonFinite("speed"));
    }
    if !c.is_finite() {
        return Err(DynamicsError::NonFinite("control"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidDt(dt));
    }
    if speed < 0.0 {
        return Err(DynamicsError::NegativeSpeed(speed));
    }
    let (moving, end_speed) = if c.accel < 0.0 && speed + c.accel * dt < 0.0 {
        (-speed / c.accel, 0.0)
    } else {
        (dt, speed + c.accel * dt)
    };
    let (lx, ly) = velocity_integral(speed, c.accel, c.yaw_rate, moving);
    let (s, co) = pose.yaw.sin_cos();
    let next = Pose::new(
        pose.x + co * lx - s * ly,
        pose.y + s * lx + co * ly,
        pose.z,
        pose.yaw + c.yaw_rate * dt,
    );
    Ok((next, end_speed.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_control_is_identity() {
        let p = Pose::new(3.0, -2.0, 1.0, 0.7);
        let (q, v) = integrate_pose(&p, 0.0, ControlSignal::ZERO, 0.5).unwrap();
        assert_eq!(q, p);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn constant_accel_from_rest() {
        let (q, v) =
            integrate_pose(&Pose::default(), 0.0, ControlSignal::new(1.0, 0.0), 0.5).unwrap();
        assert!((q.x - 0.125).abs() < 1e-15);
        assert_eq!(q.y, 0.0);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn yaw_advances_by_rate_times_dt() {
        let (q, _) =
            integrate_pose(&Pose::default(), 2.0, ControlSignal::new(0.0, PI), 0.5).unwrap();
        assert_eq!(q.yaw, FRAC_PI_2);
        // Quarter circle of radius v/ω.
        let r = 2.0 / PI;
        assert!((q.x - r).abs() < 1e-12 && (q.y - r).abs() < 1e-12);
    }

    #[test]
    fn braking_stops_at_zero() {
        let (q, v) =
            integrate_pose(&Pose::default(), 2.0, ControlSignal::new(-8.0, 0.0), 0.5).unwrap();
        assert_eq!(v, 0.0);
        // Stops after 0.25 s having covered v²/(2|a|).
        assert!((q.x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        for w in [0.0199, 0.02, 0.0201] {
            let a = velocity_integral(3.0, 1.5, w, 0.5);
            let b = velocity_integral(3.0, 1.5, w * (1.0 + 1e-12), 0.5);
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Pose::default();
        assert!(integrate_pose(&p, f64::NAN, ControlSignal::ZERO, 0.5).is_err());
        assert!(integrate_pose(&p, 1.0, ControlSignal::new(f64::INFINITY, 0.0), 0.5).is_err());
        assert!(matches!(
            integrate_pose(&p, 1.0, ControlSignal::ZERO, 0.0),
            Err(DynamicsError::InvalidDt(_))
        ));
        assert!(integrate_pose(&Pose { x: f64::NAN, ..p }, 1.0, ControlSignal::ZERO, 0.5).is_err());
    }

    #[test]
    fn clamp_respects_limits() {
        let l = ControlLimits::default();
        let c = ControlSignal::new(-20.0, 3.0).clamp(&l);
        assert_eq!(c, ControlSignal::new(-8.0, 1.5));
        assert!(c.within(&l));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn speed_never_negative(v in 0.0..30.0f64, a in -8.0..8.0f64, w in -1.5..1.5f64, dt in 0.01..2.0f64) {
            let (_, v2) = integrate_pose(&Pose::default(), v, ControlSignal::new(a, w), dt).unwrap();
            prop_assert!(v2 >= 0.0);
        }

        #[test]
        fn straight_line_displacement(v in 0.0..30.0f64, a in 0.0..8.0f64, dt in 0.01..2.0f64, yaw in -3.0..3.0f64) {
            let p = Pose::new(1.0, 2.0, 0.0, yaw);
            let (q, _) = integrate_pose(&p, v, ControlSignal::new(a, 0.0), dt).unwrap();
            let d = (q.x - p.x).hypot(q.y - p.y);
            let want = v * dt + 0.5 * a * dt * dt;
            prop_assert!((d - want).abs() <= 1e-9 * want.max(1e-12));
        }
    }
}
