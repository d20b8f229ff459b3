//! Built-in scripted ego agents.

use crate::dynamics::{integrate_pose, ControlLimits, ControlSignal};
use crate::geometry::{dist, point_at, Point2};
use crate::grid::Pose;
use crate::metrics::Route;
use crate::rng::hash_unit;

use super::protocol::{Act, Message, Observe};

/// Something that answers protocol messages. Returning `None` means no reply is due.
pub trait Agent {
    fn handle(&mut self, msg: &Message) -> Option<String>;
}

/// Speed profile and steering gains for route tracing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams {
    pub cruise_speed: f64,
    pub accel: f64,
    pub decel: f64,
    pub lookahead: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            cruise_speed: 6.0,
            accel: 1.5,
            decel: 2.0,
            lookahead: 6.0,
        }
    }
}

/// Precompute controls that carry a unicycle from `start` along `route` and stop at its end.
///
/// The reference path is pursued with a lookahead point; each step's yaw rate comes from the
/// inverse unicycle relation `yaw_rate = v · κ` with the pursuit curvature `κ = 2·y / L²` and
/// `v` the step's mean speed. The returned controls are exactly what [`integrate_pose`] needs
/// to reproduce the simulated trace.
pub fn route_controls(
    route: &Route,
    start: Pose,
    speed: f64,
    params: &TraceParams,
    limits: &ControlLimits,
    dt: f64,
    ticks: usize,
) -> Vec<ControlSignal> {
    let pts = route.waypoints();
    let total = route.total_length();
    let (mut pose, mut v) = (start, speed);
    let mut out = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let s = route.progress([pose.x, pose.y]);
        let remaining = if dist([pose.x, pose.y], route.end()) < 1e-6 {
            0.0
        } else {
            (total - s).max(0.0)
        };
        // Fastest next speed from which braking still stops by the end, counting the distance
        // covered during this step.
        let half = 0.5 * params.decel * dt;
        let budget = (remaining - 0.5 * v * dt).max(0.0);
        let stop_v = (half * half + 2.0 * params.decel * budget).sqrt() - half;
        let target_v = params.cruise_speed.min(stop_v);
        let accel = ((target_v - v) / dt).clamp(-params.decel, params.accel);
        let v_mean = (v + 0.5 * accel * dt).max(0.0);
        let (target, _) = point_at(pts, s + params.lookahead);
        let target = if remaining < params.lookahead {
            // Aim past the end along the final heading so the pursuit point never collapses.
            let (_, h) = point_at(pts, total);
            let extra = params.lookahead - remaining;
            [target[0] + extra * h.cos(), target[1] + extra * h.sin()]
        } else {
            target
        };
        let local = Pose::new(target[0], target[1], 0.0, 0.0).relative_to(&pose);
        let l2 = local.x * local.x + local.y * local.y;
        let kappa = if l2 > 0.0 { 2.0 * local.y / l2 } else { 0.0 };
        let c = ControlSignal::new(accel, v_mean * kappa).clamp(limits);
        out.push(c);
        (pose, v) = integrate_pose(&pose, v, c, dt).expect("finite trace state");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum Script {
    /// Zero acceleration and yaw rate every tick.
    Zero,
    /// Fixed controls per tick; zero after the list runs out.
    Replay(Vec<ControlSignal>),
    /// Trace the route from the `init` message, planned at the first observation.
    Trace(TraceParams),
    /// Seeded uniform controls within `limits`.
    Random { seed: u64, limits: ControlLimits },
}

/// Deterministic agent following a [`Script`].
#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    pub script: Script,
    /// Reply with an unparsable record at this tick.
    pub malformed_at: Option<u64>,
    route: Vec<Point2>,
    dt: f64,
    max_ticks: u64,
    plan: Option<Vec<ControlSignal>>,
}

impl ScriptedAgent {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            malformed_at: None,
            route: Vec::new(),
            dt: crate::dynamics::DEFAULT_DT,
            max_ticks: 0,
            plan: None,
        }
    }

    pub fn control(&mut self, obs: &Observe) -> ControlSignal {
        let t = obs.tick as usize;
        match &self.script {
            Script::Zero => ControlSignal::ZERO,
            Script::Replay(c) => c.get(t).copied().unwrap_or(ControlSignal::ZERO),
            Script::Random { seed, limits } => ControlSignal::new(
                limits.max_accel * (2.0 * hash_unit(&[*seed, obs.tick, 0]) - 1.0),
                limits.max_yaw_rate * (2.0 * hash_unit(&[*seed, obs.tick, 1]) - 1.0),
            ),
            Script::Trace(params) => {
                if self.plan.is_none() {
                    let plan = Route::new(self.route.clone(), 0.0).map(|route| {
                        route_controls(
                            &route,
                            obs.ego.pose,
                            obs.ego.speed,
                            params,
                            &ControlLimits::default(),
                            self.dt,
                            (self.max_ticks as usize).saturating_sub(t),
                        )
                    });
                    self.plan = Some(plan.unwrap_or_default());
                }
                let plan = self.plan.as_ref().expect("plan set above");
                plan.get(t).copied().unwrap_or(ControlSignal::ZERO)
            }
        }
    }
}

impl Agent for ScriptedAgent {
    fn handle(&mut self, msg: &Message) -> Option<String> {
        match msg {
            Message::Init(init) => {
                self.route = init.route.clone();
                self.dt = init.dt;
                self.max_ticks = init.max_ticks;
                self.plan = None;
                None
            }
            Message::Observe(obs) => {
                if self.malformed_at == Some(obs.tick) {
                    return Some(r#"{"type":"act","accel":"NaN","yaw_rate":0}"#.to_string());
                }
                let c = self.control(obs);
                Some(
                    Message::Act(Act {
                        tick: Some(obs.tick),
                        accel: c.accel,
                        yaw_rate: c.yaw_rate,
                    })
                    .encode(),
                )
            }
            Message::Act(_) | Message::End(_) => None,
        }
    }
}
