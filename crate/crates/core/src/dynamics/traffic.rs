use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControlLimits, ControlSignal, DynamicsError, LaneGraph, LaneId};
use crate::bank::{ActorBank, ActorInstance};
use crate::geometry::OrientedRect;
use crate::grid::{Pose, VoxelLabel};
use crate::rng::hash_unit;

/// Intelligent-driver-model constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// m/s
    pub desired_speed: f64,
    /// s
    pub time_headway: f64,
    /// Comfortable deceleration, m/s².
    pub decel: f64,
    /// m/s²
    pub max_accel: f64,
    pub delta: f64,
    /// Standstill bumper gap, m.
    pub min_gap: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 8.0,
            time_headway: 1.5,
            decel: 4.0,
            max_accel: 1.5,
            delta: 4.0,
            min_gap: 2.0,
        }
    }
}

impl IdmParams {
    /// Acceleration for speed `v`, desired speed `v0`, and an optional leader
    /// `(bumper gap, leader speed)`.
    pub fn accel(&self, v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / v0).powf(self.delta);
        let interaction = match leader {
            None => 0.0,
            Some((gap, v_lead)) => {
                let dv = v - v_lead;
                let s_star = self.min_gap
                    + (v * self.time_headway
                        + v * dv / (2.0 * (self.max_accel * self.decel).sqrt()))
                    .max(0.0);
                (s_star / gap.max(1e-3)).powi(2)
            }
        };
        self.max_accel * (free - interaction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficParams {
    pub idm: IdmParams,
    pub limits: ControlLimits,
    /// Pure-pursuit lookahead is `max(lookahead_min, lookahead_time * speed)`.
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    /// Max lateral distance for binding an actor to a lane, m.
    pub lane_tolerance: f64,
    /// Leaders farther ahead than this are ignored, m.
    pub horizon: f64,
    /// Per-actor desired-speed spread as a fraction (seeded).
    pub speed_jitter: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            limits: ControlLimits::default(),
            lookahead_min: 4.0,
            lookahead_time: 1.0,
            lane_tolerance: 2.0,
            horizon: 100.0,
            speed_jitter: 0.0,
        }
    }
}

/// Actor state as seen by the traffic controller. Actors with `controlled == false`
/// (such as the ego) act only as leaders.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficActor {
    pub instance_id: u32,
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
    pub desired_speed: Option<f64>,
    pub controlled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvironmentControls {
    pub controls: BTreeMap<u32, ControlSignal>,
    /// Controlled actors that could not be bound to a lane; they receive zero control.
    pub off_lane: Vec<u32>,
}

/// Nearest leader ahead along the lane chain as `(bumper gap, speed)`. A dead end within the
/// horizon acts as a stopped leader of zero length.
fn find_leader(
    me: &TrafficActor,
    lane: LaneId,
    s: f64,
    bound: &[(usize, LaneId, f64)],
    actors: &[TrafficActor],
    lanes: &LaneGraph,
    horizon: f64,
) -> Option<(f64, f64)> {
    let mut base = -s;
    let mut id = lane;
    let mut best: Option<(f64, f64)> = None;
    loop {
        let l = lanes.get(id)?;
        for &(idx, on, s_other) in bound {
            let other = &actors[idx];
            if on != id || other.instance_id == me.instance_id {
                continue;
            }
            let along = base + s_other;
            if along <= 0.0 || along > horizon {
                continue;
            }
            let gap = along - (me.length + other.length) / 2.0;
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, other.speed));
            }
        }
        if best.is_some() {
            return best;
        }
        base += l.length();
        if base > horizon {
            return None;
        }
        match l.successors.first() {
            Some(next) => id = *next,
            None => return Some((base - me.length / 2.0, 0.0)),
        }
    }
}

/// Controls for every controlled actor: IDM car-following along its lane plus pure-pursuit
/// steering toward a lookahead point on the lane.
pub fn environment_step(
    actors: &[TrafficActor],
    lanes: &LaneGraph,
    params: &TrafficParams,
    seed: u64,
) -> EnvironmentControls {
    let bound: Vec<(usize, LaneId, f64)> = actors
        .iter()
        .enumerate()
        .filter_map(|(idx, a)| {
            lanes
                .locate(&a.pose, params.lane_tolerance)
                .map(|(lane, s)| (idx, lane, s))
        })
        .collect();
    let mut out = EnvironmentControls::default();
    for (idx, actor) in actors.iter().enumerate() {
        if !actor.controlled {
            continue;
        }
        let Some(&(_, lane, s)) = bound.iter().find(|b| b.0 == idx) else {
            out.off_lane.push(actor.instance_id);
            out.controls.insert(actor.instance_id, ControlSignal::ZERO);
            continue;
        };
        let mut v0 = actor.desired_speed.unwrap_or(params.idm.desired_speed);
        if params.speed_jitter > 0.0 {
            let u = hash_unit(&[seed, actor.instance_id as u64]);
            v0 *= 1.0 + params.speed_jitter * (2.0 * u - 1.0);
        }
        let leader = find_leader(actor, lane, s, &bound, actors, lanes, params.horizon);
        let accel = params.idm.accel(actor.speed, v0.max(0.1), leader);

        let ahead = params
            .lookahead_min
            .max(params.lookahead_time * actor.speed);
        let target = lanes
            .advance(lane, s, ahead)
            .map(|(p, _)| p)
            .unwrap_or_else(|| {
                let (p, h) = lanes.get(lane).expect("bound lane exists").at(s);
                [p[0] + ahead * h.cos(), p[1] + ahead * h.sin()]
            });
        let local = Pose::new(target[0], target[1], 0.0, 0.0).relative_to(&actor.pose);
        let l2 = local.x * local.x + local.y * local.y;
        let curvature = if l2 > 0.0 { 2.0 * local.y / l2 } else { 0.0 };
        let c = ControlSignal::new(accel, actor.speed * curvature);
        let c = if c.is_finite() {
            c
        } else {
            ControlSignal::ZERO
        };
        out.controls
            .insert(actor.instance_id, c.clamp(&params.limits));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpawnParams {
    /// Classes drawn uniformly per actor.
    pub classes: Vec<VoxelLabel>,
    /// Minimum center spacing along a lane, m.
    pub min_gap: f64,
    pub attempts_per_actor: usize,
    pub initial_speed: f64,
    /// World z for spawned poses.
    pub z: f64,
    /// Footprints spawned actors must not touch (e.g. the ego start).
    pub keep_clear: Vec<OrientedRect>,
}

impl Default for SpawnParams {
    fn default() -> Self {
        Self {
            classes: vec![VoxelLabel::CAR],
            min_gap: 8.0,
            attempts_per_actor: 200,
            initial_speed: 0.0,
            z: 0.0,
            keep_clear: Vec::new(),
        }
    }
}

/// Seeded rejection sampling of `count` actors on lane points. Instance IDs run `1..=count`
/// in placement order.
pub fn spawn_actors(
    lanes: &LaneGraph,
    bank: &ActorBank,
    count: usize,
    seed: u64,
    params: &SpawnParams,
) -> Result<Vec<ActorInstance>, DynamicsError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if params.classes.is_empty() || lanes.is_empty() {
        return Err(DynamicsError::Spawn {
            placed: 0,
            requested: count,
        });
    }
    let lane_list: Vec<_> = lanes.lanes().collect();
    let total: f64 = lane_list.iter().map(|l| l.length()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (lane, s, footprint)
    let mut placed: Vec<(LaneId, f64, OrientedRect)> = Vec::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= params.attempts_per_actor * count {
            return Err(DynamicsError::Spawn {
                placed: out.len(),
                requested: count,
            });
        }
        attempts += 1;
        let mut u = rng.gen_range(0.0..total);
        let lane = lane_list
            .iter()
            .find(|l| {
                u -= l.length();
                u < 0.0
            })
            .unwrap_or(&lane_list[lane_list.len() - 1]);
        let s = rng.gen_range(0.0..lane.length());
        let class = params.classes[rng.gen_range(0..params.classes.len())];
        let asset = bank.sample_by_category(class, 1, rng.gen())?[0];
        let (p, heading) = lane.at(s);
        let rect = OrientedRect::new(p, asset.footprint[0], asset.footprint[1], heading);
        let along_ok = placed.iter().all(|&(other, s_other, _)| {
            let gap = if other == lane.id {
                (s - s_other).abs()
            } else if lane.successors.contains(&other) {
                lane.length() - s + s_other
            } else if lanes
                .get(other)
                .is_some_and(|o| o.successors.contains(&lane.id))
            {
                lanes.get(other).map_or(0.0, |o| o.length()) - s_other + s
            } else {
                f64::INFINITY
            };
            gap >= params.min_gap
        });
        let clear = placed.iter().all(|(_, _, r)| !rect.intersects(r))
            && params.keep_clear.iter().all(|r| !rect.intersects(r));
        if !(along_ok && clear) {
            continue;
        }
        placed.push((lane.id, s, rect));
        out.push(ActorInstance {
            instance_id: out.len() as u32 + 1,
            asset_id: asset.asset_id.clone(),
            pose: Pose::new(p[0], p[1], params.z, heading),
            speed: params.initial_speed,
        });
    }
    Ok(out)
}
