//! Per-step safety and compliance signals and episode driving scores.
//!
//! `pdms = nc · dac · (w_ttc·ttc + w_comfort·comfort + w_ep·ep) / (w_ttc + w_comfort + w_ep)`
//! and `ads = pdms · rc`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::WorldState;
use crate::geometry::{
    dist, polyline_length, project_onto_polyline, time_of_impact, OrientedRect, Point2,
};
use crate::grid::{Pose, VoxelLabel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ego at ({x:.2}, {y:.2}) is outside the world grid at tick {tick}")]
    EgoOffGrid { tick: u64, x: f64, y: f64 },
    #[error("no step records to aggregate")]
    EmptyEpisode,
    #[error("route needs at least two distinct finite waypoints")]
    InvalidRoute,
    #[error("trajectory has {trajectory} poses but the replay has {replay} ticks")]
    LengthMismatch { trajectory: usize, replay: usize },
    #[error("results line {line}: {reason}")]
    Results { line: usize, reason: String },
}

/// Polyline the ego should follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    waypoints: Vec<Point2>,
    total_length: f64,
    /// Distance to the final waypoint that counts as completing the route, m.
    pub tolerance: f64,
}

impl Route {
    pub const DEFAULT_TOLERANCE: f64 = 2.0;

    pub fn new(waypoints: Vec<Point2>, tolerance: f64) -> Result<Self, MetricsError> {
        if waypoints.len() < 2 || waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricsError::InvalidRoute);
        }
        let total_length = polyline_length(&waypoints);
        if !(total_length.is_finite() && total_length > 0.0)
            || !(tolerance.is_finite() && tolerance >= 0.0)
        {
            return Err(MetricsError::InvalidRoute);
        }
        Ok(Self {
            waypoints,
            total_length,
            tolerance,
        })
    }

    pub fn waypoints(&self) -> &[Point2] {
        &self.waypoints
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn start(&self) -> Point2 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Point2 {
        self.waypoints[self.waypoints.len() - 1]
    }

    /// Arc length of the closest route point.
    pub fn progress(&self, p: Point2) -> f64 {
        project_onto_polyline(&self.waypoints, p).0
    }

    /// Plain-text form: one `x y` waypoint per line; `#` starts a comment line.
    pub fn parse(text: &str, tolerance: f64) -> Result<Self, MetricsError> {
        let mut pts = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| MetricsError::InvalidRoute)?;
            match xy[..] {
                [x, y] => pts.push([x, y]),
                _ => return Err(MetricsError::InvalidRoute),
            }
        }
        Self::new(pts, tolerance)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub ttc: f64,
    pub comfort: f64,
    pub ep: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            ttc: 5.0,
            comfort: 2.0,
            ep: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// s
    pub ttc_threshold: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s³
    pub max_jerk: f64,
    pub weights: ScoreWeights,
    /// Progress that earns full EP credit, m. Defaults to the route length.
    pub ep_reference: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 0.95,
            max_accel: 4.0,
            max_jerk: 8.0,
            weights: ScoreWeights::default(),
            ep_reference: None,
        }
    }
}

/// Ego state for one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    pub speed: f64,
    /// Longitudinal acceleration applied over the step that led here, m/s².
    pub accel: f64,
    /// (length, width, height), m.
    pub footprint: [f64; 3],
}

impl EgoState {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect::new(
            [self.pose.x, self.pose.y],
            self.footprint[0],
            self.footprint[1],
            self.pose.yaw,
        )
    }

    pub fn velocity(&self) -> Point2 {
        let [hx, hy] = self.pose.heading();
        [self.speed * hx, self.speed * hy]
    }
}

/// JSON has no infinity; an unbounded time-to-collision is written as `null`.
mod ttc_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Signals computed for one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tick: u64,
    pub time: f64,
    pub collision: bool,
    pub on_drivable: bool,
    /// s; infinite when no actor is on a closing course.
    #[serde(with = "ttc_serde")]
    pub min_ttc: f64,
    /// Arc length along the route, m.
    pub progress: f64,
    pub accel: f64,
    pub position: Point2,
}

/// Labels that never block the ego: road, sidewalk, terrain and other flat ground.
fn is_obstacle(l: VoxelLabel) -> bool {
    !l.is_empty() && !l.is_flat()
}

pub fn step_signals(
    world: &WorldState,
    ego: &EgoState,
    route: &Route,
) -> Result<StepRecord, MetricsError> {
    let grid = &world.grid;
    let [nx, ny, nz] = grid.dims();
    let vs = grid.voxel_size();
    let o = grid.origin();
    let (lo, hi) = grid.bounds();
    let p = [ego.pose.x, ego.pose.y];
    if !ego.pose.is_finite() || p[0] < lo[0] || p[0] >= hi[0] || p[1] < lo[1] || p[1] >= hi[1] {
        return Err(MetricsError::EgoOffGrid {
            tick: world.tick,
            x: p[0],
            y: p[1],
        });
    }
    let rect = ego.rect();

    let mut collision = world.actors.iter().any(|a| rect.intersects(&a.rect()));
    if !collision {
        // Static geometry in columns under the footprint, within the ego's height band.
        let corners = rect.corners();
        let min = |a: usize| corners.iter().map(|c| c[a]).fold(f64::INFINITY, f64::min);
        let max = |a: usize| {
            corners
                .iter()
                .map(|c| c[a])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let cell = |v: f64, a: usize, n: usize| {
            (((v - o[a]) / vs).floor() as i64).clamp(0, n as i64 - 1) as usize
        };
        let (i0, i1) = (cell(min(0), 0, nx), cell(max(0), 0, nx));
        let (j0, j1) = (cell(min(1), 1, ny), cell(max(1), 1, ny));
        let z_lo = ego.pose.z;
        let z_hi = ego.pose.z + ego.footprint[2];
        'cols: for i in i0..=i1 {
            for j in j0..=j1 {
                let square = OrientedRect::new(
                    [o[0] + (i as f64 + 0.5) * vs, o[1] + (j as f64 + 0.5) * vs],
                    vs,
                    vs,
                    0.0,
                );
                if !rect.intersects(&square) {
                    continue;
                }
                for k in 0..nz {
                    let bottom = o[2] + k as f64 * vs;
                    if bottom + vs <= z_lo || bottom >= z_hi {
                        continue;
                    }
                    let l = grid.linear([i, j, k]);
                    if is_obstacle(grid.labels()[l]) && !world.instance_map.contains_key(&l) {
                        collision = true;
                        break 'cols;
                    }
                }
            }
        }
    }

    let on_drivable = rect.corners().iter().all(|c| {
        let i = ((c[0] - o[0]) / vs).floor();
        let j = ((c[1] - o[1]) / vs).floor();
        if i < 0.0 || j < 0.0 || i >= nx as f64 || j >= ny as f64 {
            return false;
        }
        (0..nz).any(|k| grid.get([i as usize, j as usize, k]) == VoxelLabel::DRIVABLE_SURFACE)
    });

    let ev = ego.velocity();
    let min_ttc = world
        .actors
        .iter()
        .map(|a| time_of_impact(&rect, ev, &a.rect(), a.velocity()))
        .fold(f64::INFINITY, f64::min);

    Ok(StepRecord {
        tick: world.tick,
        time: world.time,
        collision,
        on_drivable,
        min_ttc,
        progress: route.progress(p),
        accel: ego.accel,
        position: p,
    })
}

/// Episode scores. `rc` and `ads` are absent for open-loop evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub nc: f64,
    pub dac: f64,
    pub ttc: f64,
    pub ep: f64,
    pub comfort: f64,
    pub pdms: f64,
    pub rc: Option<f64>,
    pub ads: Option<f64>,
}

impl Scores {
    /// Build scores from sub-scores, deriving `pdms` and `ads`.
    pub fn from_parts(
        nc: f64,
        dac: f64,
        ttc: f64,
        ep: f64,
        comfort: f64,
        rc: Option<f64>,
        weights: &ScoreWeights,
    ) -> Self {
        let pdms = pdms(nc, dac, ttc, ep, comfort, weights);
        Self {
            nc,
            dac,
            ttc,
            ep,
            comfort,
            pdms,
            rc,
            ads: rc.map(|rc| pdms * rc),
        }
    }

    /// Whether every field is in `[0, 1]` and `pdms`/`ads` equal their defining formulas.
    pub fn is_consistent(&self, weights: &ScoreWeights) -> bool {
        let fields = [
            self.nc,
            self.dac,
            self.ttc,
            self.ep,
            self.comfort,
            self.pdms,
        ];
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        fields
            .iter()
            .copied()
            .chain(self.rc)
            .chain(self.ads)
            .all(in_unit)
            && self.pdms == pdms(self.nc, self.dac, self.ttc, self.ep, self.comfort, weights)
            && self.ads == self.rc.map(|rc| self.pdms * rc)
    }

    /// Flat `key=value` results, one per line, in canonical order.
    pub fn to_results(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut e = vec![
            ("nc", self.nc),
            ("dac", self.dac),
            ("ttc", self.ttc),
            ("ep", self.ep),
            ("comfort", self.comfort),
            ("pdms", self.pdms),
        ];
        if let (Some(rc), Some(ads)) = (self.rc, self.ads) {
            e.push(("rc", rc));
            e.push(("ads", ads));
        }
        e
    }
}

pub fn pdms(nc: f64, dac: f64, ttc: f64, ep: f64, comfort: f64, w: &ScoreWeights) -> f64 {
    nc * dac * (w.ttc * ttc + w.comfort * comfort + w.ep * ep) / (w.ttc + w.comfort + w.ep)
}

/// Parse a `key=value` results file. Keys keep file order; values must be numbers.
pub fn parse_results(text: &str) -> Result<Vec<(String, f64)>, MetricsError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| MetricsError::Results {
            line: n + 1,
            reason: reason.into(),
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key=value"))?;
        let v: f64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}

/// Two-column text table of results, metric names upper-cased.
pub fn render_report(entries: &[(String, f64)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{:<8} {v:.4}", k.to_uppercase());
    }
    out
}

fn gate(records: &[StepRecord], f: impl Fn(&StepRecord) -> bool) -> f64 {
    if records.iter().all(f) {
        1.0
    } else {
        0.0
    }
}

fn comfort(records: &[StepRecord], cfg: &MetricsConfig) -> f64 {
    let accel_ok = records.iter().all(|r| r.accel.abs() <= cfg.max_accel);
    let jerk_ok = records.windows(2).all(|w| {
        let dt = w[1].time - w[0].time;
        dt <= 0.0 || ((w[1].accel - w[0].accel) / dt).abs() <= cfg.max_jerk
    });
    if accel_ok && jerk_ok {
        1.0
    } else {
        0.0
    }
}

fn sub_scores(
    records: &[StepRecord],
    route: &Route,
    cfg: &MetricsConfig,
) -> Result<[f64; 5], MetricsError> {
    let last = records.last().ok_or(MetricsError::EmptyEpisode)?;
    let reference = cfg
        .ep_reference
        .unwrap_or(route.total_length())
        .max(f64::MIN_POSITIVE);
    Ok([
        gate(records, |r| !r.collision),
        gate(records, |r| r.on_drivable),
        gate(records, |r| r.min_ttc >= cfg.ttc_threshold),
        (last.progress / reference).clamp(0.0, 1.0),
        comfort(records, cfg),
    ])
}

/// Route completion: fraction of route length covered, or 1 within tolerance of the end.
pub fn route_completion(records: &[StepRecord], route: &Route) -> Result<f64, MetricsError> {
    let last = records.last().ok_or(MetricsError::EmptyEpisode)?;
    if dist(last.position, route.end()) <= route.tolerance {
        return Ok(1.0);
    }
    Ok((last.progress / route.total_length()).clamp(0.0, 1.0))
}

/// Closed-loop scores for an episode.
pub fn aggregate(
    records: &[StepRecord],
    route: &Route,
    cfg: &MetricsConfig,
) -> Result<Scores, MetricsError> {
    let [nc, dac, ttc, ep, comfort] = sub_scores(records, route, cfg)?;
    let rc = route_completion(records, route)?;
    Ok(Scores::from_parts(
        nc,
        dac,
        ttc,
        ep,
        comfort,
        Some(rc),
        &cfg.weights,
    ))
}

/// Open-loop scores: no route completion or ADS.
pub fn aggregate_open_loop(
    records: &[StepRecord],
    route: &Route,
    cfg: &MetricsConfig,
) -> Result<Scores, MetricsError> {
    let [nc, dac, ttc, ep, comfort] = sub_scores(records, route, cfg)?;
    Ok(Scores::from_parts(
        nc,
        dac,
        ttc,
        ep,
        comfort,
        None,
        &cfg.weights,
    ))
}

/// Score a fixed ego trajectory against a replayed sequence of worlds.
pub fn open_loop_eval(
    trajectory: &[EgoState],
    replay: &[WorldState],
    route: &Route,
    cfg: &MetricsConfig,
) -> Result<(Vec<StepRecord>, Scores), MetricsError> {
    if trajectory.len() != replay.len() {
        return Err(MetricsError::LengthMismatch {
            trajectory: trajectory.len(),
            replay: replay.len(),
        });
    }
    let records = trajectory
        .iter()
        .zip(replay)
        .map(|(ego, world)| step_signals(world, ego, route))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = aggregate_open_loop(&records, route, cfg)?;
    Ok((records, scores))
}
