//! Closed-loop and open-loop episode runners.

pub mod agent;
pub mod protocol;
mod scenario;
pub mod transport;

pub use agent::{route_controls, Agent, Script, ScriptedAgent, TraceParams};
pub use scenario::{
    surface_z, ActorsConfig, EgoConfig, HarnessConfig, RigSource, RouteConfig, Scenario,
    ScenarioConfig, SceneSource,
};
pub use transport::{Endpoint, InProcessEndpoint, SubprocessEndpoint, TcpEndpoint, TransportError};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::ActorInstance;
use crate::codec::grid_hash;
use crate::compose::{compose_world, ComposeError, WorldState};
use crate::dynamics::{
    environment_step, integrate_pose, ControlSignal, DynamicsError, TrafficActor,
};
use crate::geometry::dist;
use crate::grid::Pose;
use crate::metrics::{
    aggregate, aggregate_open_loop, step_signals, EgoState, MetricsError, Scores, StepRecord,
};
use crate::project::{render_rig, write_depth, write_pgm, ProjectError};
use crate::rng::mix;

use protocol::{
    EgoObservation, End, Init, Message, Observe, Raster, RasterMode, ViewFrame, ViewInfo,
};

/// Instance ID the ego uses when it appears among traffic participants.
pub const EGO_ID: u32 = 0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Config(String),
    #[error("trajectory has {trajectory} points but the scenario runs {max_ticks} ticks")]
    TrajectoryLength { trajectory: usize, max_ticks: u64 },
    #[error("trajectory line {line}: {reason}")]
    Trajectory { line: usize, reason: String },
    #[error("episode log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("raster output: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::TrajectoryLength { .. }
            | HarnessError::Trajectory { .. }
            | HarnessError::Metrics(MetricsError::EgoOffGrid { .. }) => 4,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxTicks,
    RouteComplete,
    Collision,
    EgoOffGrid,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxTicks => "max-ticks",
            Termination::RouteComplete => "route-complete",
            Termination::Collision => "collision",
            Termination::EgoOffGrid => "ego-off-grid",
        }
    }
}

/// How an episode ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Completed {
        reason: Termination,
    },
    /// The agent could not be reached, timed out or hung up.
    AgentFailure {
        detail: String,
    },
    /// The agent sent a malformed or out-of-order message.
    ProtocolError {
        detail: String,
    },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Completed { .. } => 0,
            Outcome::AgentFailure { .. } => 2,
            Outcome::ProtocolError { .. } => 3,
        }
    }

    fn label(&self) -> String {
        match self {
            Outcome::Completed { reason } => reason.as_str().into(),
            Outcome::AgentFailure { .. } => "agent-failure".into(),
            Outcome::ProtocolError { .. } => "protocol-error".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorLog {
    pub id: u32,
    pub pose: Pose,
    pub speed: f64,
}

/// Everything recorded for one completed tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    pub time: f64,
    /// FNV-1a hash of the composed world's RLE stream, as 16 hex digits.
    pub world_hash: String,
    pub ego: EgoObservation,
    /// Control as applied after clamping.
    pub control: ControlSignal,
    pub signals: StepRecord,
    pub actors: Vec<ActorLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub max_ticks: u64,
    pub static_ref: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
    pub outcome: Outcome,
    /// Absent when no tick completed.
    pub scores: Option<Scores>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LogLine {
    Header(LogHeader),
    Tick(LogEntry),
    Summary {
        outcome: Outcome,
        scores: Option<Scores>,
    },
}

impl EpisodeLog {
    /// Newline-delimited JSON: a header line, one line per tick, then a summary line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        let mut push = |l: &LogLine| {
            out.push_str(&serde_json::to_string(l).expect("log lines serialize"));
            out.push('\n');
        };
        push(&LogLine::Header(self.header.clone()));
        for e in &self.entries {
            push(&LogLine::Tick(e.clone()));
        }
        push(&LogLine::Summary {
            outcome: self.outcome.clone(),
            scores: self.scores,
        });
        out
    }

    pub fn parse_ndjson(text: &str) -> Result<Self, HarnessError> {
        let mut header = None;
        let mut entries = Vec::new();
        let mut summary = None;
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let bad = |reason: String| HarnessError::Log {
                line: n + 1,
                reason,
            };
            match serde_json::from_str(line).map_err(|e| bad(e.to_string()))? {
                LogLine::Header(h) if header.is_none() => header = Some(h),
                LogLine::Tick(e) if header.is_some() && summary.is_none() => entries.push(e),
                LogLine::Summary { outcome, scores } if header.is_some() && summary.is_none() => {
                    summary = Some((outcome, scores))
                }
                _ => return Err(bad("line out of order".into())),
            }
        }
        let header = header.ok_or(HarnessError::Log {
            line: 1,
            reason: "missing header".into(),
        })?;
        let (outcome, scores) = summary.ok_or(HarnessError::Log {
            line: text.lines().count(),
            reason: "missing summary".into(),
        })?;
        Ok(Self {
            header,
            entries,
            outcome,
            scores,
        })
    }

    pub fn records(&self) -> Vec<StepRecord> {
        self.entries.iter().map(|e| e.signals).collect()
    }

    /// The ego trace, usable as an open-loop trajectory.
    pub fn trajectory(&self) -> Vec<TrajectoryPoint> {
        self.entries
            .iter()
            .map(|e| TrajectoryPoint {
                pose: e.ego.pose,
                speed: Some(e.ego.speed),
            })
            .collect()
    }
}

/// One predicted ego state for open-loop evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    /// `z` is replaced by the scenario's ego height.
    pub pose: Pose,
    /// Estimated from neighbouring points when absent.
    pub speed: Option<f64>,
}

/// Parse a trajectory file: one `x y yaw [speed]` line per tick; `#` starts a comment line.
pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| HarnessError::Trajectory {
            line: n + 1,
            reason: reason.into(),
        };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected numbers"))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value"));
        }
        let (pose, speed) = match v[..] {
            [x, y, yaw] => (Pose::new(x, y, 0.0, yaw), None),
            [x, y, yaw, s] if s >= 0.0 => (Pose::new(x, y, 0.0, yaw), Some(s)),
            _ => return Err(bad("expected `x y yaw [speed]` with a non-negative speed")),
        };
        out.push(TrajectoryPoint { pose, speed });
    }
    Ok(out)
}

pub fn render_trajectory(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("# x y yaw speed\n");
    for p in points {
        match p.speed {
            Some(s) => out.push_str(&format!("{} {} {} {s}\n", p.pose.x, p.pose.y, p.pose.yaw)),
            None => out.push_str(&format!("{} {} {}\n", p.pose.x, p.pose.y, p.pose.yaw)),
        }
    }
    out
}

fn actor_logs(actors: &[ActorInstance]) -> Vec<ActorLog> {
    let mut out: Vec<ActorLog> = actors
        .iter()
        .map(|a| ActorLog {
            id: a.instance_id,
            pose: a.pose,
            speed: a.speed,
        })
        .collect();
    out.sort_by_key(|a| a.id);
    out
}

/// Advance non-ego actors one step with the traffic controller; the ego is a passive leader.
fn advance_actors(
    sc: &Scenario,
    actors: &mut [ActorInstance],
    ego: &EgoState,
    tick: u64,
) -> Result<(), HarnessError> {
    let Some(lanes) = &sc.lanes else {
        for a in actors.iter_mut() {
            (a.pose, a.speed) = integrate_pose(&a.pose, a.speed, ControlSignal::ZERO, sc.dt)?;
        }
        return Ok(());
    };
    if actors.is_empty() {
        return Ok(());
    }
    let mut participants: Vec<TrafficActor> = actors
        .iter()
        .map(|a| TrafficActor {
            instance_id: a.instance_id,
            pose: a.pose,
            speed: a.speed,
            length: sc.bank.get(&a.asset_id).map_or(4.5, |x| x.footprint[0]),
            desired_speed: Some(sc.desired_speed(&a.asset_id)),
            controlled: true,
        })
        .collect();
    participants.push(TrafficActor {
        instance_id: EGO_ID,
        pose: ego.pose,
        speed: ego.speed,
        length: ego.footprint[0],
        desired_speed: None,
        controlled: false,
    });
    let env = environment_step(&participants, lanes, &sc.traffic, mix(&[sc.seed, tick]));
    for a in actors.iter_mut() {
        let c = env
            .controls
            .get(&a.instance_id)
            .copied()
            .unwrap_or(ControlSignal::ZERO);
        (a.pose, a.speed) = integrate_pose(&a.pose, a.speed, c, sc.dt)?;
    }
    Ok(())
}

static RASTER_DIRS: AtomicU64 = AtomicU64::new(0);

/// Raster output directory; temporary directories are removed on drop.
struct RasterDir {
    path: PathBuf,
    temporary: bool,
}

impl RasterDir {
    fn new(configured: Option<&str>) -> std::io::Result<Self> {
        let (path, temporary) = match configured {
            Some(p) => (PathBuf::from(p), false),
            None => (
                std::env::temp_dir().join(format!(
                    "occsphere-rasters-{}-{}",
                    std::process::id(),
                    RASTER_DIRS.fetch_add(1, Ordering::Relaxed)
                )),
                true,
            ),
        };
        std::fs::create_dir_all(&path)?;
        Ok(Self { path, temporary })
    }

    fn file(&self, name: &str) -> (PathBuf, String) {
        let p = self.path.join(name);
        let s = p.to_string_lossy().into_owned();
        (p, s)
    }
}

impl Drop for RasterDir {
    fn drop(&mut self) {
        if self.temporary {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}

fn observation(
    sc: &Scenario,
    world: &WorldState,
    ego: &EgoState,
    rasters: Option<&RasterDir>,
) -> Result<Observe, HarnessError> {
    let images = render_rig(world, &sc.rig, &ego.pose, None)?;
    let mut views = Vec::with_capacity(images.len());
    for (name, img) in images {
        let (labels, depth) = match rasters {
            None => (Raster::inline_labels(&img), Raster::inline_depth(&img)),
            Some(dir) => {
                let (lp, ls) = dir.file(&format!("t{:05}-{name}.pgm", world.tick));
                let (dp, ds) = dir.file(&format!("t{:05}-{name}.dep", world.tick));
                write_pgm(&lp, &img)?;
                write_depth(&dp, &img)?;
                (Raster::File(ls), Raster::File(ds))
            }
        };
        views.push(ViewFrame {
            name,
            labels,
            depth,
        });
    }
    Ok(Observe {
        tick: world.tick,
        time: world.time,
        ego: EgoObservation {
            pose: ego.pose,
            speed: ego.speed,
        },
        views,
    })
}

fn init_message(sc: &Scenario) -> Message {
    Message::Init(Init {
        version: protocol::PROTOCOL_VERSION,
        scenario: sc.name.clone(),
        seed: sc.seed,
        dt: sc.dt,
        max_ticks: sc.max_ticks,
        route: sc.route.waypoints().to_vec(),
        raster: sc.harness.raster,
        views: sc
            .rig
            .views()
            .iter()
            .map(|(n, c)| ViewInfo::new(n, c))
            .collect(),
    })
}

fn header(sc: &Scenario) -> LogHeader {
    LogHeader {
        scenario: sc.name.clone(),
        seed: sc.seed,
        dt: sc.dt,
        max_ticks: sc.max_ticks,
        static_ref: sc.static_ref.clone(),
    }
}

/// Run one closed-loop episode against `agent`.
///
/// Each tick composes the world, scores the ego's current state, renders the rig, sends an
/// `observe` and waits for the `act`. Controls received at tick `t` move the ego between `t`
/// and `t + 1`. A tick is logged once its control has arrived, so an episode that fails while
/// waiting at tick `t` logs ticks `0..t`.
pub fn run_closed_loop(
    sc: &Scenario,
    agent: &mut dyn Endpoint,
) -> Result<EpisodeLog, HarnessError> {
    sc.validate()?;
    let timeout = Duration::from_secs_f64(sc.harness.timeout_s.max(0.0));
    let rasters = match sc.harness.raster {
        RasterMode::File => Some(RasterDir::new(sc.harness.raster_dir.as_deref())?),
        RasterMode::Inline => None,
    };
    let mut entries = Vec::new();
    let mut ego = EgoState {
        accel: 0.0,
        ..sc.ego
    };
    let mut actors = sc.actors.clone();

    let outcome = 'episode: {
        if let Err(e) = agent.send(&init_message(sc).encode()) {
            break 'episode Outcome::AgentFailure {
                detail: e.to_string(),
            };
        }
        for tick in 0..sc.max_ticks {
            let time = tick as f64 * sc.dt;
            let world = compose_world(
                &sc.static_scene,
                &sc.static_ref,
                &actors,
                &sc.bank,
                tick,
                time,
            )?;
            let signals = match step_signals(&world, &ego, &sc.route) {
                Ok(s) => s,
                Err(MetricsError::EgoOffGrid { .. }) => {
                    break 'episode Outcome::Completed {
                        reason: Termination::EgoOffGrid,
                    }
                }
                Err(e) => return Err(e.into()),
            };
            let obs = observation(sc, &world, &ego, rasters.as_ref())?;
            if let Err(e) = agent.send(&Message::Observe(obs).encode()) {
                break 'episode Outcome::AgentFailure {
                    detail: e.to_string(),
                };
            }
            let reply = match agent.recv(timeout) {
                Ok(line) => line,
                Err(e) => {
                    break 'episode Outcome::AgentFailure {
                        detail: e.to_string(),
                    }
                }
            };
            let act = match Message::decode_act(&reply, tick) {
                Ok(a) => a,
                Err(e) => {
                    break 'episode Outcome::ProtocolError {
                        detail: e.to_string(),
                    }
                }
            };
            let control = ControlSignal::new(act.accel, act.yaw_rate).clamp(&sc.ego_limits);
            entries.push(LogEntry {
                tick,
                time,
                world_hash: format!("{:016x}", grid_hash(&world.grid)),
                ego: EgoObservation {
                    pose: ego.pose,
                    speed: ego.speed,
                },
                control,
                signals,
                actors: actor_logs(&actors),
            });
            if signals.collision && sc.harness.collision_stop {
                break 'episode Outcome::Completed {
                    reason: Termination::Collision,
                };
            }
            if dist(signals.position, sc.route.end()) <= sc.route.tolerance {
                break 'episode Outcome::Completed {
                    reason: Termination::RouteComplete,
                };
            }
            if tick + 1 == sc.max_ticks {
                break;
            }
            advance_actors(sc, &mut actors, &ego, tick)?;
            let (pose, speed) = integrate_pose(&ego.pose, ego.speed, control, sc.dt)?;
            ego = EgoState {
                pose,
                speed,
                accel: control.accel,
                ..ego
            };
        }
        Outcome::Completed {
            reason: Termination::MaxTicks,
        }
    };

    let records: Vec<StepRecord> = entries.iter().map(|e| e.signals).collect();
    let scores = if records.is_empty() {
        None
    } else {
        Some(aggregate(&records, &sc.route, &sc.metrics)?)
    };
    if !matches!(outcome, Outcome::AgentFailure { .. }) {
        let end = Message::End(End {
            reason: outcome.label(),
            ticks: entries.len() as u64,
            scores,
        });
        let _ = agent.send(&end.encode());
    }
    agent.close();
    Ok(EpisodeLog {
        header: header(sc),
        entries,
        outcome,
        scores,
    })
}

/// Score a fixed ego trajectory while the rest of the world evolves under the traffic
/// controller. The ego never reacts, but other actors see it at its predicted poses.
pub fn run_open_loop(
    sc: &Scenario,
    trajectory: &[TrajectoryPoint],
) -> Result<(Vec<StepRecord>, Scores), HarnessError> {
    sc.validate()?;
    if trajectory.len() as u64 != sc.max_ticks {
        return Err(HarnessError::TrajectoryLength {
            trajectory: trajectory.len(),
            max_ticks: sc.max_ticks,
        });
    }
    let n = trajectory.len();
    let speeds: Vec<f64> = (0..n)
        .map(|t| {
            trajectory[t].speed.unwrap_or_else(|| {
                let (a, b) = if t + 1 < n {
                    (t, t + 1)
                } else {
                    (t.saturating_sub(1), t)
                };
                let p = |i: usize| [trajectory[i].pose.x, trajectory[i].pose.y];
                if a == b {
                    0.0
                } else {
                    dist(p(a), p(b)) / sc.dt
                }
            })
        })
        .collect();
    let mut actors = sc.actors.clone();
    let mut records = Vec::with_capacity(n);
    for (t, point) in trajectory.iter().enumerate() {
        let tick = t as u64;
        let ego = EgoState {
            pose: Pose {
                z: sc.ego.pose.z,
                ..point.pose
            },
            speed: speeds[t],
            accel: if t == 0 {
                0.0
            } else {
                (speeds[t] - speeds[t - 1]) / sc.dt
            },
            footprint: sc.ego.footprint,
        };
        let world = compose_world(
            &sc.static_scene,
            &sc.static_ref,
            &actors,
            &sc.bank,
            tick,
            tick as f64 * sc.dt,
        )?;
        records.push(step_signals(&world, &ego, &sc.route)?);
        if t + 1 < n {
            advance_actors(sc, &mut actors, &ego, tick)?;
        }
    }
    let scores = aggregate_open_loop(&records, &sc.route, &sc.metrics)?;
    Ok((records, scores))
}

/// The composed world at `tick` with the ego coasting from its start state under zero control.
pub fn world_at_tick(sc: &Scenario, tick: u64) -> Result<WorldState, HarnessError> {
    sc.validate()?;
    let mut ego = sc.ego;
    let mut actors = sc.actors.clone();
    for t in 0..tick {
        advance_actors(sc, &mut actors, &ego, t)?;
        (ego.pose, ego.speed) = integrate_pose(&ego.pose, ego.speed, ControlSignal::ZERO, sc.dt)?;
    }
    Ok(compose_world(
        &sc.static_scene,
        &sc.static_ref,
        &actors,
        &sc.bank,
        tick,
        tick as f64 * sc.dt,
    )?)
}

/// Load a scenario file, applying a seed override.
pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<Scenario, HarnessError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.resolve(path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LaneGraph;
    use crate::metrics::Route;
    use crate::scene::{
        ProceduralGenerator, RegionGenerator, RoadGrid, SceneConfig, SceneStyle, StyleTag,
    };

    /// 80 m × 24 m straight two-lane road along x; the eastbound lane runs at y = 10.25.
    fn road() -> (crate::SemanticGrid, crate::BevMap) {
        let cfg = SceneConfig {
            footprint: [160, 48],
            depth: 12,
            ..SceneConfig::default()
        };
        let roads = RoadGrid {
            spacing: 1000,
            offset: [0, 24],
            x_roads: true,
            y_roads: false,
            ..RoadGrid::default()
        };
        let bev = roads
            .rasterize(cfg.footprint, cfg.voxel_size, [0.0, 0.0])
            .unwrap();
        let grid = ProceduralGenerator::new(cfg)
            .generate(&bev, &SceneStyle::preset(StyleTag::OpenRoad), 5)
            .unwrap();
        (grid, bev)
    }

    fn road_scenario(actors: usize) -> Scenario {
        let (grid, bev) = road();
        let route = Route::new(vec![[5.0, 10.25], [60.0, 10.25]], 2.0).unwrap();
        let mut sc = Scenario::new("road", grid, route).unwrap();
        sc.max_ticks = 40;
        sc.seed = 11;
        sc.rig = CameraRig::surround(16, 8);
        sc.harness.raster = RasterMode::Inline;
        if actors > 0 {
            let lanes = LaneGraph::from_bev(&bev).unwrap();
            let params = crate::dynamics::SpawnParams {
                z: sc.ego.pose.z,
                keep_clear: vec![crate::geometry::OrientedRect::new(
                    [5.0, 10.25],
                    30.0,
                    3.0,
                    0.0,
                )],
                ..Default::default()
            };
            sc.actors =
                crate::dynamics::spawn_actors(&lanes, &sc.bank, actors, 3, &params).unwrap();
            sc.lanes = Some(lanes);
        }
        sc
    }

    use crate::project::CameraRig;

    fn run(sc: &Scenario, agent: ScriptedAgent) -> EpisodeLog {
        run_closed_loop(sc, &mut InProcessEndpoint::new(agent)).unwrap()
    }

    #[test]
    fn termination_names_match_the_log() {
        use Termination::*;
        for t in [MaxTicks, RouteComplete, Collision, EgoOffGrid] {
            assert_eq!(serde_json::to_value(t).unwrap(), t.as_str());
        }
    }

    #[test]
    fn zero_controls_make_no_progress_and_repeat_exactly() {
        let mut sc = road_scenario(0);
        sc.max_ticks = 5;
        let a = run(&sc, ScriptedAgent::new(Script::Zero));
        let b = run(&sc, ScriptedAgent::new(Script::Zero));
        assert_eq!(a.to_ndjson(), b.to_ndjson());
        assert_eq!(a.entries.len(), 5);
        assert_eq!(
            a.outcome,
            Outcome::Completed {
                reason: Termination::MaxTicks
            }
        );
        let s = a.scores.unwrap();
        assert_eq!((s.nc, s.dac, s.ep, s.rc), (1.0, 1.0, 0.0, Some(0.0)));
    }

    #[test]
    fn traced_route_completes() {
        let sc = road_scenario(0);
        let log = run(
            &sc,
            ScriptedAgent::new(Script::Trace(TraceParams::default())),
        );
        assert_eq!(
            log.outcome,
            Outcome::Completed {
                reason: Termination::RouteComplete
            }
        );
        let s = log.scores.unwrap();
        assert_eq!((s.nc, s.dac, s.rc), (1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn controls_act_on_the_next_tick() {
        let mut sc = road_scenario(0);
        sc.max_ticks = 3;
        let log = run(
            &sc,
            ScriptedAgent::new(Script::Replay(vec![ControlSignal::new(2.0, 0.0)])),
        );
        assert_eq!(log.entries[0].ego.speed, 0.0);
        assert_eq!(log.entries[1].ego.speed, 1.0);
        assert_eq!(log.entries[1].signals.accel, 2.0);
        assert_eq!(log.entries[2].ego.speed, 1.0);
    }

    #[test]
    fn malformed_reply_ends_with_protocol_error() {
        let sc = road_scenario(0);
        let mut agent = ScriptedAgent::new(Script::Zero);
        agent.malformed_at = Some(3);
        let log = run(&sc, agent);
        assert_eq!(log.entries.len(), 3);
        assert!(matches!(log.outcome, Outcome::ProtocolError { .. }));
        assert_eq!(log.outcome.exit_code(), 3);
        assert!(log.scores.is_some());
    }

    #[test]
    fn silent_agent_is_an_agent_failure() {
        struct Mute;
        impl Agent for Mute {
            fn handle(&mut self, _: &Message) -> Option<String> {
                None
            }
        }
        let sc = road_scenario(0);
        let log = run_closed_loop(&sc, &mut InProcessEndpoint::new(Mute)).unwrap();
        assert!(log.entries.is_empty() && log.scores.is_none());
        assert_eq!(log.outcome.exit_code(), 2);
    }

    #[test]
    fn log_round_trips_and_replays_open_loop() {
        let sc = road_scenario(3);
        let log = run(
            &sc,
            ScriptedAgent::new(Script::Trace(TraceParams::default())),
        );
        let text = log.to_ndjson();
        let back = EpisodeLog::parse_ndjson(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_ndjson(), text);

        let mut replay = sc.clone();
        replay.max_ticks = log.entries.len() as u64;
        let (records, scores) = run_open_loop(&replay, &log.trajectory()).unwrap();
        let closed = log.scores.unwrap();
        assert_eq!(
            (scores.nc, scores.dac, scores.ttc),
            (closed.nc, closed.dac, closed.ttc)
        );
        for (a, b) in records.iter().zip(log.records()) {
            assert_eq!(
                (a.collision, a.on_drivable, a.min_ttc),
                (b.collision, b.on_drivable, b.min_ttc)
            );
        }
    }

    #[test]
    fn open_loop_contracts() {
        let mut sc = road_scenario(0);
        sc.max_ticks = 4;
        let still = vec![
            TrajectoryPoint {
                pose: sc.ego.pose,
                speed: None
            };
            4
        ];
        let (_, s) = run_open_loop(&sc, &still).unwrap();
        assert_eq!((s.nc, s.dac, s.ep, s.rc), (1.0, 1.0, 0.0, None));
        assert!(matches!(
            run_open_loop(&sc, &still[..3]),
            Err(HarnessError::TrajectoryLength {
                trajectory: 3,
                max_ticks: 4
            })
        ));
        let mut away = still.clone();
        away[2].pose.x = 500.0;
        assert!(matches!(
            run_open_loop(&sc, &away),
            Err(HarnessError::Metrics(MetricsError::EgoOffGrid {
                tick: 2,
                ..
            }))
        ));
    }

    #[test]
    fn trajectory_text_round_trips() {
        let pts = vec![
            TrajectoryPoint {
                pose: Pose::new(1.5, -2.0, 0.0, 0.25),
                speed: Some(3.0),
            },
            TrajectoryPoint {
                pose: Pose::new(2.0, -2.0, 0.0, 0.0),
                speed: None,
            },
        ];
        assert_eq!(parse_trajectory(&render_trajectory(&pts)).unwrap(), pts);
        assert!(parse_trajectory("1 2").is_err());
        assert!(parse_trajectory("1 2 0 -1").is_err());
    }

    #[test]
    fn scenario_config_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let (grid, bev) = road();
        crate::codec::write_grid(dir.path().join("road.occ4"), &grid).unwrap();
        crate::codec::write_bev(dir.path().join("road.bev"), &bev).unwrap();
        let text = r#"
            name = "road"
            seed = 4
            max_ticks = 6
            [scene]
            file = "road.occ4"
            bev = "road.bev"
            [rig]
            width = 8
            height = 4
            views = ["front", "back"]
            [route]
            waypoints = [[5.0, 10.25], [60.0, 10.25]]
            [actors]
            count = 2
            [harness]
            collision_stop = false
        "#;
        std::fs::write(dir.path().join("s.toml"), text).unwrap();
        let sc = load_scenario(&dir.path().join("s.toml"), Some(9)).unwrap();
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.rig.names().collect::<Vec<_>>(), ["front", "back"]);
        assert_eq!(sc.actors.len(), 2);
        assert!(!sc.harness.collision_stop);
        assert_eq!(sc.ego.pose.z, sc.static_scene.origin()[2] + 1.0);

        let bad = text.replace("[60.0, 10.25]", "[600.0, 10.25]");
        std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
        let err = load_scenario(&dir.path().join("bad.toml"), None).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
