//! Scenario files: scene source, cameras, route, ego, traffic and scoring settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{default_speed, ActorBank, ActorInstance};
use crate::codec::{self, grid_hash};
use crate::dynamics::{
    spawn_actors, ControlLimits, LaneGraph, SpawnParams, TrafficParams, DEFAULT_DT,
};
use crate::geometry::{OrientedRect, Point2};
use crate::grid::{BevMap, Pose, SemanticGrid, VoxelLabel};
use crate::metrics::{EgoState, MetricsConfig, Route};
use crate::project::{CameraRig, RigConfig};
use crate::scene::{build_city, LayoutConfig};

use super::protocol::RasterMode;
use super::HarnessError;

/// Where the static scene comes from. Exactly one of `file` and `city` must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSource {
    /// `.occ4` grid.
    pub file: Option<String>,
    /// `.bev` road map for lane extraction; derived from the grid when absent.
    pub bev: Option<String>,
    /// City layout TOML to build.
    pub city: Option<String>,
    /// Lane graph file; overrides lanes extracted from the road map.
    pub lanes: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSource {
    /// Rig TOML; the six-view surround rig is used when absent.
    pub file: Option<String>,
    pub width: usize,
    pub height: usize,
    /// Views to render, by name; all rig views when absent.
    pub views: Option<Vec<String>>,
}

impl Default for RigSource {
    fn default() -> Self {
        Self {
            file: None,
            width: 64,
            height: 32,
            views: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub waypoints: Vec<Point2>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    Route::DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    /// `[x, y, yaw]`; defaults to the route start facing along the first segment.
    pub start: Option<[f64; 3]>,
    /// World z of the ego's underside; defaults to the road surface under the start.
    pub z: Option<f64>,
    pub speed: f64,
    /// (length, width, height), m.
    pub footprint: [f64; 3],
    pub limits: ControlLimits,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            start: None,
            z: None,
            speed: 0.0,
            footprint: [4.5, 2.0, 1.5],
            limits: ControlLimits::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorsConfig {
    /// Actors to spawn on lanes.
    pub count: usize,
    /// Class names drawn uniformly for spawned actors.
    pub classes: Vec<String>,
    /// Minimum spawn spacing along a lane, m.
    pub min_gap: f64,
    pub initial_speed: f64,
    /// Actor bank directory; the built-in bank when absent.
    pub bank: Option<String>,
    /// Explicit actors, added after spawned ones. IDs must be unique and non-zero.
    pub placements: Vec<ActorInstance>,
}

impl Default for ActorsConfig {
    fn default() -> Self {
        Self {
            count: 0,
            classes: vec!["car".into()],
            min_gap: SpawnParams::default().min_gap,
            initial_speed: 0.0,
            bank: None,
            placements: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// End the episode at the first collision.
    pub collision_stop: bool,
    /// Per-tick agent reply timeout, s.
    pub timeout_s: f64,
    pub raster: RasterMode,
    /// Directory for raster files; a temporary directory when absent.
    pub raster_dir: Option<String>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            collision_stop: true,
            timeout_s: 10.0,
            raster: RasterMode::File,
            raster_dir: None,
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// On-disk scenario description (TOML). See `docs/formats.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub max_ticks: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub scene: SceneSource,
    #[serde(default)]
    pub rig: RigSource,
    pub route: RouteConfig,
    #[serde(default)]
    pub ego: EgoConfig,
    #[serde(default)]
    pub actors: ActorsConfig,
    #[serde(default)]
    pub traffic: TrafficParams,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub harness: HarnessConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Load scene, rig, lanes and actors. Relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario, HarnessError> {
        let cfg_err =
            |what: &str, e: &dyn std::fmt::Display| HarnessError::Config(format!("{what}: {e}"));
        let path = |p: &str| -> PathBuf { base_dir.join(p) };

        let (static_scene, bev) = match (&self.scene.file, &self.scene.city) {
            (Some(file), None) => {
                let grid = codec::read_grid(path(file)).map_err(|e| cfg_err(file, &e))?;
                let bev = match &self.scene.bev {
                    Some(b) => codec::read_bev(path(b)).map_err(|e| cfg_err(b, &e))?,
                    None => BevMap::from_grid(&grid),
                };
                (grid, bev)
            }
            (None, Some(city)) => {
                let (layout, style) =
                    LayoutConfig::load(&path(city)).map_err(|e| cfg_err(city, &e))?;
                let grid = build_city(&layout, &style, self.seed).map_err(|e| cfg_err(city, &e))?;
                (grid, layout.city_bev().map_err(|e| cfg_err(city, &e))?)
            }
            _ => {
                return Err(HarnessError::Config(
                    "scene needs exactly one of `file` or `city`".into(),
                ))
            }
        };

        let rig_cfg = match &self.rig.file {
            Some(f) => RigConfig::load(&path(f)).map_err(|e| cfg_err(f, &e))?,
            None => RigConfig::surround(self.rig.width, self.rig.height),
        };
        let mut rig = rig_cfg.build().map_err(|e| cfg_err("rig", &e))?;
        if let Some(names) = &self.rig.views {
            let views = names
                .iter()
                .map(|n| {
                    rig.views()
                        .iter()
                        .find(|(v, _)| v == n)
                        .cloned()
                        .ok_or_else(|| HarnessError::Config(format!("rig has no view {n:?}")))
                })
                .collect::<Result<_, _>>()?;
            rig = CameraRig::new(views).map_err(|e| cfg_err("rig", &e))?;
        }

        let route = Route::new(self.route.waypoints.clone(), self.route.tolerance)
            .map_err(|e| cfg_err("route", &e))?;

        let bank = match &self.actors.bank {
            Some(dir) => ActorBank::load(&path(dir)).map_err(|e| cfg_err(dir, &e))?,
            None => ActorBank::builtin(static_scene.voxel_size()),
        };

        let needs_lanes = self.actors.count > 0 || !self.actors.placements.is_empty();
        let lanes = match (&self.scene.lanes, needs_lanes) {
            (Some(f), _) => {
                let text = std::fs::read_to_string(path(f)).map_err(|e| cfg_err(f, &e))?;
                Some(LaneGraph::parse(&text).map_err(|e| cfg_err(f, &e))?)
            }
            (None, true) => Some(LaneGraph::from_bev(&bev).map_err(|e| cfg_err("lanes", &e))?),
            (None, false) => None,
        };

        let mut sc = Scenario::new(self.name.clone(), static_scene, route)?;
        sc.seed = self.seed;
        sc.max_ticks = self.max_ticks;
        sc.dt = self.dt;
        sc.rig = rig;
        sc.bank = bank;
        sc.lanes = lanes;
        sc.traffic = self.traffic.clone();
        sc.metrics = self.metrics;
        sc.harness = self.harness.clone();
        sc.ego_limits = self.ego.limits;
        sc.ego = EgoState {
            speed: self.ego.speed,
            footprint: self.ego.footprint,
            ..sc.ego
        };
        if let Some([x, y, yaw]) = self.ego.start {
            sc.ego.pose = Pose::new(x, y, surface_z(&sc.static_scene, [x, y]), yaw);
        }
        if let Some(z) = self.ego.z {
            sc.ego.pose.z = z;
        }

        let classes = self
            .actors
            .classes
            .iter()
            .map(|n| {
                VoxelLabel::from_name(n)
                    .ok_or_else(|| HarnessError::Config(format!("unknown class {n:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self.actors.count > 0 {
            let params = SpawnParams {
                classes,
                min_gap: self.actors.min_gap,
                initial_speed: self.actors.initial_speed,
                z: sc.ego.pose.z,
                keep_clear: vec![sc.ego_rect_with_margin(self.actors.min_gap)],
                ..SpawnParams::default()
            };
            let lanes = sc
                .lanes
                .as_ref()
                .expect("lanes loaded when actors are requested");
            sc.actors = spawn_actors(lanes, &sc.bank, self.actors.count, self.seed, &params)
                .map_err(|e| cfg_err("actors", &e))?;
        }
        sc.actors.extend(self.actors.placements.iter().cloned());
        sc.validate()?;
        Ok(sc)
    }
}

/// Top face of the highest flat voxel under `p`, or the grid floor.
pub fn surface_z(grid: &SemanticGrid, p: Point2) -> f64 {
    let floor = grid.origin()[2];
    let Ok([i, j, _]) = grid.world_to_voxel([p[0], p[1], floor]) else {
        return floor;
    };
    (0..grid.dims()[2])
        .rev()
        .find(|&k| grid.get([i, j, k]).is_flat())
        .map_or(floor, |k| floor + (k + 1) as f64 * grid.voxel_size())
}

/// A fully resolved scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub max_ticks: u64,
    pub dt: f64,
    pub static_scene: SemanticGrid,
    /// Hex hash of the static scene, carried into every composed world.
    pub static_ref: String,
    pub rig: CameraRig,
    pub route: Route,
    /// Ego state at tick 0. Its `accel` is ignored.
    pub ego: EgoState,
    pub ego_limits: ControlLimits,
    pub bank: ActorBank,
    /// Without lanes every actor coasts under zero control.
    pub lanes: Option<LaneGraph>,
    /// Actors at tick 0.
    pub actors: Vec<ActorInstance>,
    pub traffic: TrafficParams,
    pub metrics: MetricsConfig,
    pub harness: HarnessConfig,
}

impl Scenario {
    /// Scenario with no actors, the default rig and the ego at rest at the route start.
    pub fn new(
        name: impl Into<String>,
        static_scene: SemanticGrid,
        route: Route,
    ) -> Result<Self, HarnessError> {
        let start = route.start();
        let next = route.waypoints()[1];
        let yaw = (next[1] - start[1]).atan2(next[0] - start[0]);
        let z = surface_z(&static_scene, start);
        let static_ref = format!("{:016x}", grid_hash(&static_scene));
        let bank = ActorBank::builtin(static_scene.voxel_size());
        Ok(Self {
            name: name.into(),
            seed: 0,
            max_ticks: 1,
            dt: DEFAULT_DT,
            static_ref,
            rig: CameraRig::surround(64, 32),
            ego: EgoState {
                pose: Pose::new(start[0], start[1], z, yaw),
                speed: 0.0,
                accel: 0.0,
                footprint: [4.5, 2.0, 1.5],
            },
            static_scene,
            route,
            ego_limits: ControlLimits::default(),
            bank,
            lanes: None,
            actors: Vec::new(),
            traffic: TrafficParams::default(),
            metrics: MetricsConfig::default(),
            harness: HarnessConfig::default(),
        })
    }

    fn ego_rect_with_margin(&self, margin: f64) -> OrientedRect {
        let p = self.ego.pose;
        OrientedRect::new(
            [p.x, p.y],
            self.ego.footprint[0] + 2.0 * margin,
            self.ego.footprint[1],
            p.yaw,
        )
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.max_ticks < 1 {
            return bad("max_ticks must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let (lo, hi) = self.static_scene.bounds();
        if let Some(p) = self
            .route
            .waypoints()
            .iter()
            .find(|p| p[0] < lo[0] || p[0] >= hi[0] || p[1] < lo[1] || p[1] >= hi[1])
        {
            return bad(format!("route waypoint {p:?} lies outside the scene"));
        }
        if !self.ego.pose.is_finite()
            || !(self.ego.speed.is_finite() && self.ego.speed >= 0.0)
            || self
                .ego
                .footprint
                .iter()
                .any(|&f| !(f.is_finite() && f > 0.0))
        {
            return bad("ego start state is invalid".into());
        }
        let mut ids: Vec<u32> = self.actors.iter().map(|a| a.instance_id).collect();
        ids.sort_unstable();
        if ids.first() == Some(&0) {
            return bad("actor instance id 0 is reserved for the ego".into());
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate actor instance id {}", w[0]));
        }
        for a in &self.actors {
            self.bank
                .resolve(&a.asset_id)
                .map_err(|e| HarnessError::Config(format!("actor {}: {e}", a.instance_id)))?;
            if !a.pose.is_finite() || !(a.speed.is_finite() && a.speed >= 0.0) {
                return bad(format!("actor {} has an invalid state", a.instance_id));
            }
        }
        Ok(())
    }

    /// Desired cruising speed of an actor, from its asset class.
    pub fn desired_speed(&self, asset_id: &str) -> f64 {
        self.bank
            .get(asset_id)
            .map_or(8.0, |a| default_speed(a.class))
    }
}
