use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::DynamicsError;
use crate::geometry::{dist, point_at, polyline_length, project_onto_polyline, Point2};
use crate::grid::{BevCell, BevMap, Pose};

pub type LaneId = u32;

/// Directed centerline with successor links.
#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub points: Vec<Point2>,
    pub successors: Vec<LaneId>,
    length: f64,
}

impl Lane {
    pub fn new(id: LaneId, points: Vec<Point2>, successors: Vec<LaneId>) -> Self {
        let length = polyline_length(&points);
        Self {
            id,
            points,
            successors,
            length,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn start(&self) -> Point2 {
        self.points[0]
    }

    pub fn end(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    /// Point and heading at arc length `s`.
    pub fn at(&self, s: f64) -> (Point2, f64) {
        point_at(&self.points, s)
    }

    /// `(arc length, lateral distance)` of the closest lane point.
    pub fn project(&self, p: Point2) -> (f64, f64) {
        let (s, d, _) = project_onto_polyline(&self.points, p);
        (s, d)
    }
}

/// Directed lane network in the world frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaneGraph {
    lanes: BTreeMap<LaneId, Lane>,
}

fn is_x_divider(bev: &BevMap, i: usize, j: usize) -> bool {
    bev.get(i, j) == BevCell::LaneDivider
        && bev.get_checked(i as i64, j as i64 - 1) == Some(BevCell::Drivable)
        && bev.get_checked(i as i64, j as i64 + 1) == Some(BevCell::Drivable)
}

fn is_y_divider(bev: &BevMap, i: usize, j: usize) -> bool {
    bev.get(i, j) == BevCell::LaneDivider
        && bev.get_checked(i as i64 - 1, j as i64) == Some(BevCell::Drivable)
        && bev.get_checked(i as i64 + 1, j as i64) == Some(BevCell::Drivable)
}

/// Divider run along one axis, in cell indices: `along` spans `start..=end`, `across` fixed.
#[derive(Clone, Copy, Debug)]
struct Run {
    across: usize,
    start: usize,
    end: usize,
    lanes_left: usize,
    lanes_right: usize,
}

impl LaneGraph {
    pub fn new(lanes: impl IntoIterator<Item = Lane>) -> Result<Self, DynamicsError> {
        let mut map = BTreeMap::new();
        for lane in lanes {
            if lane.points.len() < 2 || lane.length <= 0.0 {
                return Err(DynamicsError::Lanes(format!(
                    "lane {} needs two distinct points",
                    lane.id
                )));
            }
            if lane.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(DynamicsError::Lanes(format!(
                    "lane {} has non-finite points",
                    lane.id
                )));
            }
            if let Some(prev) = map.insert(lane.id, lane) {
                return Err(DynamicsError::Lanes(format!(
                    "duplicate lane id {}",
                    prev.id
                )));
            }
        }
        let graph = Self { lanes: map };
        for lane in graph.lanes.values() {
            for s in &lane.successors {
                let next = graph.lanes.get(s).ok_or_else(|| {
                    DynamicsError::Lanes(format!("lane {} names unknown successor {s}", lane.id))
                })?;
                let gap = dist(lane.end(), next.start());
                if gap > 1.0 {
                    return Err(DynamicsError::Lanes(format!(
                        "lane {} ends {gap:.2} m from successor {s}",
                        lane.id
                    )));
                }
            }
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    pub fn get(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.get(&id)
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.values()
    }

    /// Extract lanes from lane-divider runs: two opposing lanes per run, driving on the right,
    /// with straight-through connector lanes across junctions.
    pub fn from_bev(bev: &BevMap) -> Result<Self, DynamicsError> {
        let [nx, ny] = bev.dims();
        let cs = bev.cell_size();
        let o = bev.origin();
        let width = |i: usize, j: usize, di: i64, dj: i64| {
            let mut n = 0;
            let (mut a, mut b) = (i as i64 + di, j as i64 + dj);
            while bev.get_checked(a, b) == Some(BevCell::Drivable) {
                n += 1;
                a += di;
                b += dj;
            }
            n
        };
        let mut x_runs = Vec::new();
        for j in 0..ny {
            let mut i = 0;
            while i < nx {
                if !is_x_divider(bev, i, j) {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < nx && is_x_divider(bev, i, j) {
                    i += 1;
                }
                let mid = (start + i - 1) / 2;
                x_runs.push(Run {
                    across: j,
                    start,
                    end: i - 1,
                    lanes_left: width(mid, j, 0, 1),
                    lanes_right: width(mid, j, 0, -1),
                });
            }
        }
        let mut y_runs = Vec::new();
        for i in 0..nx {
            let mut j = 0;
            while j < ny {
                if !is_y_divider(bev, i, j) {
                    j += 1;
                    continue;
                }
                let start = j;
                while j < ny && is_y_divider(bev, i, j) {
                    j += 1;
                }
                let mid = (start + j - 1) / 2;
                y_runs.push(Run {
                    across: i,
                    start,
                    end: j - 1,
                    lanes_left: width(i, mid, -1, 0),
                    lanes_right: width(i, mid, 1, 0),
                });
            }
        }

        let mut lanes: Vec<Lane> = Vec::new();
        // (axis, across, direction) -> runs sorted by start, each with its lane id.
        let mut index: BTreeMap<(u8, usize, i8), Vec<(Run, LaneId)>> = BTreeMap::new();
        for (axis, runs) in [(0u8, &x_runs), (1u8, &y_runs)] {
            for run in runs.iter() {
                for dir in [1i8, -1] {
                    // Right-hand traffic: +x drives on the -y side, +y on the +x side.
                    let cells = match (axis, dir) {
                        (0, 1) => run.lanes_right,
                        (0, _) => run.lanes_left,
                        (_, 1) => run.lanes_right,
                        _ => run.lanes_left,
                    };
                    if cells == 0 {
                        continue;
                    }
                    let offset = (cells as f64 + 1.0) / 2.0 * cs;
                    let lo = run.start as f64 * cs;
                    let hi = (run.end + 1) as f64 * cs;
                    let centre = (run.across as f64 + 0.5) * cs;
                    let (a, b) = if dir > 0 { (lo, hi) } else { (hi, lo) };
                    let pts = match (axis, dir) {
                        (0, 1) => [
                            [o[0] + a, o[1] + centre - offset],
                            [o[0] + b, o[1] + centre - offset],
                        ],
                        (0, _) => [
                            [o[0] + a, o[1] + centre + offset],
                            [o[0] + b, o[1] + centre + offset],
                        ],
                        (_, 1) => [
                            [o[0] + centre + offset, o[1] + a],
                            [o[0] + centre + offset, o[1] + b],
                        ],
                        _ => [
                            [o[0] + centre - offset, o[1] + a],
                            [o[0] + centre - offset, o[1] + b],
                        ],
                    };
                    let id = lanes.len() as LaneId;
                    lanes.push(Lane::new(id, pts.to_vec(), Vec::new()));
                    index
                        .entry((axis, run.across, dir))
                        .or_default()
                        .push((*run, id));
                }
            }
        }

        // Connect consecutive runs on the same line when only junction cells separate them.
        for ((axis, across, dir), runs) in &index {
            let mut sorted = runs.clone();
            sorted.sort_by_key(|(r, _)| r.start);
            for w in sorted.windows(2) {
                let (first, second) = (w[0], w[1]);
                let through_junction = (first.0.end + 1..second.0.start).all(|k| {
                    let (i, j) = if *axis == 0 {
                        (k, *across)
                    } else {
                        (*across, k)
                    };
                    bev.get(i, j) == BevCell::Junction
                });
                if !through_junction || first.0.end + 1 == second.0.start {
                    continue;
                }
                let (from, to) = if *dir > 0 {
                    (first.1, second.1)
                } else {
                    (second.1, first.1)
                };
                let a = lanes[from as usize].end();
                let b = lanes[to as usize].start();
                let id = lanes.len() as LaneId;
                lanes.push(Lane::new(id, vec![a, b], vec![to]));
                lanes[from as usize].successors.push(id);
            }
        }
        Self::new(lanes)
    }

    /// Check that every lane stays on road cells of `bev`, sampled every half cell. Endpoints
    /// are pulled inward by a micrometer so lanes ending on the map edge still count.
    pub fn check_on_road(&self, bev: &BevMap) -> Result<(), DynamicsError> {
        let step = bev.cell_size() / 2.0;
        for lane in self.lanes.values() {
            let n = (lane.length / step).ceil() as usize;
            for k in 0..=n {
                let (p, _) = lane.at((k as f64 * step).clamp(1e-6, lane.length - 1e-6));
                let on_road = bev.cell_at(p).is_some_and(|(i, j)| bev.get(i, j).is_road());
                if !on_road {
                    return Err(DynamicsError::Lanes(format!(
                        "lane {} leaves the road at ({:.2}, {:.2})",
                        lane.id, p[0], p[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lane an actor is driving on: the nearest lane within `tolerance` meters whose heading
    /// at the projection is within 90° of the actor's. Returns `(lane, arc length)`.
    pub fn locate(&self, pose: &Pose, tolerance: f64) -> Option<(LaneId, f64)> {
        let p = [pose.x, pose.y];
        let mut best: Option<(LaneId, f64, f64)> = None;
        for lane in self.lanes.values() {
            let (s, d) = lane.project(p);
            if d > tolerance {
                continue;
            }
            let (_, heading) = lane.at(s);
            if (heading - pose.yaw).cos() <= 0.0 {
                continue;
            }
            // At a shared endpoint prefer the lane that continues.
            let score = d + if s >= lane.length - 1e-9 {
                tolerance
            } else {
                0.0
            };
            if best.is_none_or(|(_, _, b)| score < b) {
                best = Some((lane.id, s, score));
            }
        }
        best.map(|(id, s, _)| (id, s))
    }

    /// Follow `lane` (then first successors) from `s` by `ahead` meters.
    /// Returns the reached point and heading, or `None` past a dead end.
    pub fn advance(&self, lane: LaneId, s: f64, ahead: f64) -> Option<(Point2, f64)> {
        let mut id = lane;
        let mut s = s + ahead;
        loop {
            let l = self.lanes.get(&id)?;
            if s <= l.length {
                return Some(l.at(s));
            }
            s -= l.length;
            id = *l.successors.first()?;
        }
    }

    /// Tab-separated records `lane_id <TAB> x y;x y;... <TAB> successor,successor`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# lane_id\tpoints\tsuccessors\n");
        for lane in self.lanes.values() {
            let pts: Vec<String> = lane
                .points
                .iter()
                .map(|p| format!("{} {}", p[0], p[1]))
                .collect();
            let succ: Vec<String> = lane.successors.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{}\t{}\t{}", lane.id, pts.join(";"), succ.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DynamicsError> {
        let mut lanes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| DynamicsError::LaneFile {
                line: n + 1,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!(
                    "expected 3 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            let id: LaneId = fields[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad lane id {:?}", fields[0])))?;
            let mut points = Vec::new();
            for pair in fields[1].split(';') {
                let xy: Vec<f64> = pair
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(format!("bad point {pair:?}")))?;
                match xy[..] {
                    [x, y] => points.push([x, y]),
                    _ => return Err(bad(format!("point {pair:?} needs two coordinates"))),
                }
            }
            let successors = if fields[2].trim().is_empty() {
                Vec::new()
            } else {
                fields[2]
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(format!("bad successor list {:?}", fields[2])))?
            };
            lanes.push(Lane::new(id, points, successors));
        }
        Self::new(lanes)
    }
}
