//! Pinhole cameras ray-casting a voxel world into semantic label and depth images.
//!
//! Cameras follow the computer-vision convention: x right, y down, z forward. Each pixel
//! casts one ray through its center. A ray reports the first non-empty voxel whose chord
//! along the ray starts at `t > 0` and is longer than [`MIN_CHORD`]; the reported depth is
//! the Euclidean distance from the camera center to the entry point. Points lying on a
//! voxel face belong to the voxel the ray is entering; a ray running inside a face plane
//! belongs to the voxel with the smaller index on that axis.

mod io;

pub use io::{read_depth, read_pgm, write_depth, write_pgm, CameraSpec, RigConfig};

use rayon::prelude::*;
use thiserror::Error;

use crate::compose::WorldState;
use crate::grid::{Pose, SemanticGrid, VoxelLabel};

/// Chords at or below this length (meters) count as grazing contacts, not hits.
pub const MIN_CHORD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("ray origin is not finite")]
    NonFiniteOrigin,
    #[error("ray direction must be finite and non-zero")]
    BadDirection,
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("rotation is not orthonormal (error {0:e})")]
    NotOrthonormal(f64),
    #[error("unknown view {0:?}")]
    UnknownView(String),
    #[error("duplicate view name {0:?}")]
    DuplicateView(String),
    #[error("rig config: {0}")]
    Config(String),
    #[error("malformed image file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    std::array::from_fn(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    std::array::from_fn(|c| m[0][c] * v[0] + m[1][c] * v[1] + m[2][c] * v[2])
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|r| std::array::from_fn(|c| (0..3).map(|k| a[r][k] * b[k][c]).sum()))
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Rigid transform `p_to = rotation · p_from + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Extrinsics {
    pub const IDENTITY: Extrinsics = Extrinsics {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0; 3],
    };

    /// Camera-from-parent transform for a camera at `position` (parent frame: x forward,
    /// y left, z up) looking along `yaw` (counter-clockwise from +x) and `pitch` (positive down).
    pub fn look(position: Vec3, yaw: f64, pitch: f64) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = [cp * cy, cp * sy, -sp];
        let right = [sy, -cy, 0.0];
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let t = mat_vec(&rotation, position);
        Self {
            rotation,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// Ego-from-world transform for an ego at `pose` (ego frame: x forward, y left, z up).
    pub fn ego_from_world(pose: &Pose) -> Self {
        let (s, c) = pose.yaw.sin_cos();
        let rotation = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
        let t = mat_vec(&rotation, [pose.x, pose.y, pose.z]);
        Self {
            rotation,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self ∘ inner`: first apply `inner`, then `self`.
    pub fn then(&self, inner: &Extrinsics) -> Extrinsics {
        let t = mat_vec(&self.rotation, inner.translation);
        Extrinsics {
            rotation: mat_mul(&self.rotation, &inner.rotation),
            translation: std::array::from_fn(|i| t[i] + self.translation[i]),
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, p);
        std::array::from_fn(|i| r[i] + self.translation[i])
    }

    /// Origin of this frame expressed in the parent frame.
    pub fn center(&self) -> Vec3 {
        let c = mat_t_vec(&self.rotation, self.translation);
        [-c[0], -c[1], -c[2]]
    }

    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut err = 0.0f64;
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| r[a][k] * r[b][k]).sum();
                err = err.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        err.max((det - 1.0).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Pinhole camera with camera-from-world (or camera-from-ego, inside a rig) extrinsics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<Self, ProjectError> {
        let k = &intrinsics;
        if !(k.fx.is_finite() && k.fx > 0.0 && k.fy.is_finite() && k.fy > 0.0) {
            return Err(ProjectError::Intrinsics(format!(
                "focal lengths must be positive, got fx {} fy {}",
                k.fx, k.fy
            )));
        }
        if !(k.cx.is_finite() && k.cy.is_finite()) || k.width == 0 || k.height == 0 {
            return Err(ProjectError::Intrinsics(
                "principal point must be finite and image non-empty".into(),
            ));
        }
        if extrinsics.translation.iter().any(|v| !v.is_finite()) {
            return Err(ProjectError::NonFiniteOrigin);
        }
        let err = extrinsics.orthonormality_error();
        if err.is_nan() || err > 1e-9 {
            return Err(ProjectError::NotOrthonormal(err));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
        })
    }

    /// Unnormalized world-frame direction through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let k = &self.intrinsics;
        let d = [
            (u as f64 + 0.5 - k.cx) / k.fx,
            (v as f64 + 0.5 - k.cy) / k.fy,
            1.0,
        ];
        mat_t_vec(&self.extrinsics.rotation, d)
    }

    pub fn center(&self) -> Vec3 {
        self.extrinsics.center()
    }

    /// Pixel coordinates of a world point, if in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<[f64; 2]> {
        let c = self.extrinsics.apply(p);
        (c[2] > 0.0).then(|| {
            let k = &self.intrinsics;
            [k.fx * c[0] / c[2] + k.cx, k.fy * c[1] / c[2] + k.cy]
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub label: VoxelLabel,
    pub depth: f64,
    pub voxel: [usize; 3],
}

/// Time at which the ray crosses boundary plane `m` on `axis`.
#[inline]
fn plane_t(grid: &SemanticGrid, o: Vec3, d: Vec3, axis: usize, m: i64) -> f64 {
    (grid.origin()[axis] + m as f64 * grid.voxel_size() - o[axis]) / d[axis]
}

/// Voxel index on an axis the ray does not move along.
#[inline]
fn fixed_index(grid: &SemanticGrid, o: Vec3, axis: usize) -> i64 {
    ((o[axis] - grid.origin()[axis]) / grid.voxel_size()).ceil() as i64 - 1
}

fn normalized(direction: Vec3) -> Result<Vec3, ProjectError> {
    let n = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(ProjectError::BadDirection);
    }
    Ok(direction.map(|v| v / n))
}

/// First voxel hit along the ray using exact boundary-to-boundary traversal.
pub fn cast_ray(
    grid: &SemanticGrid,
    origin: Vec3,
    direction: Vec3,
) -> Result<Option<Hit>, ProjectError> {
    if origin.iter().any(|v| !v.is_finite()) {
        return Err(ProjectError::NonFiniteOrigin);
    }
    let d = normalized(direction)?;
    Ok(traverse(grid, origin, d))
}

fn traverse(grid: &SemanticGrid, o: Vec3, d: Vec3) -> Option<Hit> {
    let dims = grid.dims().map(|n| n as i64);
    let (mut t_enter, mut t_exit) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if d[a] == 0.0 {
            let i = fixed_index(grid, o, a);
            if i < 0 || i >= dims[a] {
                return None;
            }
            continue;
        }
        let (t0, t1) = (plane_t(grid, o, d, a, 0), plane_t(grid, o, d, a, dims[a]));
        t_enter = t_enter.max(t0.min(t1));
        t_exit = t_exit.min(t0.max(t1));
    }
    if t_enter >= t_exit {
        return None;
    }
    let start = t_enter;
    // Starting cell: every crossing at or before `start + MIN_CHORD` is already behind us.
    let mut idx = [0i64; 3];
    for a in 0..3 {
        if d[a] == 0.0 {
            idx[a] = fixed_index(grid, o, a);
            continue;
        }
        let p = (o[a] + start * d[a] - grid.origin()[a]) / grid.voxel_size();
        let mut i = (p.floor() as i64).clamp(0, dims[a] - 1);
        let limit = start + MIN_CHORD;
        if d[a] > 0.0 {
            while i + 1 < dims[a] && plane_t(grid, o, d, a, i + 1) <= limit {
                i += 1;
            }
            while i > 0 && plane_t(grid, o, d, a, i) > limit {
                i -= 1;
            }
        } else {
            while i > 0 && plane_t(grid, o, d, a, i) <= limit {
                i -= 1;
            }
            while i + 1 < dims[a] && plane_t(grid, o, d, a, i + 1) > limit {
                i += 1;
            }
        }
        idx[a] = i;
    }
    let mut t_cur = start;
    loop {
        let next: [f64; 3] = std::array::from_fn(|a| {
            if d[a] > 0.0 {
                plane_t(grid, o, d, a, idx[a] + 1)
            } else if d[a] < 0.0 {
                plane_t(grid, o, d, a, idx[a])
            } else {
                f64::INFINITY
            }
        });
        let t_next = next[0].min(next[1]).min(next[2]);
        let label = grid.get(idx.map(|i| i as usize));
        if !label.is_empty() && t_cur > 0.0 && t_next - t_cur > MIN_CHORD {
            return Some(Hit {
                label,
                depth: t_cur,
                voxel: idx.map(|i| i as usize),
            });
        }
        let limit = t_next + MIN_CHORD;
        for a in 0..3 {
            if next[a] <= limit {
                idx[a] += if d[a] > 0.0 { 1 } else { -1 };
                if idx[a] < 0 || idx[a] >= dims[a] {
                    return None;
                }
            }
        }
        t_cur = t_next;
    }
}

/// Per-pixel labels and depths; depth is `+∞` where the ray misses.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<VoxelLabel>,
    pub depth: Vec<f64>,
}

impl SemanticImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![VoxelLabel::EMPTY; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn at(&self, u: usize, v: usize) -> (VoxelLabel, f64) {
        let i = v * self.width + u;
        (self.labels[i], self.depth[i])
    }

    pub fn hit_count(&self) -> usize {
        self.labels.iter().filter(|l| !l.is_empty()).count()
    }
}

/// Render a grid through a camera whose extrinsics are camera-from-world.
pub fn render_grid(grid: &SemanticGrid, cam: &CameraModel) -> SemanticImage {
    let Intrinsics { width, height, .. } = cam.intrinsics;
    let origin = cam.center();
    let rows: Vec<Vec<(VoxelLabel, f64)>> = (0..height)
        .into_par_iter()
        .map(|v| {
            (0..width)
                .map(|u| {
                    let d = normalized(cam.pixel_ray(u, v)).expect("pixel rays have unit z");
                    traverse(grid, origin, d)
                        .map_or((VoxelLabel::EMPTY, f64::INFINITY), |h| (h.label, h.depth))
                })
                .collect()
        })
        .collect();
    let mut img = SemanticImage::empty(width, height);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, (l, dep)) in row.into_iter().enumerate() {
            img.labels[v * width + u] = l;
            img.depth[v * width + u] = dep;
        }
    }
    img
}

pub fn render_view(world: &WorldState, cam: &CameraModel) -> SemanticImage {
    render_grid(&world.grid, cam)
}

/// Named cameras with camera-from-ego extrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    views: Vec<(String, CameraModel)>,
}

impl CameraRig {
    pub fn new(views: Vec<(String, CameraModel)>) -> Result<Self, ProjectError> {
        for (i, (name, _)) in views.iter().enumerate() {
            if views[..i].iter().any(|(n, _)| n == name) {
                return Err(ProjectError::DuplicateView(name.clone()));
            }
        }
        Ok(Self { views })
    }

    /// Six views around the ego at `width × height`, 70° horizontal field of view each.
    pub fn surround(width: usize, height: usize) -> Self {
        RigConfig::surround(width, height)
            .build()
            .expect("built-in rig is valid")
    }

    pub fn views(&self) -> &[(String, CameraModel)] {
        &self.views
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.views.iter().map(|(n, _)| n.as_str())
    }

    /// Cameras placed in the world for an ego at `ego_pose`, in rig order or restricted to
    /// `subset` (in the subset's order).
    pub fn place(
        &self,
        ego_pose: &Pose,
        subset: Option<&[&str]>,
    ) -> Result<Vec<(String, CameraModel)>, ProjectError> {
        if !ego_pose.is_finite() {
            return Err(ProjectError::NonFiniteOrigin);
        }
        let ego = Extrinsics::ego_from_world(ego_pose);
        let chosen: Vec<&(String, CameraModel)> = match subset {
            None => self.views.iter().collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    self.views
                        .iter()
                        .find(|(v, _)| v == n)
                        .ok_or_else(|| ProjectError::UnknownView(n.to_string()))
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(chosen
            .into_iter()
            .map(|(name, cam)| {
                (
                    name.clone(),
                    CameraModel {
                        intrinsics: cam.intrinsics,
                        extrinsics: cam.extrinsics.then(&ego),
                    },
                )
            })
            .collect())
    }
}

/// Render every rig view (or `subset`) for an ego at `ego_pose`.
pub fn render_rig(
    world: &WorldState,
    rig: &CameraRig,
    ego_pose: &Pose,
    subset: Option<&[&str]>,
) -> Result<Vec<(String, SemanticImage)>, ProjectError> {
    let placed = rig.place(ego_pose, subset)?;
    Ok(placed
        .into_par_iter()
        .map(|(name, cam)| (name, render_view(world, &cam)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn grid16() -> SemanticGrid {
        SemanticGrid::new([16, 16, 16], 0.5, [0.0; 3]).unwrap()
    }

    fn world(grid: SemanticGrid) -> WorldState {
        WorldState {
            tick: 0,
            time: 0.0,
            grid,
            static_ref: String::new(),
            actors: Vec::new(),
            instance_map: BTreeMap::new(),
            static_conflicts: Vec::new(),
            actor_conflicts: Vec::new(),
            off_grid: Vec::new(),
        }
    }

    #[test]
    fn empty_grid_misses() {
        assert_eq!(
            cast_ray(&grid16(), [-1.0, 1.0, 1.0], [1.0, 0.0, 0.0]).unwrap(),
            None
        );
    }

    #[test]
    fn axis_ray_hits_at_slab_distance() {
        let mut g = grid16();
        g.set([0, 0, 0], VoxelLabel::CAR);
        let h = cast_ray(&g, [-1.0, 0.25, 0.25], [1.0, 0.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!(
            (h.label, h.depth, h.voxel),
            (VoxelLabel::CAR, 1.0, [0, 0, 0])
        );
    }

    #[test]
    fn nearer_voxel_wins() {
        let mut g = grid16();
        g.set([10, 3, 3], VoxelLabel::BUILDING);
        g.set([5, 3, 3], VoxelLabel::PEDESTRIAN);
        let h = cast_ray(&g, [-1.0, 1.7, 1.6], [2.0, 0.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!(h.label, VoxelLabel::PEDESTRIAN);
        assert_eq!(h.depth, 3.5);
    }

    #[test]
    fn face_plane_ray_takes_smaller_index() {
        let mut g = grid16();
        // Ray along x inside the plane y = 1.0, between rows j = 1 and j = 2.
        g.set([4, 2, 0], VoxelLabel::CAR);
        assert_eq!(
            cast_ray(&g, [0.1, 1.0, 0.2], [1.0, 0.0, 0.0]).unwrap(),
            None
        );
        g.set([6, 1, 0], VoxelLabel::BUS);
        let h = cast_ray(&g, [0.1, 1.0, 0.2], [1.0, 0.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!((h.label, h.voxel), (VoxelLabel::BUS, [6, 1, 0]));
    }

    #[test]
    fn corner_graze_is_not_a_hit() {
        let mut g = grid16();
        // Diagonal through the shared corner of (2,2,·) and (3,3,·) touches (3,2,·) only at a point.
        g.set([3, 2, 1], VoxelLabel::CAR);
        assert_eq!(
            cast_ray(&g, [0.0, 0.0, 0.7], [1.0, 1.0, 0.0]).unwrap(),
            None
        );
        g.set([4, 4, 1], VoxelLabel::BUS);
        let h = cast_ray(&g, [0.0, 0.0, 0.7], [1.0, 1.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!(h.voxel, [4, 4, 1]);
        assert!((h.depth - 2.0f64.sqrt() * 2.0).abs() < 1e-12);
    }

    #[test]
    fn origin_voxel_is_skipped() {
        let mut g = grid16();
        g.set([2, 2, 2], VoxelLabel::CAR);
        g.set([4, 2, 2], VoxelLabel::BUS);
        let h = cast_ray(&g, [1.2, 1.2, 1.2], [1.0, 0.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!(h.label, VoxelLabel::BUS);
    }

    #[test]
    fn rejects_bad_rays() {
        let g = grid16();
        assert!(matches!(
            cast_ray(&g, [f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(ProjectError::NonFiniteOrigin)
        ));
        assert!(matches!(
            cast_ray(&g, [0.0; 3], [0.0; 3]),
            Err(ProjectError::BadDirection)
        ));
    }

    fn forward_camera(w: usize, h: usize, f: f64, position: Vec3, yaw: f64) -> CameraModel {
        CameraModel::new(
            Intrinsics {
                fx: f,
                fy: f,
                cx: w as f64 / 2.0,
                cy: h as f64 / 2.0,
                width: w,
                height: h,
            },
            Extrinsics::look(position, yaw, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn voxel_on_axis_forms_blob_around_principal_point() {
        let mut g = SemanticGrid::new([40, 8, 8], 0.5, [0.0, -2.0, -2.0]).unwrap();
        // Voxel centered at (10.25, 0.25, 0.25); camera 10 m behind its near face center plane.
        let target = [20, 4, 4];
        g.set(target, VoxelLabel::CAR);
        let cam = forward_camera(33, 33, 40.0, [0.25, 0.25, 0.25], 0.0);
        let img = render_grid(&g, &cam);
        let (l, depth) = img.at(16, 16);
        assert_eq!(l, VoxelLabel::CAR);
        assert!((9.5..=10.0).contains(&depth));
        assert!(img.hit_count() > 1);
        for v in 0..33 {
            for u in 0..33 {
                if img.at(u, v).0 == VoxelLabel::CAR {
                    assert!(u.abs_diff(16) <= 2 && v.abs_diff(16) <= 2);
                }
            }
        }
    }

    #[test]
    fn camera_validation() {
        let k = Intrinsics {
            fx: 10.0,
            fy: 10.0,
            cx: 4.0,
            cy: 4.0,
            width: 8,
            height: 8,
        };
        assert!(CameraModel::new(Intrinsics { fx: 0.0, ..k }, Extrinsics::IDENTITY).is_err());
        let mut e = Extrinsics::IDENTITY;
        e.rotation[0][0] = 1.0 + 1e-6;
        assert!(matches!(
            CameraModel::new(k, e),
            Err(ProjectError::NotOrthonormal(_))
        ));
        let mut flip = Extrinsics::IDENTITY;
        flip.rotation[2][2] = -1.0;
        assert!(CameraModel::new(k, flip).is_err());
    }

    #[test]
    fn look_and_ego_transforms_compose() {
        let cam = Extrinsics::look([1.0, 2.0, 3.0], 0.3, 0.1);
        assert!(cam.orthonormality_error() < 1e-12);
        let c = cam.center();
        assert!(
            (c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12 && (c[2] - 3.0).abs() < 1e-12
        );
        let pose = Pose::new(5.0, -1.0, 0.5, 1.2);
        let placed = cam.then(&Extrinsics::ego_from_world(&pose));
        let want = Pose::compose(&pose, &Pose::new(1.0, 2.0, 3.0, 0.0));
        let got = placed.center();
        assert!((got[0] - want.x).abs() < 1e-12 && (got[1] - want.y).abs() < 1e-12);
    }

    #[test]
    fn rig_front_sees_ahead_not_behind() {
        let mut g = SemanticGrid::new([64, 64, 8], 0.5, [-16.0, -16.0, 0.0]).unwrap();
        for k in 0..8 {
            g.set([52, 32, k], VoxelLabel::BUILDING); // x = 10.25
        }
        let w = world(g);
        let rig = CameraRig::surround(40, 24);
        let ego = Pose::new(0.0, 0.0, 0.0, 0.0);
        let views: BTreeMap<String, SemanticImage> = render_rig(&w, &rig, &ego, None)
            .unwrap()
            .into_iter()
            .collect();
        assert!(views["front"].hit_count() > 0);
        assert_eq!(views["back"].hit_count(), 0);
        assert!(matches!(
            render_rig(&w, &rig, &ego, Some(&["front", "roof"])),
            Err(ProjectError::UnknownView(v)) if v == "roof"
        ));
    }

    #[test]
    fn identity_rig_camera_matches_placed_camera() {
        let mut g = SemanticGrid::new([32, 32, 8], 0.5, [-8.0, -8.0, 0.0]).unwrap();
        for i in 0..32 {
            g.set([i, 5, 2], VoxelLabel::VEGETATION);
            g.set([20, i, 1], VoxelLabel::BUILDING);
        }
        let k = Intrinsics {
            fx: 12.0,
            fy: 12.0,
            cx: 8.0,
            cy: 6.0,
            width: 16,
            height: 12,
        };
        let in_ego = CameraModel::new(k, Extrinsics::look([0.0, 0.0, 1.3], 0.0, 0.2)).unwrap();
        let rig = CameraRig::new(vec![("cam".into(), in_ego)]).unwrap();
        let pose = Pose::new(1.1, -0.3, 0.0, 0.4);
        let direct = CameraModel::new(
            k,
            Extrinsics::look([0.0, 0.0, 1.3], 0.0, 0.2).then(&Extrinsics::ego_from_world(&pose)),
        )
        .unwrap();
        let w = world(g);
        let via_rig = render_rig(&w, &rig, &pose, None).unwrap();
        assert_eq!(via_rig[0].1, render_view(&w, &direct));
    }

    #[test]
    fn duplicate_views_rejected() {
        let cam = forward_camera(4, 4, 4.0, [0.0; 3], 0.0);
        assert!(matches!(
            CameraRig::new(vec![("a".into(), cam), ("a".into(), cam)]),
            Err(ProjectError::DuplicateView(_))
        ));
    }
}
