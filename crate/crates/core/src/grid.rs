//! Voxel data model and coordinate conventions.
//!
//! Axes: `i` runs along world x, `j` along world y, `k` along world z (up).
//! Labels are stored row-major with `k` fastest: `linear = (i * ny + j) * nz + k`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use bitvec::vec::BitVec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must all be >= 1, got {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("voxel size must be finite and > 0, got {0}")]
    InvalidVoxelSize(f64),
    #[error("non-finite origin coordinate")]
    NonFiniteOrigin,
    #[error("label array has {actual} entries, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("voxel index {index:?} outside dims {dims:?}")]
    OutOfBounds { index: [i64; 3], dims: [usize; 3] },
    #[error("world point {0:?} lies outside the grid")]
    PointOutside([f64; 3]),
    #[error("invalid label code {0}")]
    InvalidLabel(u8),
    #[error("invalid BEV cell code {0}")]
    InvalidCell(u8),
    #[error("mask dims {mask:?} do not match grid dims {grid:?}")]
    MaskDims { mask: [usize; 3], grid: [usize; 3] },
}

/// Semantic class code. `0` is empty space; `1..=17` index the class table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoxelLabel(u8);

impl VoxelLabel {
    pub const EMPTY: Self = Self(0);
    pub const BARRIER: Self = Self(1);
    pub const BICYCLE: Self = Self(2);
    pub const BUS: Self = Self(3);
    pub const CAR: Self = Self(4);
    pub const CONSTRUCTION_VEHICLE: Self = Self(5);
    pub const MOTORCYCLE: Self = Self(6);
    pub const PEDESTRIAN: Self = Self(7);
    pub const TRAFFIC_CONE: Self = Self(8);
    pub const TRAILER: Self = Self(9);
    pub const TRUCK: Self = Self(10);
    pub const DRIVABLE_SURFACE: Self = Self(11);
    pub const OTHER_FLAT: Self = Self(12);
    pub const SIDEWALK: Self = Self(13);
    pub const TERRAIN: Self = Self(14);
    pub const BUILDING: Self = Self(15);
    pub const VEGETATION: Self = Self(16);
    pub const OTHER: Self = Self(17);

    pub const MAX_CODE: u8 = 17;

    const NAMES: [&'static str; 18] = [
        "empty",
        "barrier",
        "bicycle",
        "bus",
        "car",
        "construction_vehicle",
        "motorcycle",
        "pedestrian",
        "traffic_cone",
        "trailer",
        "truck",
        "drivable_surface",
        "other_flat",
        "sidewalk",
        "terrain",
        "building",
        "vegetation",
        "other",
    ];

    pub fn new(code: u8) -> Result<Self, GridError> {
        if code <= Self::MAX_CODE {
            Ok(Self(code))
        } else {
            Err(GridError::InvalidLabel(code))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.0 as usize]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|p| Self(p as u8))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Movable object classes that may be stored in the actor bank.
    pub fn is_foreground(self) -> bool {
        matches!(self.0, 2..=7 | 9 | 10)
    }

    /// Ground-level surface classes that a vehicle may stand on without colliding.
    pub fn is_flat(self) -> bool {
        matches!(self.0, 11..=14)
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..=Self::MAX_CODE).map(Self)
    }
}

impl fmt::Debug for VoxelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.0)
    }
}

impl fmt::Display for VoxelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn validate_frame(dims: &[usize], voxel_size: f64, origin: &[f64]) -> Result<(), GridError> {
    if dims.contains(&0) {
        return Err(GridError::InvalidDims(dims.to_vec()));
    }
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(GridError::InvalidVoxelSize(voxel_size));
    }
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(GridError::NonFiniteOrigin);
    }
    Ok(())
}

/// Dense semantic voxel lattice with a metric frame.
#[derive(Clone, PartialEq, Debug)]
pub struct SemanticGrid {
    dims: [usize; 3],
    voxel_size: f64,
    origin: [f64; 3],
    labels: Vec<VoxelLabel>,
}

impl SemanticGrid {
    /// All-empty grid.
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: [f64; 3]) -> Result<Self, GridError> {
        validate_frame(&dims, voxel_size, &origin)?;
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            dims,
            voxel_size,
            origin,
            labels: vec![VoxelLabel::EMPTY; n],
        })
    }

    pub fn from_labels(
        dims: [usize; 3],
        voxel_size: f64,
        origin: [f64; 3],
        labels: Vec<VoxelLabel>,
    ) -> Result<Self, GridError> {
        validate_frame(&dims, voxel_size, &origin)?;
        let expected = dims[0] * dims[1] * dims[2];
        if labels.len() != expected {
            return Err(GridError::LengthMismatch {
                expected,
                actual: labels.len(),
            });
        }
        Ok(Self {
            dims,
            voxel_size,
            origin,
            labels,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[VoxelLabel] {
        &self.labels
    }

    pub fn in_bounds(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    pub fn linear(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn checked_linear(&self, idx: [i64; 3]) -> Result<usize, GridError> {
        if self.in_bounds(idx) {
            Ok(self.linear([idx[0] as usize, idx[1] as usize, idx[2] as usize]))
        } else {
            Err(GridError::OutOfBounds {
                index: idx,
                dims: self.dims,
            })
        }
    }

    pub fn coords(&self, linear: usize) -> [usize; 3] {
        let k = linear % self.dims[2];
        let rest = linear / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    pub fn get(&self, idx: [usize; 3]) -> VoxelLabel {
        self.labels[self.linear(idx)]
    }

    /// Label at a possibly out-of-range index; `None` outside the grid.
    pub fn get_checked(&self, idx: [i64; 3]) -> Option<VoxelLabel> {
        self.checked_linear(idx).ok().map(|l| self.labels[l])
    }

    pub fn set(&mut self, idx: [usize; 3], label: VoxelLabel) {
        let l = self.linear(idx);
        self.labels[l] = label;
    }

    pub fn set_linear(&mut self, linear: usize, label: VoxelLabel) {
        self.labels[linear] = label;
    }

    pub fn count(&self, label: VoxelLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn count_non_empty(&self) -> usize {
        self.labels.iter().filter(|l| !l.is_empty()).count()
    }

    /// World coordinate of a voxel center.
    pub fn voxel_to_world(&self, idx: [i64; 3]) -> Result<[f64; 3], GridError> {
        self.checked_linear(idx)?;
        Ok(std::array::from_fn(|a| {
            self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size
        }))
    }

    /// Unchecked variant of [`Self::voxel_to_world`] for indices already known valid.
    pub fn center(&self, idx: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size)
    }

    /// Index of the voxel containing a world point; faces belong to the upper voxel.
    pub fn world_to_voxel_unchecked(&self, p: [f64; 3]) -> [i64; 3] {
        std::array::from_fn(|a| ((p[a] - self.origin[a]) / self.voxel_size).floor() as i64)
    }

    pub fn world_to_voxel(&self, p: [f64; 3]) -> Result<[usize; 3], GridError> {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(GridError::PointOutside(p));
        }
        let idx = self.world_to_voxel_unchecked(p);
        if self.in_bounds(idx) {
            Ok([idx[0] as usize, idx[1] as usize, idx[2] as usize])
        } else {
            Err(GridError::PointOutside(p))
        }
    }

    /// World-frame min and max corners.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let max = std::array::from_fn(|a| self.origin[a] + self.dims[a] as f64 * self.voxel_size);
        (self.origin, max)
    }

    /// Window of `dims` voxels whose first voxel sits at `offset` in this grid.
    /// Voxels of the window outside this grid are empty; the window keeps this grid's lattice.
    pub fn window(&self, offset: [i64; 3], dims: [usize; 3]) -> Result<SemanticGrid, GridError> {
        let origin = std::array::from_fn(|a| self.origin[a] + offset[a] as f64 * self.voxel_size);
        let mut out = SemanticGrid::new(dims, self.voxel_size, origin)?;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let src = [
                        offset[0] + i as i64,
                        offset[1] + j as i64,
                        offset[2] + k as i64,
                    ];
                    if let Some(l) = self.get_checked(src) {
                        out.set([i, j, k], l);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Iterator over `(linear index, label)` for non-empty voxels.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, VoxelLabel)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| (i, *l))
    }
}

/// Road-structure code of a BEV cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum BevCell {
    #[default]
    Empty = 0,
    Drivable = 1,
    LaneDivider = 2,
    Sidewalk = 3,
    Junction = 4,
}

impl BevCell {
    pub fn from_code(code: u8) -> Result<Self, GridError> {
        Ok(match code {
            0 => Self::Empty,
            1 => Self::Drivable,
            2 => Self::LaneDivider,
            3 => Self::Sidewalk,
            4 => Self::Junction,
            c => return Err(GridError::InvalidCell(c)),
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Cells a vehicle may drive on.
    pub fn is_road(self) -> bool {
        matches!(self, Self::Drivable | Self::LaneDivider | Self::Junction)
    }
}

/// Top-down road-structure raster. Row-major with `j` fastest.
#[derive(Clone, PartialEq, Debug)]
pub struct BevMap {
    dims: [usize; 2],
    cell_size: f64,
    origin: [f64; 2],
    cells: Vec<BevCell>,
}

impl BevMap {
    pub fn new(dims: [usize; 2], cell_size: f64, origin: [f64; 2]) -> Result<Self, GridError> {
        validate_frame(&dims, cell_size, &origin)?;
        Ok(Self {
            dims,
            cell_size,
            origin,
            cells: vec![BevCell::Empty; dims[0] * dims[1]],
        })
    }

    pub fn from_cells(
        dims: [usize; 2],
        cell_size: f64,
        origin: [f64; 2],
        cells: Vec<BevCell>,
    ) -> Result<Self, GridError> {
        validate_frame(&dims, cell_size, &origin)?;
        let expected = dims[0] * dims[1];
        if cells.len() != expected {
            return Err(GridError::LengthMismatch {
                expected,
                actual: cells.len(),
            });
        }
        Ok(Self {
            dims,
            cell_size,
            origin,
            cells,
        })
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cells(&self) -> &[BevCell] {
        &self.cells
    }

    pub fn get(&self, i: usize, j: usize) -> BevCell {
        self.cells[i * self.dims[1] + j]
    }

    pub fn get_checked(&self, i: i64, j: i64) -> Option<BevCell> {
        if i >= 0 && j >= 0 && (i as usize) < self.dims[0] && (j as usize) < self.dims[1] {
            Some(self.get(i as usize, j as usize))
        } else {
            None
        }
    }

    pub fn set(&mut self, i: usize, j: usize, cell: BevCell) {
        let w = self.dims[1];
        self.cells[i * w + j] = cell;
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn cell_at(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let i = ((p[0] - self.origin[0]) / self.cell_size).floor();
        let j = ((p[1] - self.origin[1]) / self.cell_size).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.dims[0] && (j as usize) < self.dims[1] {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    /// Sub-map of `dims` cells starting at cell `offset`; cells outside this map are empty.
    pub fn window(&self, offset: [i64; 2], dims: [usize; 2]) -> Result<BevMap, GridError> {
        let origin = [
            self.origin[0] + offset[0] as f64 * self.cell_size,
            self.origin[1] + offset[1] as f64 * self.cell_size,
        ];
        let mut out = BevMap::new(dims, self.cell_size, origin)?;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                if let Some(c) = self.get_checked(offset[0] + i as i64, offset[1] + j as i64) {
                    out.set(i, j, c);
                }
            }
        }
        Ok(out)
    }

    /// Road-structure view of a voxel grid: columns with a drivable-surface voxel become
    /// drivable, sidewalk columns become sidewalk. Dividers and junctions are not recoverable.
    pub fn from_grid(grid: &SemanticGrid) -> BevMap {
        let [nx, ny, nz] = grid.dims();
        let o = grid.origin();
        let mut bev = BevMap::new([nx, ny], grid.voxel_size(), [o[0], o[1]])
            .expect("grid frame already validated");
        for i in 0..nx {
            for j in 0..ny {
                let column = (0..nz).map(|k| grid.get([i, j, k]));
                let mut cell = BevCell::Empty;
                for l in column {
                    if l == VoxelLabel::DRIVABLE_SURFACE {
                        cell = BevCell::Drivable;
                        break;
                    }
                    if l == VoxelLabel::SIDEWALK {
                        cell = BevCell::Sidewalk;
                    }
                }
                bev.set(i, j, cell);
            }
        }
        bev
    }
}

/// Wrap an angle into `(-π, π]`. Angles already in range are returned unchanged.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let mut r = yaw.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Planar pose plus elevation, in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.yaw.is_finite()
    }

    pub fn heading(&self) -> [f64; 2] {
        [self.yaw.cos(), self.yaw.sin()]
    }

    /// This pose expressed in the frame of `reference` (x forward, y left, z up).
    pub fn relative_to(&self, reference: &Pose) -> Pose {
        let dx = self.x - reference.x;
        let dy = self.y - reference.y;
        let (s, c) = reference.yaw.sin_cos();
        Pose::new(
            c * dx + s * dy,
            -s * dx + c * dy,
            self.z - reference.z,
            self.yaw - reference.yaw,
        )
    }

    /// Inverse of [`Self::relative_to`]: a pose given in `reference`'s frame, mapped to world.
    pub fn compose(reference: &Pose, local: &Pose) -> Pose {
        let (s, c) = reference.yaw.sin_cos();
        Pose::new(
            reference.x + c * local.x - s * local.y,
            reference.y + s * local.x + c * local.y,
            reference.z + local.z,
            reference.yaw + local.yaw,
        )
    }
}

/// Dense bitset over a grid's voxels; set bits mark the overlap band.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OverlapMask {
    dims: [usize; 3],
    bits: BitVec,
}

impl OverlapMask {
    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: BitVec::repeat(false, dims[0] * dims[1] * dims[2]),
        }
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: BitVec::repeat(true, dims[0] * dims[1] * dims[2]),
        }
    }

    /// Axis-aligned box `[lo, hi)` of set bits, clipped to `dims`.
    pub fn from_box(dims: [usize; 3], lo: [i64; 3], hi: [i64; 3]) -> Self {
        Self::from_fn(dims, |idx| {
            (0..3).all(|a| idx[a] as i64 >= lo[a] && (idx[a] as i64) < hi[a])
        })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let mut bits = BitVec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    bits.push(f([i, j, k]));
                }
            }
        }
        Self { dims, bits }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get_linear(&self, linear: usize) -> bool {
        self.bits[linear]
    }

    pub fn get(&self, idx: [usize; 3]) -> bool {
        self.bits[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]]
    }

    pub fn set_linear(&mut self, linear: usize, value: bool) {
        self.bits.set(linear, value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn check_dims(&self, grid: &SemanticGrid) -> Result<(), GridError> {
        if self.dims == grid.dims() {
            Ok(())
        } else {
            Err(GridError::MaskDims {
                mask: self.dims,
                grid: grid.dims(),
            })
        }
    }
}
