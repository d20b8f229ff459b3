//! Regional static scene generation and the expansion/merge algebra that stitches regions
//! into a city.
//!
//! Expansion works on an outpainting canvas: the caller supplies the known part of the next
//! region already placed in that region's frame, plus a mask of the known voxels. The known
//! voxels are copied through unchanged and everything else comes from the generator.
//! [`Seam`] builds the canvas and masks for the common edge-adjacent case.

mod city;
mod generator;
mod roads;

pub use city::{build_city, LayoutConfig, RegionLayout, RoadSpec};
pub use generator::{ProceduralGenerator, RegionGenerator, SceneConfig};
pub use roads::RoadGrid;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, OverlapMask, SemanticGrid, VoxelLabel};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(
        "BEV is {bev:?} cells at {bev_cell} m but the grid footprint is {grid:?} at {grid_cell} m"
    )]
    FootprintMismatch {
        bev: [usize; 2],
        bev_cell: f64,
        grid: [usize; 2],
        grid_cell: f64,
    },
    #[error("mask dims {mask:?} do not match grid dims {grid:?}")]
    MaskMismatch { mask: [usize; 3], grid: [usize; 3] },
    #[error("generated region {generated:?} does not match canvas {canvas:?}")]
    CanvasMismatch {
        generated: [usize; 3],
        canvas: [usize; 3],
    },
    #[error("voxel sizes differ: {0} vs {1}")]
    VoxelSizeMismatch(f64, f64),
    #[error("offset {offset:?} inconsistent with the overlap mask ({mask_voxels} mask voxels, {box_voxels} shared voxels)")]
    BandMismatch {
        offset: [i64; 3],
        mask_voxels: usize,
        box_voxels: usize,
    },
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("slot ({row}, {col}): {source}")]
    Slot {
        row: usize,
        col: usize,
        #[source]
        source: Box<SceneError>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleTag {
    SuburbanVegetation,
    CommercialBuildings,
    OpenRoad,
}

impl StyleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SuburbanVegetation => "suburban-vegetation",
            Self::CommercialBuildings => "commercial-buildings",
            Self::OpenRoad => "open-road",
        }
    }
}

impl std::str::FromStr for StyleTag {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "suburban-vegetation" => Ok(Self::SuburbanVegetation),
            "commercial-buildings" => Ok(Self::CommercialBuildings),
            "open-road" => Ok(Self::OpenRoad),
            other => Err(SceneError::InvalidStyle(format!(
                "unknown style tag {other:?}"
            ))),
        }
    }
}

/// Regional appearance knobs. Fractions are probabilities in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneStyle {
    pub tag: StyleTag,
    pub building_fraction: f64,
    pub vegetation_fraction: f64,
}

impl SceneStyle {
    pub fn new(
        tag: StyleTag,
        building_fraction: f64,
        vegetation_fraction: f64,
    ) -> Result<Self, SceneError> {
        for (name, v) in [
            ("building_fraction", building_fraction),
            ("vegetation_fraction", vegetation_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SceneError::InvalidStyle(format!(
                    "{name} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            tag,
            building_fraction,
            vegetation_fraction,
        })
    }

    pub fn preset(tag: StyleTag) -> Self {
        let (b, v) = match tag {
            StyleTag::SuburbanVegetation => (0.15, 0.6),
            StyleTag::CommercialBuildings => (0.7, 0.05),
            StyleTag::OpenRoad => (0.02, 0.1),
        };
        Self {
            tag,
            building_fraction: b,
            vegetation_fraction: v,
        }
    }
}

/// `S_k ⊙ O`: keep voxels under set mask bits, empty elsewhere.
pub fn mask_partial(grid: &SemanticGrid, mask: &OverlapMask) -> Result<SemanticGrid, SceneError> {
    check_mask(grid, mask)?;
    let labels = grid
        .labels()
        .iter()
        .enumerate()
        .map(|(l, &v)| {
            if mask.get_linear(l) {
                v
            } else {
                VoxelLabel::EMPTY
            }
        })
        .collect();
    Ok(SemanticGrid::from_labels(
        grid.dims(),
        grid.voxel_size(),
        grid.origin(),
        labels,
    )?)
}

fn check_mask(grid: &SemanticGrid, mask: &OverlapMask) -> Result<(), SceneError> {
    if mask.dims() != grid.dims() {
        return Err(SceneError::MaskMismatch {
            mask: mask.dims(),
            grid: grid.dims(),
        });
    }
    Ok(())
}

/// Generate the next region with the masked voxels of `canvas` as hard conditioning.
///
/// `canvas` and `mask` live in the next region's frame. Output voxels under the mask equal
/// `canvas` exactly; the rest come from `generator` run on `bev_next`.
pub fn expand_region<G: RegionGenerator + ?Sized>(
    generator: &G,
    canvas: &SemanticGrid,
    mask: &OverlapMask,
    bev_next: &crate::grid::BevMap,
    style: &SceneStyle,
    seed: u64,
) -> Result<SemanticGrid, SceneError> {
    check_mask(canvas, mask)?;
    let generated = generator.generate(bev_next, style, seed)?;
    if generated.dims() != canvas.dims() {
        return Err(SceneError::CanvasMismatch {
            generated: generated.dims(),
            canvas: canvas.dims(),
        });
    }
    if mask.count_ones() == 0 {
        return Ok(generated);
    }
    let labels = generated
        .labels()
        .iter()
        .zip(canvas.labels())
        .enumerate()
        .map(|(l, (&g, &c))| if mask.get_linear(l) { c } else { g })
        .collect();
    Ok(SemanticGrid::from_labels(
        generated.dims(),
        generated.voxel_size(),
        generated.origin(),
        labels,
    )?)
}

/// `Merge(S_k ⊙ (1 − O), S_{k+1})`.
///
/// `mask` is in `prev`'s frame and must cover exactly the voxels shared with `next` placed at
/// `offset` (in `prev` voxel units). The merged grid spans the union of both boxes; voxels
/// covered by neither are empty.
pub fn merge_regions(
    prev: &SemanticGrid,
    next: &SemanticGrid,
    mask: &OverlapMask,
    offset: [i64; 3],
) -> Result<SemanticGrid, SceneError> {
    check_mask(prev, mask)?;
    if prev.voxel_size() != next.voxel_size() {
        return Err(SceneError::VoxelSizeMismatch(
            prev.voxel_size(),
            next.voxel_size(),
        ));
    }
    let pd = prev.dims().map(|d| d as i64);
    let nd = next.dims().map(|d| d as i64);
    let lo: [i64; 3] = std::array::from_fn(|a| offset[a].max(0));
    let hi: [i64; 3] = std::array::from_fn(|a| (offset[a] + nd[a]).min(pd[a]));
    let shared = OverlapMask::from_box(prev.dims(), lo, hi);
    if &shared != mask {
        let box_voxels = if (0..3).all(|a| lo[a] < hi[a]) {
            (0..3).map(|a| (hi[a] - lo[a]) as usize).product()
        } else {
            0
        };
        return Err(SceneError::BandMismatch {
            offset,
            mask_voxels: mask.count_ones(),
            box_voxels,
        });
    }

    let min: [i64; 3] = std::array::from_fn(|a| offset[a].min(0));
    let max: [i64; 3] = std::array::from_fn(|a| (offset[a] + nd[a]).max(pd[a]));
    let dims = std::array::from_fn(|a| (max[a] - min[a]) as usize);
    let vs = prev.voxel_size();
    let origin = std::array::from_fn(|a| prev.origin()[a] + min[a] as f64 * vs);
    let mut merged = SemanticGrid::new(dims, vs, origin)?;

    let place = |merged: &mut SemanticGrid,
                 src: &SemanticGrid,
                 at: [i64; 3],
                 skip: Option<&OverlapMask>| {
        let [sx, sy, sz] = src.dims();
        for i in 0..sx {
            for j in 0..sy {
                for k in 0..sz {
                    let l = src.linear([i, j, k]);
                    if skip.is_some_and(|m| m.get_linear(l)) {
                        continue;
                    }
                    let t = [
                        (i as i64 + at[0] - min[0]) as usize,
                        (j as i64 + at[1] - min[1]) as usize,
                        (k as i64 + at[2] - min[2]) as usize,
                    ];
                    merged.set(t, src.labels()[l]);
                }
            }
        }
    };
    place(&mut merged, prev, [0, 0, 0], Some(mask));
    place(&mut merged, next, offset, None);
    Ok(merged)
}

/// Which face of the current region the next region grows from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl std::str::FromStr for Side {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+x" => Ok(Self::PosX),
            "-x" => Ok(Self::NegX),
            "+y" => Ok(Self::PosY),
            "-y" => Ok(Self::NegY),
            other => Err(SceneError::InvalidLayout(format!(
                "side must be one of +x, -x, +y, -y; got {other:?}"
            ))),
        }
    }
}

/// Edge adjacency between a region and an equally sized neighbour sharing `width` voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct Seam {
    /// Position of the next region's first voxel in the current region's frame.
    pub offset: [i64; 3],
    /// Shared band in the current region's frame.
    pub mask_prev: OverlapMask,
    /// Shared band in the next region's frame.
    pub mask_next: OverlapMask,
}

impl Seam {
    pub fn new(dims: [usize; 3], side: Side, width: usize) -> Result<Self, SceneError> {
        let axis = match side {
            Side::PosX | Side::NegX => 0,
            Side::PosY | Side::NegY => 1,
        };
        let n = dims[axis] as i64;
        let w = width as i64;
        if width == 0 || w > n {
            return Err(SceneError::InvalidLayout(format!(
                "band width {width} must be in 1..={n}"
            )));
        }
        let full = dims.map(|d| d as i64);
        let slab = |from: i64, to: i64| {
            let mut lo = [0i64; 3];
            let mut hi = full;
            lo[axis] = from;
            hi[axis] = to;
            OverlapMask::from_box(dims, lo, hi)
        };
        let mut offset = [0i64; 3];
        let (mask_prev, mask_next) = match side {
            Side::PosX | Side::PosY => {
                offset[axis] = n - w;
                (slab(n - w, n), slab(0, w))
            }
            Side::NegX | Side::NegY => {
                offset[axis] = -(n - w);
                (slab(0, w), slab(n - w, n))
            }
        };
        Ok(Self {
            offset,
            mask_prev,
            mask_next,
        })
    }

    /// The next region's canvas: `prev` seen through this seam, empty outside the band.
    pub fn canvas(&self, prev: &SemanticGrid) -> Result<SemanticGrid, SceneError> {
        let window = prev.window(self.offset, prev.dims())?;
        mask_partial(&window, &self.mask_next)
    }
}

/// Expand `prev` across `seam` and return the new region in its own frame.
pub fn expand_across<G: RegionGenerator + ?Sized>(
    generator: &G,
    prev: &SemanticGrid,
    seam: &Seam,
    bev_next: &crate::grid::BevMap,
    style: &SceneStyle,
    seed: u64,
) -> Result<SemanticGrid, SceneError> {
    let canvas = seam.canvas(prev)?;
    expand_region(generator, &canvas, &seam.mask_next, bev_next, style, seed)
}
