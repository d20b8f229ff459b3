use serde::{Deserialize, Serialize};

use super::{SceneError, SceneStyle};
use crate::grid::{BevCell, BevMap, SemanticGrid, VoxelLabel};
use crate::rng::{hash_unit, mix};

/// Pluggable region sampler. Implementations must be pure functions of their inputs.
pub trait RegionGenerator {
    fn generate(
        &self,
        bev: &BevMap,
        style: &SceneStyle,
        seed: u64,
    ) -> Result<SemanticGrid, SceneError>;
}

/// Vertical frame and footprint of generated regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Voxel counts along x and y; BEV inputs must match.
    pub footprint: [usize; 2],
    pub depth: usize,
    pub voxel_size: f64,
    /// World z of the lowest voxel layer's bottom face.
    pub z_origin: f64,
    /// Layer index holding the road/terrain surface.
    pub ground_layer: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            footprint: [200, 200],
            depth: 16,
            voxel_size: 0.5,
            z_origin: -1.0,
            ground_layer: 1,
        }
    }
}

impl SceneConfig {
    /// World z of the top face of the ground layer.
    pub fn ground_height(&self) -> f64 {
        self.z_origin + (self.ground_layer + 1) as f64 * self.voxel_size
    }
}

/// Seeded rule-based generator: ground surface from the BEV, extruded box buildings on
/// lots and value-noise vegetation blobs on open terrain.
///
/// Randomness is keyed on world-lattice coordinates, so neighbouring regions generated with
/// the same seed agree wherever their footprints overlap.
#[derive(Clone, Debug)]
pub struct ProceduralGenerator {
    pub config: SceneConfig,
    /// Building lot edge in meters.
    pub lot_size: f64,
    /// Vegetation noise wavelength in meters.
    pub vegetation_scale: f64,
}

const SALT_LOT: u64 = 0x4c4f54;
const SALT_LOT_SHAPE: u64 = 0x534841;
const SALT_VEG: u64 = 0x564547;
const SALT_VEG_HEIGHT: u64 = 0x564748;

impl Default for ProceduralGenerator {
    fn default() -> Self {
        Self::new(SceneConfig::default())
    }
}

impl ProceduralGenerator {
    pub fn new(config: SceneConfig) -> Self {
        Self {
            config,
            lot_size: 8.0,
            vegetation_scale: 6.0,
        }
    }

    fn value_noise(&self, seed: u64, x: f64, y: f64) -> f64 {
        let gx = x / self.vegetation_scale;
        let gy = y / self.vegetation_scale;
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (sx, sy) = (smooth(fx), smooth(fy));
        let corner = |dx: i64, dy: i64| {
            hash_unit(&[
                seed,
                SALT_VEG,
                (x0 as i64 + dx) as u64,
                (y0 as i64 + dy) as u64,
            ])
        };
        let top = corner(0, 0) * (1.0 - sx) + corner(1, 0) * sx;
        let bottom = corner(0, 1) * (1.0 - sx) + corner(1, 1) * sx;
        top * (1.0 - sy) + bottom * sy
    }

    /// Building height in voxels for an open-terrain column, or 0.
    fn building_height(&self, seed: u64, style: &SceneStyle, x: f64, y: f64) -> usize {
        let lx = (x / self.lot_size).floor() as i64;
        let ly = (y / self.lot_size).floor() as i64;
        let key = [seed, SALT_LOT, lx as u64, ly as u64];
        if hash_unit(&key) >= style.building_fraction {
            return 0;
        }
        let shape = mix(&[seed, SALT_LOT_SHAPE, lx as u64, ly as u64]);
        // Inset of 1..=2 m on each side keeps gaps between neighbouring boxes.
        let inset = |bits: u64| 1.0 + (bits % 3) as f64 * 0.5;
        let (x0, x1) = (inset(shape), inset(shape >> 8));
        let (y0, y1) = (inset(shape >> 16), inset(shape >> 24));
        let u = x - lx as f64 * self.lot_size;
        let v = y - ly as f64 * self.lot_size;
        if u < x0 || u > self.lot_size - x1 || v < y0 || v > self.lot_size - y1 {
            return 0;
        }
        2 + ((shape >> 32) % 7) as usize
    }
}

impl RegionGenerator for ProceduralGenerator {
    fn generate(
        &self,
        bev: &BevMap,
        style: &SceneStyle,
        seed: u64,
    ) -> Result<SemanticGrid, SceneError> {
        let cfg = &self.config;
        if bev.dims() != cfg.footprint || bev.cell_size() != cfg.voxel_size {
            return Err(SceneError::FootprintMismatch {
                bev: bev.dims(),
                bev_cell: bev.cell_size(),
                grid: cfg.footprint,
                grid_cell: cfg.voxel_size,
            });
        }
        let [nx, ny] = cfg.footprint;
        let nz = cfg.depth;
        let origin = [bev.origin()[0], bev.origin()[1], cfg.z_origin];
        let mut grid = SemanticGrid::new([nx, ny, nz], cfg.voxel_size, origin)?;
        let ground = cfg.ground_layer;
        if ground >= nz {
            return Err(SceneError::InvalidLayout(format!(
                "ground layer {ground} outside depth {nz}"
            )));
        }
        for i in 0..nx {
            for j in 0..ny {
                let cell = bev.get(i, j);
                let surface = match cell {
                    BevCell::Drivable | BevCell::LaneDivider | BevCell::Junction => {
                        VoxelLabel::DRIVABLE_SURFACE
                    }
                    BevCell::Sidewalk => VoxelLabel::SIDEWALK,
                    BevCell::Empty => VoxelLabel::TERRAIN,
                };
                grid.set([i, j, ground], surface);
                if cell != BevCell::Empty {
                    continue;
                }
                let [x, y] = bev.cell_center(i, j);
                let (label, height) = match self.building_height(seed, style, x, y) {
                    0 => {
                        if self.value_noise(seed, x, y) < style.vegetation_fraction {
                            let gx = (x / cfg.voxel_size).floor() as i64;
                            let gy = (y / cfg.voxel_size).floor() as i64;
                            let h = 1 + (mix(&[seed, SALT_VEG_HEIGHT, gx as u64, gy as u64]) % 3);
                            (VoxelLabel::VEGETATION, h as usize)
                        } else {
                            (VoxelLabel::EMPTY, 0)
                        }
                    }
                    h => (VoxelLabel::BUILDING, h),
                };
                for k in (ground + 1)..(ground + 1 + height).min(nz) {
                    grid.set([i, j, k], label);
                }
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::StyleTag;

    fn config(n: usize) -> SceneConfig {
        SceneConfig {
            footprint: [n, n],
            ..SceneConfig::default()
        }
    }

    fn open_bev(n: usize) -> BevMap {
        BevMap::new([n, n], 0.5, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn all_drivable_bev_has_no_buildings() {
        let n = 48;
        let mut bev = open_bev(n);
        for i in 0..n {
            for j in 0..n {
                bev.set(i, j, BevCell::Drivable);
            }
        }
        let gen = ProceduralGenerator::new(config(n));
        for tag in [
            StyleTag::SuburbanVegetation,
            StyleTag::CommercialBuildings,
            StyleTag::OpenRoad,
        ] {
            let g = gen.generate(&bev, &SceneStyle::preset(tag), 3).unwrap();
            assert_eq!(g.count(VoxelLabel::BUILDING), 0);
            assert_eq!(g.count(VoxelLabel::DRIVABLE_SURFACE), n * n);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g.get([i, j, 1]), VoxelLabel::DRIVABLE_SURFACE);
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let gen = ProceduralGenerator::new(config(64));
        let style = SceneStyle::preset(StyleTag::CommercialBuildings);
        let a = gen.generate(&open_bev(64), &style, 42).unwrap();
        let b = gen.generate(&open_bev(64), &style, 42).unwrap();
        assert_eq!(a, b);
        let c = gen.generate(&open_bev(64), &style, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn suburban_has_more_vegetation_than_commercial() {
        let gen = ProceduralGenerator::new(config(96));
        let bev = open_bev(96);
        for seed in 0..5 {
            let sub = gen
                .generate(
                    &bev,
                    &SceneStyle::preset(StyleTag::SuburbanVegetation),
                    seed,
                )
                .unwrap();
            let com = gen
                .generate(
                    &bev,
                    &SceneStyle::preset(StyleTag::CommercialBuildings),
                    seed,
                )
                .unwrap();
            let veg = |g: &SemanticGrid| g.count(VoxelLabel::VEGETATION);
            assert!(
                veg(&sub) > veg(&com),
                "seed {seed}: {} vs {}",
                veg(&sub),
                veg(&com)
            );
            assert!(com.count(VoxelLabel::BUILDING) > sub.count(VoxelLabel::BUILDING));
        }
    }

    #[test]
    fn building_heights_in_range() {
        let gen = ProceduralGenerator::new(config(80));
        let g = gen
            .generate(
                &open_bev(80),
                &SceneStyle::preset(StyleTag::CommercialBuildings),
                5,
            )
            .unwrap();
        for i in 0..80 {
            for j in 0..80 {
                let h = (0..16)
                    .filter(|&k| g.get([i, j, k]) == VoxelLabel::BUILDING)
                    .count();
                assert!(h == 0 || (2..=8).contains(&h), "column height {h}");
            }
        }
    }

    #[test]
    fn footprint_mismatch_rejected() {
        let gen = ProceduralGenerator::new(config(16));
        let style = SceneStyle::preset(StyleTag::OpenRoad);
        assert!(matches!(
            gen.generate(&open_bev(17), &style, 0),
            Err(SceneError::FootprintMismatch { .. })
        ));
        let coarse = BevMap::new([16, 16], 1.0, [0.0, 0.0]).unwrap();
        assert!(gen.generate(&coarse, &style, 0).is_err());
    }

    #[test]
    fn overlapping_footprints_agree() {
        let gen = ProceduralGenerator::new(config(40));
        let style = SceneStyle::preset(StyleTag::SuburbanVegetation);
        let a = gen.generate(&open_bev(40), &style, 9).unwrap();
        let shifted = BevMap::new([40, 40], 0.5, [10.0, 0.0]).unwrap();
        let b = gen.generate(&shifted, &style, 9).unwrap();
        for i in 20..40 {
            for j in 0..40 {
                for k in 0..16 {
                    assert_eq!(a.get([i, j, k]), b.get([i - 20, j, k]));
                }
            }
        }
    }
}
