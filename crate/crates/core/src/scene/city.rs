use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    expand_region, merge_regions, ProceduralGenerator, RegionGenerator, RoadGrid, SceneConfig,
    SceneError, SceneStyle, StyleTag,
};
use crate::codec;
use crate::grid::{BevMap, OverlapMask, SemanticGrid};
use crate::rng::mix;

/// Rectangular arrangement of equally sized region slots.
///
/// Slot `(r, c)` starts at voxel `(r * (H - band), c * (W - band))` of the city frame, so
/// row neighbours share `band` voxels along x and column neighbours share `band` along y.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionLayout {
    pub rows: usize,
    pub cols: usize,
    /// Slot footprint, depth and vertical frame.
    pub scene: SceneConfig,
    pub band: usize,
    /// World-frame xy of slot (0, 0)'s min corner.
    pub origin: [f64; 2],
    /// Per-slot BEV maps, row-major.
    pub bevs: Vec<BevMap>,
}

impl RegionLayout {
    /// Layout whose slot BEVs are windows of one road network.
    pub fn from_roads(
        rows: usize,
        cols: usize,
        scene: SceneConfig,
        band: usize,
        origin: [f64; 2],
        roads: &RoadGrid,
    ) -> Result<Self, SceneError> {
        let mut layout = Self {
            rows,
            cols,
            scene,
            band,
            origin,
            bevs: Vec::new(),
        };
        layout.check_shape()?;
        for r in 0..rows {
            for c in 0..cols {
                let o = layout.slot_origin(r, c);
                layout
                    .bevs
                    .push(roads.rasterize(scene.footprint, scene.voxel_size, o)?);
            }
        }
        Ok(layout)
    }

    fn check_shape(&self) -> Result<(), SceneError> {
        let [h, w] = self.scene.footprint;
        if self.rows == 0 || self.cols == 0 {
            return Err(SceneError::InvalidLayout(
                "layout needs at least one slot".into(),
            ));
        }
        if (self.rows > 1 && self.band >= h) || (self.cols > 1 && self.band >= w) {
            return Err(SceneError::InvalidLayout(format!(
                "band {} must be smaller than the slot footprint {h}x{w}",
                self.band
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.check_shape()?;
        if self.bevs.len() != self.rows * self.cols {
            return Err(SceneError::InvalidLayout(format!(
                "{} BEV maps for {} slots",
                self.bevs.len(),
                self.rows * self.cols
            )));
        }
        let tol = 1e-6 * self.scene.voxel_size;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let bev = &self.bevs[r * self.cols + c];
                let want = self.slot_origin(r, c);
                let o = bev.origin();
                if bev.dims() != self.scene.footprint
                    || bev.cell_size() != self.scene.voxel_size
                    || (o[0] - want[0]).abs() > tol
                    || (o[1] - want[1]).abs() > tol
                {
                    return Err(SceneError::Slot {
                        row: r,
                        col: c,
                        source: Box::new(SceneError::InvalidLayout(format!(
                            "BEV {:?} at {:?} does not fit slot footprint {:?} at {:?}",
                            bev.dims(),
                            o,
                            self.scene.footprint,
                            want
                        ))),
                    });
                }
            }
        }
        Ok(())
    }

    /// Slot start in city voxels.
    pub fn slot_offset(&self, row: usize, col: usize) -> [i64; 3] {
        let [h, w] = self.scene.footprint;
        [
            (row * (h - self.band.min(h))) as i64,
            (col * (w - self.band.min(w))) as i64,
            0,
        ]
    }

    pub fn slot_origin(&self, row: usize, col: usize) -> [f64; 2] {
        let off = self.slot_offset(row, col);
        [
            self.origin[0] + off[0] as f64 * self.scene.voxel_size,
            self.origin[1] + off[1] as f64 * self.scene.voxel_size,
        ]
    }

    /// Voxel extent of the assembled city.
    pub fn city_dims(&self) -> [usize; 3] {
        let [h, w] = self.scene.footprint;
        let last = self.slot_offset(self.rows - 1, self.cols - 1);
        [last[0] as usize + h, last[1] as usize + w, self.scene.depth]
    }

    /// Road map of the whole city, assembled from slot BEVs (later slots win on overlap).
    pub fn city_bev(&self) -> Result<BevMap, SceneError> {
        let [nx, ny, _] = self.city_dims();
        let mut out = BevMap::new([nx, ny], self.scene.voxel_size, self.origin)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let off = self.slot_offset(r, c);
                let bev = &self.bevs[r * self.cols + c];
                let [h, w] = bev.dims();
                for i in 0..h {
                    for j in 0..w {
                        out.set(off[0] as usize + i, off[1] as usize + j, bev.get(i, j));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot_err(row: usize, col: usize) -> impl Fn(SceneError) -> SceneError {
    move |e| SceneError::Slot {
        row,
        col,
        source: Box::new(e),
    }
}

/// Assemble a city with the default procedural generator.
pub fn build_city(
    layout: &RegionLayout,
    style: &SceneStyle,
    seed: u64,
) -> Result<SemanticGrid, SceneError> {
    build_city_with(&ProceduralGenerator::new(layout.scene), layout, style, seed)
}

/// Row-major fold of expansion and merging over the layout.
///
/// Each row is grown left to right into a strip; every slot is expanded from a canvas holding
/// what is already known at its footprint (the strip to its left and the city rows above).
/// The finished strip is then merged into the city along its top band.
pub fn build_city_with<G: RegionGenerator + ?Sized>(
    generator: &G,
    layout: &RegionLayout,
    style: &SceneStyle,
    seed: u64,
) -> Result<SemanticGrid, SceneError> {
    layout.validate()?;
    let [h, w] = layout.scene.footprint;
    let slot_dims = [h, w, layout.scene.depth];
    let mut city: Option<SemanticGrid> = None;

    for r in 0..layout.rows {
        let mut strip: Option<SemanticGrid> = None;
        for c in 0..layout.cols {
            let err = slot_err(r, c);
            let slot_off = layout.slot_offset(r, c);
            let bev = &layout.bevs[r * layout.cols + c];
            let origin = [bev.origin()[0], bev.origin()[1], layout.scene.z_origin];
            let mut canvas = SemanticGrid::new(slot_dims, layout.scene.voxel_size, origin)
                .map_err(|e| err(e.into()))?;
            let mut known = OverlapMask::empty(slot_dims);

            let mut absorb = |src: &SemanticGrid, at: [i64; 3]| {
                for l in 0..canvas.len() {
                    let [i, j, k] = canvas.coords(l);
                    let p = [at[0] + i as i64, at[1] + j as i64, at[2] + k as i64];
                    if let Some(v) = src.get_checked(p) {
                        canvas.set_linear(l, v);
                        known.set_linear(l, true);
                    }
                }
            };
            if let Some(city) = &city {
                absorb(city, slot_off);
            }
            if let Some(strip) = &strip {
                let strip_off = layout.slot_offset(0, c);
                absorb(strip, strip_off);
            }

            let slot_seed = mix(&[seed, r as u64, c as u64]);
            let region =
                expand_region(generator, &canvas, &known, bev, style, slot_seed).map_err(&err)?;

            strip = Some(match strip {
                None => region,
                Some(prev) => {
                    let off = layout.slot_offset(0, c);
                    let hi = [
                        prev.dims()[0] as i64,
                        prev.dims()[1] as i64,
                        prev.dims()[2] as i64,
                    ];
                    let band = OverlapMask::from_box(prev.dims(), [0, off[1], 0], hi);
                    merge_regions(&prev, &region, &band, off).map_err(&err)?
                }
            });
        }
        let strip = strip.expect("layout has at least one column");
        city = Some(match city {
            None => strip,
            Some(prev) => {
                let off = layout.slot_offset(r, 0);
                let hi = [
                    prev.dims()[0] as i64,
                    prev.dims()[1] as i64,
                    prev.dims()[2] as i64,
                ];
                let band = OverlapMask::from_box(prev.dims(), [off[0], 0, 0], hi);
                merge_regions(&prev, &strip, &band, off).map_err(slot_err(r, 0))?
            }
        });
    }
    Ok(city.expect("layout has at least one row"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoadSpec {
    Grid,
    None,
}

/// On-disk layout description (TOML). See `docs/formats.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_slot")]
    pub slot: [usize; 2],
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_voxel")]
    pub voxel_size: f64,
    #[serde(default = "default_z_origin")]
    pub z_origin: f64,
    #[serde(default = "default_ground")]
    pub ground_layer: usize,
    #[serde(default = "default_band")]
    pub band: usize,
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default = "default_style")]
    pub style: StyleTag,
    pub building_fraction: Option<f64>,
    pub vegetation_fraction: Option<f64>,
    #[serde(default)]
    pub roads: Option<RoadGrid>,
    /// Per-slot BEV files keyed `"row,col"`; they override the road network.
    #[serde(default)]
    pub slots: BTreeMap<String, String>,
}

fn default_slot() -> [usize; 2] {
    SceneConfig::default().footprint
}
fn default_depth() -> usize {
    SceneConfig::default().depth
}
fn default_voxel() -> f64 {
    SceneConfig::default().voxel_size
}
fn default_z_origin() -> f64 {
    SceneConfig::default().z_origin
}
fn default_ground() -> usize {
    SceneConfig::default().ground_layer
}
fn default_band() -> usize {
    16
}
fn default_style() -> StyleTag {
    StyleTag::SuburbanVegetation
}

impl LayoutConfig {
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        toml::from_str(text).map_err(|e| SceneError::InvalidLayout(e.to_string()))
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            footprint: self.slot,
            depth: self.depth,
            voxel_size: self.voxel_size,
            z_origin: self.z_origin,
            ground_layer: self.ground_layer,
        }
    }

    pub fn style(&self) -> Result<SceneStyle, SceneError> {
        let preset = SceneStyle::preset(self.style);
        SceneStyle::new(
            self.style,
            self.building_fraction.unwrap_or(preset.building_fraction),
            self.vegetation_fraction
                .unwrap_or(preset.vegetation_fraction),
        )
    }

    /// Resolve into a layout; relative slot BEV paths are taken from `base_dir`.
    pub fn to_layout(&self, base_dir: &Path) -> Result<RegionLayout, SceneError> {
        let roads = self.roads.unwrap_or(RoadGrid {
            x_roads: false,
            y_roads: false,
            ..RoadGrid::default()
        });
        let mut layout = RegionLayout::from_roads(
            self.rows,
            self.cols,
            self.scene_config(),
            self.band,
            self.origin,
            &roads,
        )?;
        for (key, path) in &self.slots {
            let (r, c) = key
                .split_once(',')
                .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)))
                .ok_or_else(|| SceneError::InvalidLayout(format!("bad slot key {key:?}")))?;
            if r >= self.rows || c >= self.cols {
                return Err(SceneError::InvalidLayout(format!(
                    "slot {key:?} outside layout"
                )));
            }
            let bev = codec::read_bev(base_dir.join(path))
                .map_err(|e| slot_err(r, c)(SceneError::Codec(e)))?;
            layout.bevs[r * self.cols + c] = bev;
        }
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<(RegionLayout, SceneStyle), SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SceneError::Codec(codec::CodecError::Io(e)))?;
        let cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((cfg.to_layout(base)?, cfg.style()?))
    }
}
