//! Voxelized foreground assets with captions and stable IDs.
//!
//! A bank on disk is a directory holding one `<asset_id>.occ4` file per asset and a
//! `manifest.tsv` with one tab-separated record per asset:
//!
//! ```text
//! asset_id <TAB> class <TAB> length <TAB> width <TAB> height <TAB> caption
//! ```
//!
//! `class` is the label name (e.g. `car`), footprint values are meters, and the caption runs
//! to the end of the line. Lines starting with `#` and blank lines are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError};
use crate::grid::{GridError, Pose, SemanticGrid, VoxelLabel};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Error)]
pub enum BankError {
    #[error("bank is empty")]
    Empty,
    #[error("no asset of class {0}")]
    NoAssetOfClass(VoxelLabel),
    #[error("duplicate asset id {0:?}")]
    DuplicateId(String),
    #[error("asset {asset_id:?}: file {path} is missing")]
    MissingAsset { asset_id: String, path: String },
    #[error("invalid asset id {0:?} (use letters, digits, '_', '-', '.')")]
    InvalidId(String),
    #[error("asset {asset_id:?}: {reason}")]
    InvalidAsset { asset_id: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("unknown asset id {0:?}")]
    UnknownAsset(String),
    #[error("asset {asset_id:?}: {source}")]
    Codec {
        asset_id: String,
        #[source]
        source: CodecError,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A voxelized foreground object in its local frame: footprint center at the xy origin,
/// bottom face at z = 0, facing +x.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorAsset {
    pub asset_id: String,
    pub class: VoxelLabel,
    pub caption: String,
    pub voxels: SemanticGrid,
    /// (length, width, height) in meters.
    pub footprint: [f64; 3],
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Bounding box of non-empty voxels as `(min index, max index)`.
fn occupied_bounds(grid: &SemanticGrid) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (l, _) in grid.occupied() {
        let c = grid.coords(l);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
        any = true;
    }
    any.then_some((lo, hi))
}

impl ActorAsset {
    /// Validate voxels and derive the footprint from their bounding box.
    pub fn new(
        asset_id: impl Into<String>,
        class: VoxelLabel,
        caption: impl Into<String>,
        voxels: SemanticGrid,
    ) -> Result<Self, BankError> {
        let asset_id = asset_id.into();
        let caption = caption.into();
        let invalid = |reason: String| BankError::InvalidAsset {
            asset_id: asset_id.clone(),
            reason,
        };
        if !valid_id(&asset_id) {
            return Err(BankError::InvalidId(asset_id));
        }
        if !class.is_foreground() {
            return Err(invalid(format!("class {class} is not a foreground class")));
        }
        if caption.contains(['\t', '\n', '\r']) {
            return Err(invalid("caption may not contain tabs or newlines".into()));
        }
        if let Some((l, v)) = voxels.occupied().find(|(_, v)| *v != class) {
            return Err(invalid(format!(
                "voxel {:?} carries {v}, expected {class}",
                voxels.coords(l)
            )));
        }
        let (lo, hi) = occupied_bounds(&voxels).ok_or_else(|| invalid("no voxels".into()))?;
        let vs = voxels.voxel_size();
        let footprint: [f64; 3] = std::array::from_fn(|a| (hi[a] - lo[a] + 1) as f64 * vs);
        // The box center must sit on the local xy origin.
        let min = voxels.center(lo);
        let max = voxels.center(hi);
        for a in 0..2 {
            let mid = (min[a] + max[a]) / 2.0;
            if mid.abs() > vs {
                return Err(invalid(format!(
                    "footprint center is {mid} m off the local origin on axis {a}"
                )));
            }
        }
        Ok(Self {
            asset_id,
            class,
            caption,
            voxels,
            footprint,
        })
    }

    /// Replace the derived footprint with a stated one, which must agree within one voxel.
    pub fn with_footprint(mut self, footprint: [f64; 3]) -> Result<Self, BankError> {
        let vs = self.voxels.voxel_size();
        for a in 0..3 {
            if !footprint[a].is_finite() || (footprint[a] - self.footprint[a]).abs() > vs {
                return Err(BankError::InvalidAsset {
                    asset_id: self.asset_id,
                    reason: format!(
                        "stated footprint {footprint:?} disagrees with voxel extent {:?}",
                        self.footprint
                    ),
                });
            }
        }
        self.footprint = footprint;
        Ok(self)
    }

    /// Box-shaped asset builder: `fill(i, j, k)` selects occupied voxels of an `dims` lattice
    /// centered on the local origin.
    pub fn from_shape(
        asset_id: &str,
        class: VoxelLabel,
        caption: &str,
        dims: [usize; 3],
        voxel_size: f64,
        fill: impl Fn(usize, usize, usize) -> bool,
    ) -> Result<Self, BankError> {
        let origin = [
            -(dims[0] as f64) * voxel_size / 2.0,
            -(dims[1] as f64) * voxel_size / 2.0,
            0.0,
        ];
        let mut grid = SemanticGrid::new(dims, voxel_size, origin)?;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    if fill(i, j, k) {
                        grid.set([i, j, k], class);
                    }
                }
            }
        }
        Self::new(asset_id, class, caption, grid)
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.count_non_empty()
    }
}

/// Placed actor with a stable per-episode identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorInstance {
    pub instance_id: u32,
    pub asset_id: String,
    pub pose: Pose,
    /// m/s along the heading.
    pub speed: f64,
}

/// Cruising speed hint per class, m/s.
pub fn default_speed(class: VoxelLabel) -> f64 {
    match class {
        VoxelLabel::PEDESTRIAN => 1.4,
        VoxelLabel::BICYCLE => 4.0,
        VoxelLabel::BUS | VoxelLabel::TRUCK | VoxelLabel::TRAILER => 7.0,
        VoxelLabel::CONSTRUCTION_VEHICLE => 5.0,
        _ => 8.0,
    }
}

/// Relevance of a caption to a query.
pub trait CaptionScorer {
    fn score(&self, query: &str, caption: &str) -> f64;
}

/// Count of shared lowercase alphanumeric tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct TokenOverlap;

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl CaptionScorer for TokenOverlap {
    fn score(&self, query: &str, caption: &str) -> f64 {
        let q = tokens(query);
        tokens(caption).intersection(&q).count() as f64
    }
}

/// Immutable asset library keyed by asset ID.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActorBank {
    assets: BTreeMap<String, ActorAsset>,
}

impl ActorBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_assets(assets: impl IntoIterator<Item = ActorAsset>) -> Result<Self, BankError> {
        let mut bank = Self::new();
        for a in assets {
            bank.insert(a)?;
        }
        Ok(bank)
    }

    pub fn insert(&mut self, asset: ActorAsset) -> Result<(), BankError> {
        if self.assets.contains_key(&asset.asset_id) {
            return Err(BankError::DuplicateId(asset.asset_id));
        }
        self.assets.insert(asset.asset_id.clone(), asset);
        Ok(())
    }

    /// Built-in parametric assets: sedan, bus, pedestrian and cyclist.
    pub fn builtin(voxel_size: f64) -> Self {
        let v = voxel_size;
        let cells = |m: f64| ((m / v).round() as usize).max(1);
        let (cl, cw, ch) = (cells(4.5), cells(2.0), cells(1.5));
        let sedan = ActorAsset::from_shape(
            "sedan",
            VoxelLabel::CAR,
            "red sedan passenger car",
            [cl, cw, ch],
            v,
            |i, _, k| k + 1 < ch || (i >= cl / 5 && i < cl - cl / 5),
        );
        let bus = ActorAsset::from_shape(
            "bus",
            VoxelLabel::BUS,
            "city bus public transit",
            [cells(12.0), cells(2.5), cells(3.5)],
            v,
            |_, _, _| true,
        );
        let pedestrian = ActorAsset::from_shape(
            "pedestrian",
            VoxelLabel::PEDESTRIAN,
            "adult pedestrian walking",
            [1, 1, cells(2.0)],
            v,
            |_, _, _| true,
        );
        let (bl, bh) = (cells(2.0), cells(2.0));
        let cyclist = ActorAsset::from_shape(
            "cyclist",
            VoxelLabel::BICYCLE,
            "cyclist riding a bicycle",
            [bl, 1, bh],
            v,
            |i, _, k| k < bh / 2 || (i >= bl / 4 && i < bl - bl / 4),
        );
        Self::from_assets(
            [sedan, bus, pedestrian, cyclist]
                .into_iter()
                .map(|a| a.expect("built-in shapes are valid")),
        )
        .expect("built-in ids are unique")
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&ActorAsset> {
        self.assets.get(asset_id)
    }

    pub fn resolve(&self, asset_id: &str) -> Result<&ActorAsset, BankError> {
        self.get(asset_id)
            .ok_or_else(|| BankError::UnknownAsset(asset_id.to_string()))
    }

    /// Assets in ascending asset-ID order.
    pub fn assets(&self) -> impl Iterator<Item = &ActorAsset> {
        self.assets.values()
    }

    pub fn select_by_caption(&self, query: &str, seed: u64) -> Result<&ActorAsset, BankError> {
        self.select_by_caption_with(&TokenOverlap, query, seed)
    }

    /// Best-scoring asset; ties go to the smallest asset ID. When nothing scores above zero,
    /// an asset is drawn uniformly with a seeded ChaCha8 generator.
    pub fn select_by_caption_with<S: CaptionScorer + ?Sized>(
        &self,
        scorer: &S,
        query: &str,
        seed: u64,
    ) -> Result<&ActorAsset, BankError> {
        let mut best: Option<(&ActorAsset, f64)> = None;
        for a in self.assets.values() {
            let s = scorer.score(query, &a.caption);
            // Strict comparison keeps the earlier (smaller) id on ties.
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((a, s));
            }
        }
        match best {
            None => Err(BankError::Empty),
            Some((a, s)) if s > 0.0 => Ok(a),
            Some(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let idx = rng.gen_range(0..self.assets.len());
                Ok(self.assets.values().nth(idx).expect("index in range"))
            }
        }
    }

    /// `count` draws with replacement among assets of `class`, in asset-ID order.
    pub fn sample_by_category(
        &self,
        class: VoxelLabel,
        count: usize,
        seed: u64,
    ) -> Result<Vec<&ActorAsset>, BankError> {
        let pool: Vec<&ActorAsset> = self.assets.values().filter(|a| a.class == class).collect();
        if pool.is_empty() {
            return Err(BankError::NoAssetOfClass(class));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect())
    }

    pub fn manifest(&self) -> String {
        let mut out = String::from("# asset_id\tclass\tlength\twidth\theight\tcaption\n");
        for a in self.assets.values() {
            let [l, w, h] = a.footprint;
            out.push_str(&format!(
                "{}\t{}\t{l}\t{w}\t{h}\t{}\n",
                a.asset_id,
                a.class.name(),
                a.caption
            ));
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), BankError> {
        fs::create_dir_all(dir)?;
        for a in self.assets.values() {
            codec::write_grid(dir.join(format!("{}.occ4", a.asset_id)), &a.voxels).map_err(
                |source| BankError::Codec {
                    asset_id: a.asset_id.clone(),
                    source,
                },
            )?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BankError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let mut bank = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| BankError::Manifest {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.splitn(6, '\t').collect();
            if fields.len() != 6 {
                return Err(bad(format!(
                    "expected 6 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            let asset_id = fields[0].to_string();
            if bank.assets.contains_key(&asset_id) {
                return Err(BankError::DuplicateId(asset_id));
            }
            if !valid_id(&asset_id) {
                return Err(BankError::InvalidId(asset_id));
            }
            let class = VoxelLabel::from_name(fields[1])
                .ok_or_else(|| bad(format!("unknown class {:?}", fields[1])))?;
            let mut footprint = [0.0; 3];
            for (a, f) in fields[2..5].iter().enumerate() {
                footprint[a] = f
                    .parse()
                    .map_err(|_| bad(format!("footprint value {f:?} is not a number")))?;
            }
            let path = dir.join(format!("{asset_id}.occ4"));
            if !path.is_file() {
                return Err(BankError::MissingAsset {
                    asset_id,
                    path: path.display().to_string(),
                });
            }
            let voxels = codec::read_grid(&path).map_err(|source| BankError::Codec {
                asset_id: asset_id.clone(),
                source,
            })?;
            let asset =
                ActorAsset::new(asset_id, class, fields[5], voxels)?.with_footprint(footprint)?;
            bank.insert(asset)?;
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(id: &str, class: VoxelLabel, caption: &str) -> ActorAsset {
        ActorAsset::from_shape(id, class, caption, [2, 2, 2], 0.5, |_, _, _| true).unwrap()
    }

    #[test]
    fn builtin_assets_are_consistent() {
        let bank = ActorBank::builtin(0.5);
        assert_eq!(bank.len(), 4);
        let sedan = bank.get("sedan").unwrap();
        assert_eq!(sedan.class, VoxelLabel::CAR);
        assert_eq!(sedan.footprint, [4.5, 2.0, 1.5]);
        assert_eq!(bank.get("pedestrian").unwrap().voxel_count(), 4);
        for a in bank.assets() {
            assert!(a.voxels.occupied().all(|(_, l)| l == a.class));
        }
    }

    #[test]
    fn asset_validation() {
        let mut g = SemanticGrid::new([2, 1, 1], 0.5, [-0.5, -0.25, 0.0]).unwrap();
        g.set([0, 0, 0], VoxelLabel::CAR);
        g.set([1, 0, 0], VoxelLabel::BUS);
        assert!(matches!(
            ActorAsset::new("x", VoxelLabel::CAR, "", g.clone()),
            Err(BankError::InvalidAsset { .. })
        ));
        g.set([1, 0, 0], VoxelLabel::CAR);
        assert!(ActorAsset::new("x", VoxelLabel::BUILDING, "", g.clone()).is_err());
        assert!(matches!(
            ActorAsset::new("a/b", VoxelLabel::CAR, "", g.clone()),
            Err(BankError::InvalidId(_))
        ));
        let a = ActorAsset::new("x", VoxelLabel::CAR, "ok", g).unwrap();
        assert_eq!(a.footprint, [1.0, 0.5, 0.5]);
        assert!(a.clone().with_footprint([1.4, 0.5, 0.5]).is_ok());
        assert!(a.with_footprint([2.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn exact_caption_match_wins() {
        let bank = ActorBank::from_assets([
            tiny("a_sedan", VoxelLabel::CAR, "red sedan"),
            tiny("b_bus", VoxelLabel::BUS, "city bus"),
        ])
        .unwrap();
        assert_eq!(
            bank.select_by_caption("red sedan", 0).unwrap().asset_id,
            "a_sedan"
        );
        assert_eq!(
            bank.select_by_caption("The CITY bus!", 0).unwrap().asset_id,
            "b_bus"
        );
    }

    #[test]
    fn caption_ties_go_to_smaller_id() {
        let bank = ActorBank::from_assets([
            tiny("zeta", VoxelLabel::CAR, "blue car"),
            tiny("alpha", VoxelLabel::CAR, "red car"),
        ])
        .unwrap();
        assert_eq!(bank.select_by_caption("car", 0).unwrap().asset_id, "alpha");
    }

    #[test]
    fn zero_overlap_falls_back_to_seeded_draw() {
        let bank = ActorBank::builtin(0.5);
        let ids: Vec<&str> = bank.assets().map(|a| a.asset_id.as_str()).collect();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let want = ids[rng.gen_range(0..ids.len())];
            assert_eq!(
                bank.select_by_caption("zzz qqq", seed).unwrap().asset_id,
                want
            );
        }
        assert!(matches!(
            ActorBank::new().select_by_caption("car", 0),
            Err(BankError::Empty)
        ));
    }

    #[test]
    fn category_sampling() {
        let bank = ActorBank::from_assets([
            tiny("c1", VoxelLabel::CAR, ""),
            tiny("c2", VoxelLabel::CAR, ""),
            tiny("p1", VoxelLabel::PEDESTRIAN, ""),
        ])
        .unwrap();
        assert!(bank
            .sample_by_category(VoxelLabel::CAR, 0, 1)
            .unwrap()
            .is_empty());
        let peds = bank
            .sample_by_category(VoxelLabel::PEDESTRIAN, 3, 1)
            .unwrap();
        assert!(peds.iter().all(|a| a.asset_id == "p1") && peds.len() == 3);
        let draws: Vec<&str> = bank
            .sample_by_category(VoxelLabel::CAR, 12, 77)
            .unwrap()
            .iter()
            .map(|a| a.asset_id.as_str())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let oracle: Vec<&str> = (0..12).map(|_| ["c1", "c2"][rng.gen_range(0..2)]).collect();
        assert_eq!(draws, oracle);
        assert!(matches!(
            bank.sample_by_category(VoxelLabel::BUS, 1, 0),
            Err(BankError::NoAssetOfClass(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = ActorBank::new();
        empty.save(&dir.path().join("empty")).unwrap();
        assert_eq!(ActorBank::load(&dir.path().join("empty")).unwrap(), empty);

        let bank = ActorBank::builtin(0.5);
        bank.save(dir.path()).unwrap();
        let loaded = ActorBank::load(dir.path()).unwrap();
        assert_eq!(loaded.len(), bank.len());
        for (a, b) in bank.assets().zip(loaded.assets()) {
            assert_eq!(a.asset_id, b.asset_id);
            assert_eq!(a.class, b.class);
            assert_eq!(a.caption, b.caption);
            assert_eq!(a.footprint, b.footprint);
            assert_eq!(a.voxels, b.voxels);
        }
    }

    #[test]
    fn load_reports_missing_file_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        ActorBank::builtin(0.5).save(dir.path()).unwrap();
        fs::remove_file(dir.path().join("bus.occ4")).unwrap();
        match ActorBank::load(dir.path()) {
            Err(BankError::MissingAsset { asset_id, .. }) => assert_eq!(asset_id, "bus"),
            other => panic!("unexpected {other:?}"),
        }

        let dir = tempfile::tempdir().unwrap();
        ActorBank::builtin(0.5).save(dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST_FILE);
        let mut text = fs::read_to_string(&manifest).unwrap();
        text.push_str("sedan\tcar\t4.5\t2\t1.5\tagain\n");
        fs::write(&manifest, text).unwrap();
        assert!(matches!(
            ActorBank::load(dir.path()),
            Err(BankError::DuplicateId(id)) if id == "sedan"
        ));
    }
}
