//! Stamping posed actors into a static scene to form the per-tick world.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::bank::{ActorAsset, ActorBank, ActorInstance, BankError};
use crate::geometry::OrientedRect;
use crate::grid::{SemanticGrid, VoxelLabel};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("actor {0} lies entirely outside the grid")]
    OutsideGrid(u32),
    #[error("actor {0} has a non-finite pose")]
    NonFinitePose(u32),
    #[error("duplicate instance id {0}")]
    DuplicateInstance(u32),
    #[error(transparent)]
    Bank(#[from] BankError),
}

/// Outcome of stamping one actor. Voxels are linear grid indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Stamp {
    pub writes: Vec<usize>,
    /// Static voxels overwritten, with their previous label.
    pub static_conflicts: Vec<(usize, VoxelLabel)>,
    /// Voxels already owned by an earlier actor, with that owner.
    pub actor_conflicts: Vec<(usize, u32)>,
    /// Asset voxels that landed outside the grid.
    pub clipped: usize,
}

/// World voxel receiving each asset voxel under `instance.pose` (nearest-center resampling),
/// or `None` when it falls outside the grid. Several asset voxels may share a target.
pub fn actor_voxels<'a>(
    grid: &'a SemanticGrid,
    instance: &'a ActorInstance,
    asset: &'a ActorAsset,
) -> impl Iterator<Item = Option<usize>> + 'a {
    let (s, c) = instance.pose.yaw.sin_cos();
    asset.voxels.occupied().map(move |(l, _)| {
        let p = asset.voxels.center(asset.voxels.coords(l));
        let world = [
            instance.pose.x + c * p[0] - s * p[1],
            instance.pose.y + s * p[0] + c * p[1],
            instance.pose.z + p[2],
        ];
        grid.checked_linear(grid.world_to_voxel_unchecked(world))
            .ok()
    })
}

/// Write one actor into `grid`, recording ownership in `instance_map`. Voxels owned by a
/// previously stamped actor are left untouched and reported.
pub fn stamp_actor(
    grid: &mut SemanticGrid,
    instance_map: &mut BTreeMap<usize, u32>,
    instance: &ActorInstance,
    asset: &ActorAsset,
) -> Result<Stamp, ComposeError> {
    if !instance.pose.is_finite() {
        return Err(ComposeError::NonFinitePose(instance.instance_id));
    }
    let targets: Vec<Option<usize>> = actor_voxels(grid, instance, asset).collect();
    if targets.iter().all(Option::is_none) {
        return Err(ComposeError::OutsideGrid(instance.instance_id));
    }
    let mut stamp = Stamp::default();
    let mut seen = BTreeSet::new();
    for target in targets {
        let Some(v) = target else {
            stamp.clipped += 1;
            continue;
        };
        if !seen.insert(v) {
            continue;
        }
        if let Some(&owner) = instance_map.get(&v) {
            stamp.actor_conflicts.push((v, owner));
            continue;
        }
        let prev = grid.labels()[v];
        if !prev.is_empty() {
            stamp.static_conflicts.push((v, prev));
        }
        grid.set_linear(v, asset.class);
        instance_map.insert(v, instance.instance_id);
        stamp.writes.push(v);
    }
    Ok(stamp)
}

/// An actor in the composed world with the attributes downstream checks need.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActorState {
    pub instance: ActorInstance,
    pub class: VoxelLabel,
    /// (length, width, height), m.
    pub footprint: [f64; 3],
}

impl ActorState {
    pub fn rect(&self) -> OrientedRect {
        let p = &self.instance.pose;
        OrientedRect::new([p.x, p.y], self.footprint[0], self.footprint[1], p.yaw)
    }

    pub fn velocity(&self) -> [f64; 2] {
        let [hx, hy] = self.instance.pose.heading();
        [self.instance.speed * hx, self.instance.speed * hy]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActorConflict {
    pub voxel: usize,
    pub owner: u32,
    pub intruder: u32,
}

/// The composed world at one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub time: f64,
    pub grid: SemanticGrid,
    pub static_ref: String,
    /// Ascending instance ID.
    pub actors: Vec<ActorState>,
    /// Actor-occupied voxel → owning instance.
    pub instance_map: BTreeMap<usize, u32>,
    /// `(voxel, instance)` pairs where an actor overwrote static geometry.
    pub static_conflicts: Vec<(usize, u32)>,
    pub actor_conflicts: Vec<ActorConflict>,
    /// Actors that fell completely outside the grid and were not stamped.
    pub off_grid: Vec<u32>,
}

impl WorldState {
    pub fn actor(&self, instance_id: u32) -> Option<&ActorState> {
        self.actors
            .binary_search_by_key(&instance_id, |a| a.instance.instance_id)
            .ok()
            .map(|i| &self.actors[i])
    }
}

/// Compose the world for one tick: a fresh copy of `static_scene` with actors stamped in
/// ascending instance-ID order. Earlier actors keep contested voxels.
pub fn compose_world(
    static_scene: &SemanticGrid,
    static_ref: &str,
    actors: &[ActorInstance],
    bank: &ActorBank,
    tick: u64,
    time: f64,
) -> Result<WorldState, ComposeError> {
    let mut ordered: Vec<&ActorInstance> = actors.iter().collect();
    ordered.sort_by_key(|a| a.instance_id);
    if let Some(w) = ordered
        .windows(2)
        .find(|w| w[0].instance_id == w[1].instance_id)
    {
        return Err(ComposeError::DuplicateInstance(w[0].instance_id));
    }
    let assets: Vec<&ActorAsset> = ordered
        .iter()
        .map(|a| bank.resolve(&a.asset_id))
        .collect::<Result<_, _>>()?;

    let mut world = WorldState {
        tick,
        time,
        grid: static_scene.clone(),
        static_ref: static_ref.to_string(),
        actors: Vec::with_capacity(ordered.len()),
        instance_map: BTreeMap::new(),
        static_conflicts: Vec::new(),
        actor_conflicts: Vec::new(),
        off_grid: Vec::new(),
    };
    for (instance, asset) in ordered.into_iter().zip(assets) {
        let id = instance.instance_id;
        match stamp_actor(&mut world.grid, &mut world.instance_map, instance, asset) {
            Ok(stamp) => {
                world
                    .static_conflicts
                    .extend(stamp.static_conflicts.iter().map(|&(v, _)| (v, id)));
                world
                    .actor_conflicts
                    .extend(
                        stamp
                            .actor_conflicts
                            .iter()
                            .map(|&(voxel, owner)| ActorConflict {
                                voxel,
                                owner,
                                intruder: id,
                            }),
                    );
            }
            Err(ComposeError::OutsideGrid(_)) => world.off_grid.push(id),
            Err(e) => return Err(e),
        }
        world.actors.push(ActorState {
            instance: instance.clone(),
            class: asset.class,
            footprint: asset.footprint,
        });
    }
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pose;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn scene() -> SemanticGrid {
        SemanticGrid::new([20, 20, 6], 0.5, [0.0, 0.0, 0.0]).unwrap()
    }

    fn two_voxel() -> ActorAsset {
        // Voxels at local x = -0.25 (bottom) and +0.25 (bottom and one above): asymmetric.
        ActorAsset::from_shape("two", VoxelLabel::CAR, "", [2, 1, 2], 0.5, |i, _, k| {
            k == 0 || i == 1
        })
        .unwrap()
    }

    fn place(id: u32, asset: &str, x: f64, y: f64, yaw: f64) -> ActorInstance {
        ActorInstance {
            instance_id: id,
            asset_id: asset.into(),
            pose: Pose::new(x, y, 0.0, yaw),
            speed: 0.0,
        }
    }

    fn indices(grid: &SemanticGrid, writes: &[usize]) -> BTreeSet<[usize; 3]> {
        writes.iter().map(|&v| grid.coords(v)).collect()
    }

    #[test]
    fn identity_pose_translates_asset() {
        let mut g = scene();
        let mut map = BTreeMap::new();
        let asset = two_voxel();
        let s = stamp_actor(&mut g, &mut map, &place(1, "two", 5.0, 5.25, 0.0), &asset).unwrap();
        let want: BTreeSet<[usize; 3]> = [[9, 10, 0], [10, 10, 0], [10, 10, 1]].into();
        assert_eq!(indices(&g, &s.writes), want);
        assert!(s.static_conflicts.is_empty() && s.clipped == 0);
    }

    #[test]
    fn quarter_turn_rotates_offsets() {
        let mut g = scene();
        let mut map = BTreeMap::new();
        let s = stamp_actor(
            &mut g,
            &mut map,
            &place(1, "two", 5.25, 5.0, FRAC_PI_2),
            &two_voxel(),
        )
        .unwrap();
        // Local (dx, dy) = (±0.25, 0) becomes (0, ±0.25).
        let want: BTreeSet<[usize; 3]> = [[10, 9, 0], [10, 10, 0], [10, 10, 1]].into();
        assert_eq!(indices(&g, &s.writes), want);
    }

    #[test]
    fn building_overlap_reported() {
        let mut g = scene();
        g.set([10, 10, 1], VoxelLabel::BUILDING);
        let mut map = BTreeMap::new();
        let s = stamp_actor(
            &mut g,
            &mut map,
            &place(1, "two", 5.0, 5.25, 0.0),
            &two_voxel(),
        )
        .unwrap();
        assert_eq!(
            s.static_conflicts,
            vec![(g.linear([10, 10, 1]), VoxelLabel::BUILDING)]
        );
        assert_eq!(g.get([10, 10, 1]), VoxelLabel::CAR);
    }

    #[test]
    fn clipping_and_outside() {
        let mut g = scene();
        let mut map = BTreeMap::new();
        let asset = two_voxel();
        let s = stamp_actor(&mut g, &mut map, &place(1, "two", 0.0, 1.0, 0.0), &asset).unwrap();
        assert_eq!(s.clipped, 1);
        assert_eq!(s.writes.len(), 2);
        assert!(matches!(
            stamp_actor(&mut g, &mut map, &place(2, "two", -5.0, 1.0, 0.0), &asset),
            Err(ComposeError::OutsideGrid(2))
        ));
    }

    fn bank() -> ActorBank {
        let mut b = ActorBank::builtin(0.5);
        b.insert(two_voxel()).unwrap();
        b
    }

    #[test]
    fn zero_actors_is_static_scene() {
        let g = scene();
        let w = compose_world(&g, "s", &[], &bank(), 0, 0.0).unwrap();
        assert_eq!(w.grid, g);
        assert!(w.instance_map.is_empty());
    }

    #[test]
    fn single_pedestrian_voxel_column() {
        let g = scene();
        let ped = place(3, "pedestrian", 2.1, 3.3, 0.4);
        let w = compose_world(&g, "s", &[ped], &bank(), 1, 0.5).unwrap();
        // The 1×1×4 pedestrian occupies one column of four voxels.
        let changed: Vec<[usize; 3]> = (0..g.len())
            .filter(|&l| w.grid.labels()[l] != g.labels()[l])
            .map(|l| w.grid.coords(l))
            .collect();
        assert_eq!(changed, vec![[4, 6, 0], [4, 6, 1], [4, 6, 2], [4, 6, 3]]);
        assert_eq!(w.instance_map.len(), 4);
        assert!(w.instance_map.values().all(|&id| id == 3));
    }

    #[test]
    fn lower_id_keeps_contested_voxels() {
        let g = scene();
        let a = place(7, "two", 5.0, 5.25, 0.0);
        let b = place(2, "two", 5.0, 5.25, 0.0);
        let w = compose_world(&g, "s", &[a, b], &bank(), 0, 0.0).unwrap();
        assert!(w.instance_map.values().all(|&id| id == 2));
        assert_eq!(w.actor_conflicts.len(), 3);
        assert!(w
            .actor_conflicts
            .iter()
            .all(|c| c.owner == 2 && c.intruder == 7));
        assert_eq!(
            w.actors
                .iter()
                .map(|a| a.instance.instance_id)
                .collect::<Vec<_>>(),
            vec![2, 7]
        );
    }

    #[test]
    fn unknown_asset_and_duplicate_ids() {
        let g = scene();
        assert!(matches!(
            compose_world(&g, "s", &[place(1, "nope", 1.0, 1.0, 0.0)], &bank(), 0, 0.0),
            Err(ComposeError::Bank(BankError::UnknownAsset(_)))
        ));
        let p = place(1, "two", 1.0, 1.0, 0.0);
        assert!(matches!(
            compose_world(&g, "s", &[p.clone(), p], &bank(), 0, 0.0),
            Err(ComposeError::DuplicateInstance(1))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn composition_invariants(
            seed in any::<u64>(),
            poses in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, -3.1..3.1f64, 0usize..4), 0..6),
        ) {
            let mut g = scene();
            let mut rng = seed;
            for l in 0..g.len() {
                rng = crate::rng::splitmix64(rng);
                if rng % 10 == 0 {
                    g.set_linear(l, VoxelLabel::BUILDING);
                }
            }
            let b = bank();
            let names = ["sedan", "pedestrian", "cyclist", "two"];
            let actors: Vec<ActorInstance> = poses
                .iter()
                .enumerate()
                .map(|(i, &(x, y, yaw, a))| place(i as u32 + 1, names[a], x, y, yaw))
                .collect();
            let w = compose_world(&g, "s", &actors, &b, 0, 0.0).unwrap();
            prop_assert_eq!(&w, &compose_world(&g, "s", &actors, &b, 0, 0.0).unwrap());
            for l in 0..g.len() {
                if !w.instance_map.contains_key(&l) {
                    prop_assert_eq!(w.grid.labels()[l], g.labels()[l]);
                }
            }
            for (&v, id) in &w.instance_map {
                prop_assert_eq!(w.grid.labels()[v], w.actor(*id).unwrap().class);
            }
            let budget: usize = actors.iter().map(|a| b.get(&a.asset_id).unwrap().voxel_count()).sum();
            prop_assert!(w.instance_map.len() <= budget);
        }
    }
}
