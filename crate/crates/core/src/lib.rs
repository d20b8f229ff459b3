//! Deterministic 4D semantic occupancy world simulator.
//!
//! The crate builds city-scale voxel scenes ([`scene`]), populates them with ID-stable actors
//! ([`bank`], [`dynamics`]), composes per-tick worlds ([`compose`]), renders multi-view
//! semantic and depth images ([`project`]), and runs closed- and open-loop evaluation of
//! external driving agents ([`harness`], [`metrics`]).

pub mod bank;
pub mod codec;
pub mod compose;
pub mod dynamics;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod project;
pub mod rng;
pub mod scene;

pub use grid::{BevCell, BevMap, GridError, OverlapMask, Pose, SemanticGrid, VoxelLabel};
