//! Reference implementations shared by integration tests.
#![allow(dead_code)]

use occsphere_core::project::MIN_CHORD;
use occsphere_core::{SemanticGrid, VoxelLabel};

/// Voxel holding the point at parameter `t`, using the tie rule: a point on a face belongs to
/// the voxel being entered, and on axes the ray does not move along, to the smaller index.
fn cell_at(grid: &SemanticGrid, o: [f64; 3], d: [f64; 3], t: f64) -> Option<[usize; 3]> {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let u = (o[a] + t * d[a] - grid.origin()[a]) / grid.voxel_size();
        let i = if d[a] > 0.0 {
            u.floor()
        } else {
            u.ceil() - 1.0
        };
        if i < 0.0 || i >= grid.dims()[a] as f64 {
            return None;
        }
        idx[a] = i as usize;
    }
    Some(idx)
}

/// Fine-step ray marcher. Walks the ray in steps of `voxel_size / 100` inside the grid's
/// bounding sphere, splits every step at the voxel-boundary planes it crosses, and classifies
/// each piece by its midpoint. Pieces that begin within [`MIN_CHORD`] of the previous piece's
/// start are merged into it, and only pieces starting at `t > 0` can register a hit.
///
/// `d` must be unit length. Returns `(label, entry depth)` of the first hit.
pub fn march(grid: &SemanticGrid, o: [f64; 3], d: [f64; 3]) -> Option<(VoxelLabel, f64)> {
    let vs = grid.voxel_size();
    let (lo, hi) = grid.bounds();
    let c: [f64; 3] = std::array::from_fn(|a| (lo[a] + hi[a]) / 2.0);
    let r = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt() / 2.0 + vs;
    let oc: [f64; 3] = std::array::from_fn(|a| o[a] - c[a]);
    let b = (0..3).map(|a| oc[a] * d[a]).sum::<f64>();
    let disc = b * b - ((0..3).map(|a| oc[a] * oc[a]).sum::<f64>() - r * r);
    if disc < 0.0 {
        return None;
    }
    let t_end = -b + disc.sqrt();
    if t_end <= 0.0 {
        return None;
    }
    let t_begin = (-b - disc.sqrt()).max(0.0);
    let h = vs / 100.0;

    let mut piece_start = 0.0f64;
    let close_piece = |start: f64, end: f64| -> Option<(VoxelLabel, f64)> {
        if start <= 0.0 {
            return None;
        }
        let cell = cell_at(grid, o, d, (start + end) / 2.0)?;
        let label = grid.get(cell);
        (!label.is_empty()).then_some((label, start))
    };

    let steps = ((t_end - t_begin) / h).ceil() as usize;
    let mut crossings = Vec::new();
    for s in 0..steps {
        let ta = t_begin + s as f64 * h;
        let tb = (ta + h).min(t_end);
        crossings.clear();
        for a in 0..3 {
            if d[a] == 0.0 {
                continue;
            }
            let ua = (o[a] + ta * d[a] - grid.origin()[a]) / vs;
            let ub = (o[a] + tb * d[a] - grid.origin()[a]) / vs;
            let (m0, m1) = (ua.min(ub).floor() as i64 - 1, ua.max(ub).ceil() as i64 + 1);
            for m in m0..=m1 {
                let t = (grid.origin()[a] + m as f64 * vs - o[a]) / d[a];
                if t > ta && t <= tb {
                    crossings.push(t);
                }
            }
        }
        crossings.sort_by(f64::total_cmp);
        for &t in &crossings {
            if t <= piece_start + MIN_CHORD {
                continue;
            }
            if let Some(hit) = close_piece(piece_start, t) {
                return Some(hit);
            }
            piece_start = t;
        }
    }
    close_piece(piece_start, t_end)
}

pub fn unit(d: [f64; 3]) -> [f64; 3] {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    d.map(|v| v / n)
}

use occsphere_core::project::{CameraModel, Extrinsics, Intrinsics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random 16³ world with 2–30 % of voxels filled by random non-empty labels.
pub fn random_world(seed: u64) -> SemanticGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = if rng.gen_bool(0.5) {
        [0.0; 3]
    } else {
        std::array::from_fn(|_| rng.gen_range(-2.0..2.0))
    };
    let mut g = SemanticGrid::new([16, 16, 16], 0.5, origin).unwrap();
    let density = rng.gen_range(0.02..0.3);
    for l in 0..g.len() {
        if rng.gen_bool(density) {
            g.set_linear(l, VoxelLabel::new(rng.gen_range(1..=17)).unwrap());
        }
    }
    g
}

/// Exact axis-aligned rotations (camera-from-world rows: right, down, forward).
const AXIS_VIEWS: [[[f64; 3]; 3]; 4] = [
    [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]],
    [[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]],
    [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
    [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
];

/// Seeded random 32×32 camera around `grid`. One in four cameras is axis-aligned with its
/// center on voxel-face planes and its principal point on a pixel center, so that many rays
/// run exactly inside face planes.
pub fn random_camera(grid: &SemanticGrid, seed: u64) -> CameraModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (lo, hi) = grid.bounds();
    let vs = grid.voxel_size();
    let aligned = rng.gen_range(0..4) == 0;
    let f = rng.gen_range(8.0..60.0);
    let (cx, cy) = if aligned {
        (15.5, 15.5)
    } else {
        (rng.gen_range(8.0..24.0), rng.gen_range(8.0..24.0))
    };
    let intrinsics = Intrinsics {
        fx: f,
        fy: if aligned {
            f
        } else {
            f * rng.gen_range(0.8..1.25)
        },
        cx,
        cy,
        width: 32,
        height: 32,
    };
    let center: [f64; 3] = std::array::from_fn(|a| {
        if aligned {
            let m = rng.gen_range(-8i64..24);
            lo[a] + m as f64 * vs
        } else {
            rng.gen_range(lo[a] - 4.0..hi[a] + 4.0)
        }
    });
    let extrinsics = if aligned {
        let rotation = AXIS_VIEWS[rng.gen_range(0..AXIS_VIEWS.len())];
        let rc: [f64; 3] =
            std::array::from_fn(|r| (0..3).map(|k| rotation[r][k] * center[k]).sum());
        Extrinsics {
            rotation,
            translation: rc.map(|v| -v),
        }
    } else {
        // Aim roughly at the grid so most rays see voxels.
        let target: [f64; 3] = std::array::from_fn(|a| rng.gen_range(lo[a]..hi[a]));
        let dir: [f64; 3] = std::array::from_fn(|a| target[a] - center[a]);
        let yaw = dir[1].atan2(dir[0]);
        let pitch = -dir[2].atan2(dir[0].hypot(dir[1]));
        Extrinsics::look(center, yaw, pitch)
    };
    CameraModel::new(intrinsics, extrinsics).unwrap()
}
