//! Planar geometry shared by traffic, composition checks and metrics.

use serde::{Deserialize, Serialize};

pub type Point2 = [f64; 2];

pub fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Oriented rectangle in the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    /// Half of (length, width).
    pub half: [f64; 2],
    pub yaw: f64,
}

impl OrientedRect {
    pub fn new(center: Point2, length: f64, width: f64, yaw: f64) -> Self {
        Self {
            center,
            half: [length / 2.0, width / 2.0],
            yaw,
        }
    }

    fn axes(&self) -> [Point2; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [Point2; 4] {
        let [u, v] = self.axes();
        let [hl, hw] = self.half;
        let at = |a: f64, b: f64| {
            [
                self.center[0] + a * u[0] + b * v[0],
                self.center[1] + a * u[1] + b * v[1],
            ]
        };
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    fn project(&self, axis: Point2) -> (f64, f64) {
        let c = self.center[0] * axis[0] + self.center[1] * axis[1];
        let [u, v] = self.axes();
        let r = self.half[0] * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half[1] * (v[0] * axis[0] + v[1] * axis[1]).abs();
        (c - r, c + r)
    }

    /// Point containment, boundary included.
    pub fn contains(&self, p: Point2) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let [u, v] = self.axes();
        (d[0] * u[0] + d[1] * u[1]).abs() <= self.half[0]
            && (d[0] * v[0] + d[1] * v[1]).abs() <= self.half[1]
    }

    /// Closed-set intersection test: touching rectangles intersect.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        self.axes().into_iter().chain(other.axes()).all(|axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a0 <= b1 && b0 <= a1
        })
    }
}

/// Earliest `t >= 0` at which two rectangles translating at constant velocities touch.
/// Returns `0.0` if they already intersect and `f64::INFINITY` if they never will.
pub fn time_of_impact(a: &OrientedRect, va: Point2, b: &OrientedRect, vb: Point2) -> f64 {
    let rel = [vb[0] - va[0], vb[1] - va[1]];
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (a0, a1) = a.project(axis);
        let (b0, b1) = b.project(axis);
        let s = rel[0] * axis[0] + rel[1] * axis[1];
        // Overlap on this axis while b0 + t*s <= a1 and b1 + t*s >= a0.
        if s == 0.0 {
            if b0 > a1 || b1 < a0 {
                return f64::INFINITY;
            }
            continue;
        }
        let (t_enter, t_exit) = if s > 0.0 {
            ((a0 - b1) / s, (a1 - b0) / s)
        } else {
            ((a1 - b0) / s, (a0 - b1) / s)
        };
        lo = lo.max(t_enter);
        hi = hi.min(t_exit);
        if lo > hi {
            return f64::INFINITY;
        }
    }
    lo
}

/// Closest point on a polyline to `p`: `(arc length, distance, segment index)`.
pub fn project_onto_polyline(points: &[Point2], p: Point2) -> (f64, f64, usize) {
    let mut best = (0.0, f64::INFINITY, 0);
    let mut acc = 0.0;
    for (idx, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let seg_len = len2.sqrt();
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * d[0], a[1] + t * d[1]];
        let dq = dist(p, q);
        if dq < best.1 {
            best = (acc + t * seg_len, dq, idx);
        }
        acc += seg_len;
    }
    best
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Point and heading at arc length `s`, clamped to the polyline ends.
pub fn point_at(points: &[Point2], s: f64) -> (Point2, f64) {
    let mut remaining = s.max(0.0);
    let mut last = (points[0], 0.0);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = dist(a, b);
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        if remaining <= len && len > 0.0 {
            let t = remaining / len;
            return (
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
                heading,
            );
        }
        remaining -= len;
        last = (b, heading);
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn aligned_closing_time() {
        let ego = OrientedRect::new([0.0, 0.0], 4.0, 2.0, 0.0);
        let lead = OrientedRect::new([14.0, 0.0], 4.0, 2.0, 0.0);
        assert_eq!(time_of_impact(&ego, [5.0, 0.0], &lead, [0.0, 0.0]), 2.0);
        assert_eq!(
            time_of_impact(&ego, [-1.0, 0.0], &lead, [0.0, 0.0]),
            f64::INFINITY
        );
        assert_eq!(time_of_impact(&ego, [5.0, 0.0], &ego, [0.0, 0.0]), 0.0);
    }

    #[test]
    fn lateral_offset_never_meets() {
        let ego = OrientedRect::new([0.0, 0.0], 4.0, 2.0, 0.0);
        let other = OrientedRect::new([14.0, 3.0], 4.0, 2.0, 0.0);
        assert_eq!(
            time_of_impact(&ego, [5.0, 0.0], &other, [0.0, 0.0]),
            f64::INFINITY
        );
    }

    #[test]
    fn rotated_intersection() {
        let a = OrientedRect::new([0.0, 0.0], 2.0, 2.0, 0.0);
        // Diamond with its left tip at x = 0.99.
        let b = OrientedRect::new([1.0 + 2f64.sqrt() - 0.01, 0.0], 2.0, 2.0, FRAC_PI_4);
        assert!(a.intersects(&b));
        let c = OrientedRect::new([1.0 + 2f64.sqrt() + 0.01, 0.0], 2.0, 2.0, FRAC_PI_4);
        assert!(!a.intersects(&c));
        assert!(a.contains([1.0, 1.0]));
        assert!(!a.contains([1.0, 1.0001]));
    }

    #[test]
    fn polyline_projection() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        let (s, d, seg) = project_onto_polyline(&pts, [12.0, 5.0]);
        assert_eq!((s, d, seg), (15.0, 2.0, 1));
        assert_eq!(polyline_length(&pts), 20.0);
        let (p, h) = point_at(&pts, 15.0);
        assert_eq!(p, [10.0, 5.0]);
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(point_at(&pts, 99.0).0, [10.0, 10.0]);
    }
}
