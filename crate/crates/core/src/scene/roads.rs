use serde::{Deserialize, Serialize};

use crate::grid::{BevCell, BevMap, GridError};

/// Manhattan road network rasterized on the world cell lattice.
///
/// Roads run along x (centerlines at fixed y) and/or along y. Each road is a one-cell
/// divider flanked by `lane_cells` drivable cells per direction, with `sidewalk_cells` of
/// sidewalk outside. Crossings are junction cells. Because classification depends only on
/// world cell indices, any two windows of the same network agree where they overlap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadGrid {
    /// Centerline spacing in cells.
    pub spacing: i64,
    /// World cell index of one centerline, per axis (x index for y-roads, y index for x-roads).
    pub offset: [i64; 2],
    pub lane_cells: i64,
    pub sidewalk_cells: i64,
    pub x_roads: bool,
    pub y_roads: bool,
}

impl Default for RoadGrid {
    fn default() -> Self {
        Self {
            spacing: 160,
            offset: [100, 100],
            lane_cells: 7,
            sidewalk_cells: 3,
            x_roads: true,
            y_roads: true,
        }
    }
}

impl RoadGrid {
    fn signed_offset(&self, cell: i64, axis: usize) -> i64 {
        let r = (cell - self.offset[axis]).rem_euclid(self.spacing);
        if r > self.spacing / 2 {
            r - self.spacing
        } else {
            r
        }
    }

    /// Classify one world-lattice cell.
    pub fn classify(&self, gx: i64, gy: i64) -> BevCell {
        // x-roads are horizontal bands selected by the y index.
        let dy = self.signed_offset(gy, 1).abs();
        let dx = self.signed_offset(gx, 0).abs();
        let on_x = self.x_roads && dy <= self.lane_cells;
        let on_y = self.y_roads && dx <= self.lane_cells;
        let walk = self.lane_cells + self.sidewalk_cells;
        match (on_x, on_y) {
            (true, true) => BevCell::Junction,
            (true, false) if dy == 0 => BevCell::LaneDivider,
            (false, true) if dx == 0 => BevCell::LaneDivider,
            (true, false) | (false, true) => BevCell::Drivable,
            (false, false) => {
                if (self.x_roads && dy <= walk) || (self.y_roads && dx <= walk) {
                    BevCell::Sidewalk
                } else {
                    BevCell::Empty
                }
            }
        }
    }

    /// Rasterize a window. `origin` should lie on the cell lattice (a multiple of `cell_size`).
    pub fn rasterize(
        &self,
        dims: [usize; 2],
        cell_size: f64,
        origin: [f64; 2],
    ) -> Result<BevMap, GridError> {
        let mut bev = BevMap::new(dims, cell_size, origin)?;
        let base = [
            (origin[0] / cell_size).round() as i64,
            (origin[1] / cell_size).round() as i64,
        ];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                bev.set(i, j, self.classify(base[0] + i as i64, base[1] + j as i64));
            }
        }
        Ok(bev)
    }

    /// World-frame y of the x-road centerline with index `n`, at the cell center.
    pub fn x_road_center(&self, n: i64, cell_size: f64) -> f64 {
        ((self.offset[1] + n * self.spacing) as f64 + 0.5) * cell_size
    }

    /// World-frame x of the y-road centerline with index `n`, at the cell center.
    pub fn y_road_center(&self, n: i64, cell_size: f64) -> f64 {
        ((self.offset[0] + n * self.spacing) as f64 + 0.5) * cell_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_section_of_x_road() {
        let roads = RoadGrid {
            spacing: 100,
            offset: [0, 50],
            lane_cells: 3,
            sidewalk_cells: 2,
            x_roads: true,
            y_roads: false,
        };
        let column: Vec<BevCell> = (44..=56).map(|gy| roads.classify(7, gy)).collect();
        use BevCell::*;
        assert_eq!(
            column,
            vec![
                Empty,
                Sidewalk,
                Sidewalk,
                Drivable,
                Drivable,
                Drivable,
                LaneDivider,
                Drivable,
                Drivable,
                Drivable,
                Sidewalk,
                Sidewalk,
                Empty
            ]
        );
    }

    #[test]
    fn crossing_is_junction_and_windows_agree() {
        let roads = RoadGrid::default();
        assert_eq!(roads.classify(100, 100), BevCell::Junction);
        assert_eq!(roads.classify(100, 107), BevCell::Junction);
        assert_eq!(roads.classify(100, 108), BevCell::LaneDivider);
        assert_eq!(roads.classify(101, 108), BevCell::Drivable);
        let a = roads.rasterize([60, 60], 0.5, [40.0, 40.0]).unwrap();
        let b = roads.rasterize([60, 60], 0.5, [50.0, 40.0]).unwrap();
        for i in 20..60 {
            for j in 0..60 {
                assert_eq!(a.get(i, j), b.get(i - 20, j));
            }
        }
    }
}
