//! Grid geometry shared by the ground truth, the robots' local maps, and the
//! sensors.
//!
//! World coordinates are meters with the origin at the outer corner of cell
//! `(0, 0)`; `x` grows with the column index and `y` with the row index.
//! Headings are measured from `+x` towards `+y`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// A grid cell addressed by row and column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// 8-neighborhood in a fixed order (row-major, skipping self).
    pub fn neighbors8(self, geom: &GridGeometry) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| geom.offset(self, dr, dc))
    }

    pub fn neighbors4(self, geom: &GridGeometry) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| geom.offset(self, dr, dc))
    }
}

/// Planar pose in meters / radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Shape and resolution of a grid; every map in a scenario shares one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64) -> Self {
        GridGeometry {
            width,
            height,
            resolution,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn offset(&self, cell: Cell, dr: i64, dc: i64) -> Option<Cell> {
        let r = cell.row as i64 + dr;
        let c = cell.col as i64 + dc;
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            None
        } else {
            Some(Cell::new(r as usize, c as usize))
        }
    }

    pub fn is_border(&self, cell: Cell) -> bool {
        cell.row == 0 || cell.col == 0 || cell.row + 1 == self.height || cell.col + 1 == self.width
    }

    pub fn center(&self, cell: Cell) -> Point {
        Point::new(
            (cell.col as f64 + 0.5) * self.resolution,
            (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / self.resolution).floor() as usize;
        let row = (p.y / self.resolution).floor() as usize;
        let cell = Cell::new(row, col);
        self.contains(cell).then_some(cell)
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    /// Offsets `(dr, dc)` of every cell whose center lies within `radius`
    /// meters of a cell center, inclusive.
    pub fn disc_offsets(&self, radius: f64) -> Vec<(i64, i64)> {
        let reach = (radius / self.resolution).floor() as i64;
        let limit = radius * radius + 1e-9;
        let mut out = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let dx = dc as f64 * self.resolution;
                let dy = dr as f64 * self.resolution;
                if dx * dx + dy * dy <= limit {
                    out.push((dr, dc));
                }
            }
        }
        out
    }

    /// Walks the cells pierced by a ray, in order, out to `max_range` meters.
    pub fn ray(&self, origin: Point, angle: f64, max_range: f64) -> RayWalk {
        RayWalk::new(*self, origin, angle, max_range)
    }
}

/// Grid traversal (Amanatides–Woo DDA) yielding each pierced cell with the
/// distance at which the ray enters it. The walk is 4-connected: an exact
/// corner crossing visits the column neighbor before the diagonal cell.
#[derive(Clone, Debug)]
pub struct RayWalk {
    geom: GridGeometry,
    row: i64,
    col: i64,
    step_row: i64,
    step_col: i64,
    next_row_t: f64,
    next_col_t: f64,
    delta_row_t: f64,
    delta_col_t: f64,
    entry_t: f64,
    max_t: f64,
    done: bool,
}

impl RayWalk {
    fn new(geom: GridGeometry, origin: Point, angle: f64, max_range: f64) -> Self {
        let res = geom.resolution;
        let gx = origin.x / res;
        let gy = origin.y / res;
        let (dy, dx) = angle.sin_cos();
        let col = gx.floor() as i64;
        let row = gy.floor() as i64;

        let (step_col, next_col_t, delta_col_t) = axis_setup(gx, col, dx);
        let (step_row, next_row_t, delta_row_t) = axis_setup(gy, row, dy);

        let inside = row >= 0 && col >= 0 && row < geom.height as i64 && col < geom.width as i64;
        RayWalk {
            geom,
            row,
            col,
            step_row,
            step_col,
            next_row_t,
            next_col_t,
            delta_row_t,
            delta_col_t,
            entry_t: 0.0,
            max_t: max_range / res,
            done: !inside || max_range < 0.0,
        }
    }
}

fn axis_setup(g: f64, cell: i64, d: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, ((cell + 1) as f64 - g) / d, 1.0 / d)
    } else if d < 0.0 {
        (-1, (g - cell as f64) / -d, -1.0 / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for RayWalk {
    /// `(cell, entry distance in meters)`
    type Item = (Cell, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = (
            Cell::new(self.row as usize, self.col as usize),
            self.entry_t * self.geom.resolution,
        );

        if self.next_col_t <= self.next_row_t {
            self.entry_t = self.next_col_t;
            self.col += self.step_col;
            self.next_col_t += self.delta_col_t;
        } else {
            self.entry_t = self.next_row_t;
            self.row += self.step_row;
            self.next_row_t += self.delta_row_t;
        }
        if self.entry_t > self.max_t
            || self.row < 0
            || self.col < 0
            || self.row >= self.geom.height as i64
            || self.col >= self.geom.width as i64
        {
            self.done = true;
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(6.2) - (6.2 - 2.0 * PI)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn ray_east_visits_consecutive_columns() {
        let geom = GridGeometry::new(10, 10, 0.5);
        let cells: Vec<_> = geom.ray(geom.center(Cell::new(2, 2)), 0.0, 1.6).collect();
        let cols: Vec<_> = cells.iter().map(|(c, _)| c.col).collect();
        assert_eq!(cols, vec![2, 3, 4, 5]);
        assert!(cells.iter().all(|(c, _)| c.row == 2));
        assert_eq!(cells[0].1, 0.0);
        assert!((cells[1].1 - 0.25).abs() < 1e-12);
        assert!((cells[3].1 - 1.25).abs() < 1e-12);
    }

    #[test]
    fn ray_walk_is_four_connected() {
        let geom = GridGeometry::new(30, 30, 0.25);
        for k in 0..64 {
            let angle = k as f64 * 2.0 * PI / 64.0;
            let cells: Vec<_> = geom.ray(Point::new(3.8, 3.7), angle, 3.0).collect();
            for w in cells.windows(2) {
                let d = w[0].0.row.abs_diff(w[1].0.row) + w[0].0.col.abs_diff(w[1].0.col);
                assert_eq!(d, 1, "angle {angle}");
                assert!(w[1].1 >= w[0].1);
            }
        }
    }

    #[test]
    fn disc_offsets_inclusive() {
        let geom = GridGeometry::new(10, 10, 1.0);
        let offs = geom.disc_offsets(1.0);
        assert_eq!(offs.len(), 5);
        assert_eq!(geom.disc_offsets(0.0), vec![(0, 0)]);
    }
}
