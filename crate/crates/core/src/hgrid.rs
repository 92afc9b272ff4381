//! Hierarchical grid of timestamped position estimates.
//!
//! An implicit quadtree over the environment rectangle whose leaves are
//! sensor-radius squares. Leaves keep flat estimate lists plus per-robot
//! visit counts; robot activity is a flag lookup so deactivating a neighbor
//! never touches stored data.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grid::Point;
use crate::world::Rect;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub robot: usize,
    pub tick: usize,
    pub position: Point,
    pub trace_pos: f64,
}

#[derive(Clone, Debug, Default)]
struct Leaf {
    estimates: Vec<Estimate>,
    visits: BTreeMap<usize, u32>,
    /// Per robot, estimates within one cell size of this leaf's center.
    sightings: BTreeMap<usize, u32>,
}

#[derive(Clone, Debug)]
pub struct Hgrid {
    owner: usize,
    bounds: Rect,
    cell_size: f64,
    depth: u32,
    cols: usize,
    rows: usize,
    leaves: Vec<Leaf>,
    active: HashMap<usize, bool>,
    len: usize,
}

impl Hgrid {
    /// Empty grid owned by robot `owner`; the owner's counts always take part
    /// in coverage.
    pub fn new(owner: usize, bounds: Rect, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "hgrid cell size must be positive");
        let cols = ((bounds.width() / cell_size).ceil() as usize).max(1);
        let rows = ((bounds.height() / cell_size).ceil() as usize).max(1);
        let extent = bounds.width().max(bounds.height());
        let depth = (extent / cell_size).log2().ceil().max(0.0) as u32;
        Hgrid {
            owner,
            bounds,
            cell_size,
            depth,
            cols,
            rows,
            leaves: vec![Leaf::default(); cols * rows],
            active: HashMap::new(),
            len: 0,
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Leaves that intersect the bounds.
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(col, row)` of the leaf holding `p`, after clamping into bounds.
    pub fn leaf_of(&self, p: Point) -> (usize, usize) {
        let p = self.bounds.clamp(p);
        let col = ((p.x - self.bounds.min_x) / self.cell_size).floor() as usize;
        let row = ((p.y - self.bounds.min_y) / self.cell_size).floor() as usize;
        (col.min(self.cols - 1), row.min(self.rows - 1))
    }

    fn leaf_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn visit_count(&self, leaf: (usize, usize), robot: usize) -> u32 {
        self.leaves[self.leaf_index(leaf.0, leaf.1)]
            .visits
            .get(&robot)
            .copied()
            .unwrap_or(0)
    }

    pub fn insert(&mut self, robot: usize, position: Point, trace_pos: f64, tick: usize) {
        let position = self.bounds.clamp(position);
        let (col, row) = self.leaf_of(position);
        let idx = self.leaf_index(col, row);
        let leaf = &mut self.leaves[idx];
        leaf.estimates.push(Estimate {
            robot,
            tick,
            position,
            trace_pos,
        });
        *leaf.visits.entry(robot).or_insert(0) += 1;
        self.len += 1;
        let reach = self.cell_size * self.cell_size;
        for r in row.saturating_sub(1)..(row + 2).min(self.rows) {
            for c in col.saturating_sub(1)..(col + 2).min(self.cols) {
                if self.leaf_center(c, r).distance_sq(position) <= reach {
                    let i = self.leaf_index(c, r);
                    *self.leaves[i].sightings.entry(robot).or_insert(0) += 1;
                }
            }
        }
    }

    /// Center of leaf `(col, row)`.
    pub fn leaf_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.bounds.min_x + (col as f64 + 0.5) * self.cell_size,
            self.bounds.min_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn set_active(&mut self, robot: usize, active: bool) {
        self.active.insert(robot, active);
    }

    pub fn is_active(&self, robot: usize) -> bool {
        self.active.get(&robot).copied().unwrap_or(true)
    }

    /// Estimates from active robots within `radius` (inclusive) of `point`,
    /// ordered by `(tick, robot)`.
    pub fn query_near(&self, point: Point, radius: f64) -> Vec<Estimate> {
        self.query_near_counted(point, radius).0
    }

    /// As [`Hgrid::query_near`], also returning the number of tree nodes
    /// whose square intersected the query disc.
    pub fn query_near_counted(&self, point: Point, radius: f64) -> (Vec<Estimate>, usize) {
        let mut out = Vec::new();
        let mut visited = 0;
        self.visit(0, 0, 0, point, radius, &mut out, &mut visited);
        out.sort_by_key(|e| (e.tick, e.robot));
        (out, visited)
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &self,
        level: u32,
        col: usize,
        row: usize,
        point: Point,
        radius: f64,
        out: &mut Vec<Estimate>,
        visited: &mut usize,
    ) {
        let span = 1usize << (self.depth - level);
        let c0 = col * span;
        let r0 = row * span;
        if c0 >= self.cols || r0 >= self.rows {
            return;
        }
        // Node square, clipped to the part that holds real leaves.
        let c1 = (c0 + span).min(self.cols);
        let r1 = (r0 + span).min(self.rows);
        let min_x = self.bounds.min_x + c0 as f64 * self.cell_size;
        let min_y = self.bounds.min_y + r0 as f64 * self.cell_size;
        let max_x = self.bounds.min_x + c1 as f64 * self.cell_size;
        let max_y = self.bounds.min_y + r1 as f64 * self.cell_size;
        let dx = (min_x - point.x).max(0.0).max(point.x - max_x);
        let dy = (min_y - point.y).max(0.0).max(point.y - max_y);
        if dx * dx + dy * dy > radius * radius {
            return;
        }
        *visited += 1;
        if level == self.depth {
            let r2 = radius * radius;
            let leaf = &self.leaves[self.leaf_index(col, row)];
            out.extend(leaf.estimates.iter().filter(|e| {
                self.is_active(e.robot) && e.position.distance_sq(point) <= r2
            }));
            return;
        }
        for (dc, dr) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            self.visit(level + 1, col * 2 + dc, row * 2 + dr, point, radius, out, visited);
        }
    }

    /// Fraction of leaves filled: a leaf is filled once at least `k`
    /// estimates from the owner and active robots lie within one cell size of
    /// its center, i.e. at spots whose sensor disc covered that center.
    pub fn coverage_fraction(&self, k: u32) -> f64 {
        let filled = self
            .leaves
            .iter()
            .filter(|leaf| {
                let total: u32 = leaf
                    .sightings
                    .iter()
                    .filter(|(&robot, _)| robot == self.owner || self.is_active(robot))
                    .map(|(_, &n)| n)
                    .sum();
                total >= k
            })
            .count();
        filled as f64 / self.leaves.len() as f64
    }

    /// Most recent stored position of every active robot other than
    /// `exclude`, ordered by robot id.
    pub fn latest_active(&self, exclude: usize) -> Vec<(usize, Point)> {
        let mut latest: BTreeMap<usize, (usize, Point)> = BTreeMap::new();
        for e in self.leaves.iter().flat_map(|l| &l.estimates) {
            if e.robot == exclude || !self.is_active(e.robot) {
                continue;
            }
            match latest.get(&e.robot) {
                Some(&(tick, _)) if tick >= e.tick => {}
                _ => {
                    latest.insert(e.robot, (e.tick, e.position));
                }
            }
        }
        latest.into_iter().map(|(r, (_, p))| (r, p)).collect()
    }

    /// Every stored estimate regardless of activity, leaf by leaf.
    pub fn all_estimates(&self) -> impl Iterator<Item = &Estimate> {
        self.leaves.iter().flat_map(|l| &l.estimates)
    }

    /// CSV of `robot_id,tick,x,y,trace_pos,leaf_index`.
    pub fn dump_csv(&self) -> String {
        let mut s = String::from("robot_id,tick,x,y,trace_pos,leaf_index\n");
        for (i, leaf) in self.leaves.iter().enumerate() {
            for e in &leaf.estimates {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    e.robot, e.tick, e.position.x, e.position.y, e.trace_pos, i
                );
            }
        }
        s
    }
}
