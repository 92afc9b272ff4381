//! Grid path planning and kinematic path following.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, GridGeometry, Point, Pose};
use crate::mapping::{CellState, LocalMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Cell>,
    /// Meters; diagonal steps count `√2·resolution`.
    pub length: f64,
}

impl Path {
    pub fn goal(&self) -> Option<Cell> {
        self.waypoints.last().copied()
    }
}

fn step_cost(a: Cell, b: Cell, res: f64) -> f64 {
    if a.row != b.row && a.col != b.col {
        SQRT_2 * res
    } else {
        res
    }
}

fn octile(a: Cell, b: Cell, res: f64) -> f64 {
    let dr = a.row.abs_diff(b.row) as f64;
    let dc = a.col.abs_diff(b.col) as f64;
    let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
    res * (hi - lo + SQRT_2 * lo)
}

/// Whether the planner may step from `from` to its 8-neighbor `to`: the
/// target must be passable and a diagonal may not clip a blocked corner.
pub fn can_step(map: &LocalMap, from: Cell, to: Cell, goal: Cell) -> bool {
    let pass = |c: Cell| c == goal || map.get(c) == CellState::Free;
    if !pass(to) {
        return false;
    }
    if from.row != to.row && from.col != to.col {
        pass(Cell::new(from.row, to.col)) && pass(Cell::new(to.row, from.col))
    } else {
        true
    }
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over 8-connected Free cells (the goal itself may be any state).
/// Unknown and Occupied cells block. `None` when the goal is unreachable.
pub fn shortest_path(map: &LocalMap, start: Cell, goal: Cell) -> Option<Path> {
    let geom = map.geometry();
    if start == goal {
        return Some(Path {
            waypoints: Vec::new(),
            length: 0.0,
        });
    }
    let res = geom.resolution;
    let mut g = vec![f64::INFINITY; geom.len()];
    let mut parent = vec![usize::MAX; geom.len()];
    let mut closed = vec![false; geom.len()];
    let mut open = BinaryHeap::new();
    g[geom.index(start)] = 0.0;
    let h0 = octile(start, goal, res);
    open.push(Open {
        f: h0,
        h: h0,
        cell: start,
    });
    while let Some(Open { cell, .. }) = open.pop() {
        let ci = geom.index(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cell == goal {
            break;
        }
        for next in cell.neighbors8(geom) {
            let ni = geom.index(next);
            if closed[ni] || !can_step(map, cell, next, goal) {
                continue;
            }
            let cand = g[ci] + step_cost(cell, next, res);
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = ci;
                let h = octile(next, goal, res);
                open.push(Open {
                    f: cand + h,
                    h,
                    cell: next,
                });
            }
        }
    }
    let gi = geom.index(goal);
    if !closed[gi] {
        return None;
    }
    let mut waypoints = vec![goal];
    let mut at = gi;
    while parent[at] != usize::MAX {
        at = parent[at];
        waypoints.push(geom.cell_at(at));
    }
    waypoints.reverse();
    let length = waypoints
        .windows(2)
        .map(|w| step_cost(w[0], w[1], res))
        .sum();
    Some(Path { waypoints, length })
}

/// Free cells reachable from `start` under the same moves the planner uses.
pub fn reachable_from(map: &LocalMap, start: Cell) -> Vec<bool> {
    let geom = map.geometry();
    let mut seen = vec![false; geom.len()];
    seen[geom.index(start)] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        for next in cell.neighbors8(geom) {
            let ni = geom.index(next);
            if !seen[ni] && map.get(next) == CellState::Free && can_step(map, cell, next, next) {
                seen[ni] = true;
                queue.push_back(next);
            }
        }
    }
    seen
}

/// A path being followed: a polyline from the pose where following began
/// through the centers of the remaining waypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Path,
    points: Vec<Point>,
    cumulative: Vec<f64>,
    traveled: f64,
}

impl Route {
    pub fn new(start: Point, path: Path, geom: &GridGeometry) -> Self {
        let mut points = vec![start];
        points.extend(path.waypoints.iter().skip(1).map(|&c| geom.center(c)));
        if path.waypoints.len() == 1 {
            points.push(geom.center(path.waypoints[0]));
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + w[0].distance(w[1]));
        }
        Route {
            path,
            points,
            cumulative,
            traveled: 0.0,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn traveled(&self) -> f64 {
        self.traveled
    }

    pub fn progress(&self) -> f64 {
        let len = self.length();
        if len <= 0.0 {
            1.0
        } else {
            (self.traveled / len).min(1.0)
        }
    }

    pub fn is_done(&self) -> bool {
        self.traveled >= self.length()
    }

    pub fn goal(&self) -> Option<Cell> {
        self.path.goal()
    }

    /// Waypoints not yet reached.
    pub fn remaining(&self) -> &[Cell] {
        let seg = self.cumulative.partition_point(|&c| c <= self.traveled);
        // `points[i]` is waypoint `i` for i ≥ 1.
        let first = seg.max(1).min(self.path.waypoints.len());
        &self.path.waypoints[first..]
    }

    fn position_at(&self, s: f64) -> (Point, Option<f64>) {
        let s = s.clamp(0.0, self.length());
        let seg = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.points.len() - 1);
        let a = self.points[seg - 1];
        let b = self.points[seg];
        let seg_len = self.cumulative[seg] - self.cumulative[seg - 1];
        if seg_len <= 0.0 {
            return (b, None);
        }
        let t = ((s - self.cumulative[seg - 1]) / seg_len).clamp(0.0, 1.0);
        let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        (p, Some((b.y - a.y).atan2(b.x - a.x)))
    }
}

/// Advances `speed·dt` meters along the route. Heading follows the segment
/// being traversed; a stationary step keeps the old heading.
pub fn step_motion(pose: Pose, route: &mut Route, speed: f64, dt: f64) -> (Pose, f64) {
    let advance = (speed * dt).max(0.0);
    if advance == 0.0 || route.points.len() < 2 {
        return (pose, route.progress());
    }
    let before = route.traveled;
    route.traveled = (route.traveled + advance).min(route.length());
    // Heading of the segment just traversed, sampled slightly behind the end.
    let probe = (before + route.traveled) * 0.5;
    let (_, heading) = route.position_at(probe);
    let (p, _) = route.position_at(route.traveled);
    let heading = heading.unwrap_or(pose.heading);
    (Pose::new(p.x, p.y, heading), route.progress())
}
