//! Comparison strategies: independent greedy, oracle assignment, and fixed
//! area partitioning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{Point, Pose};
use crate::mapping::{Frontier, LocalMap};
use crate::wiserx::{score_with, select_frontier, FrontierScore, UtilityParams};
use crate::world::Rect;

/// Scores with no neighbor information and β = 1, i.e. `gain_raw / C` at the
/// best viewpoint.
pub fn baseline1_scores(
    frontiers: &[Frontier],
    map: &LocalMap,
    robot: Pose,
    p: &UtilityParams,
) -> Vec<FrontierScore> {
    frontiers
        .iter()
        .map(|f| score_with(f, robot, map, &[], &[], p))
        .collect()
}

pub fn baseline1_select(
    frontiers: &[Frontier],
    map: &LocalMap,
    robot: Pose,
    p: &UtilityParams,
) -> Option<usize> {
    select_frontier(&baseline1_scores(frontiers, map, robot, p), false)
}

/// A candidate pairing for the global assigner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub robot: usize,
    pub frontier: usize,
    pub value: f64,
}

/// Repeatedly takes the highest-value pair whose robot and frontier are both
/// still free. Ties go to the lowest `(robot, frontier)`.
pub fn greedy_assign(candidates: &[Candidate]) -> BTreeMap<usize, usize> {
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| (a.robot, a.frontier).cmp(&(b.robot, b.frontier)))
    });
    let mut out = BTreeMap::new();
    let mut taken = std::collections::BTreeSet::new();
    for c in order {
        if out.contains_key(&c.robot) || taken.contains(&c.frontier) {
            continue;
        }
        out.insert(c.robot, c.frontier);
        taken.insert(c.frontier);
    }
    out
}

/// Global greedy assignment of frontiers of the merged map to robots by
/// `gain_raw / C`. Each frontier goes to at most one robot.
pub fn baseline2_assign(
    merged: &LocalMap,
    robots: &[(usize, Pose)],
    frontiers: &[Frontier],
    p: &UtilityParams,
) -> BTreeMap<usize, usize> {
    let mut candidates = Vec::new();
    for &(robot, pose) in robots {
        for s in baseline1_scores(frontiers, merged, pose, p) {
            candidates.push(Candidate {
                robot,
                frontier: s.frontier_id,
                value: s.utility,
            });
        }
    }
    greedy_assign(&candidates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub regions: Vec<Rect>,
}

impl Partition {
    /// Index of the strip containing `p`; shared edges belong to the strip on
    /// the right, except the outer right edge.
    pub fn region_of(&self, p: Point) -> Option<usize> {
        let last = self.regions.len().checked_sub(1)?;
        self.regions.iter().position(|r| {
            p.y >= r.min_y && p.y <= r.max_y && p.x >= r.min_x && p.x <= r.max_x
        }).map(|i| {
            if i < last && p.x == self.regions[i].max_x {
                i + 1
            } else {
                i
            }
        })
    }
}

/// `n` vertical strips of equal width covering `bounds`.
pub fn baseline3_partition(bounds: Rect, n: usize) -> Partition {
    assert!(n >= 1);
    let w = bounds.width() / n as f64;
    let regions = (0..n)
        .map(|i| Rect {
            min_x: bounds.min_x + w * i as f64,
            max_x: if i + 1 == n {
                bounds.max_x
            } else {
                bounds.min_x + w * (i + 1) as f64
            },
            min_y: bounds.min_y,
            max_y: bounds.max_y,
        })
        .collect();
    Partition { regions }
}

/// Frontiers whose center lies in `strip` of `partition`.
pub fn in_strip<'a>(
    frontiers: &'a [Frontier],
    map: &LocalMap,
    partition: &Partition,
    strip: usize,
) -> Vec<&'a Frontier> {
    frontiers
        .iter()
        .filter(|f| partition.region_of(map.geometry().center(f.center)) == Some(strip))
        .collect()
}

pub fn baseline3_select(
    frontiers: &[Frontier],
    map: &LocalMap,
    robot: Pose,
    partition: &Partition,
    strip: usize,
    p: &UtilityParams,
) -> Option<usize> {
    let own: Vec<Frontier> = in_strip(frontiers, map, partition, strip)
        .into_iter()
        .cloned()
        .collect();
    baseline1_select(&own, map, robot, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::mapping::make_frontier;

    fn open_map() -> LocalMap {
        // Unknown margin on both sides of a known 40-cell band.
        let row = format!("{}{}{}\n", "?".repeat(4), ".".repeat(40), "?".repeat(4));
        LocalMap::from_ascii(&row.repeat(9), 0.25).unwrap()
    }

    fn frontier_at(id: usize, col: usize) -> Frontier {
        make_frontier(id, (2..7).map(|r| Cell::new(r, col)).collect())
    }

    #[test]
    fn nearer_of_equal_frontiers_wins() {
        let map = open_map();
        let p = UtilityParams::for_radius(1.0);
        let f = [frontier_at(0, 4), frontier_at(1, 43)];
        // Robot 2 m from the left frontier and ~8 m from the right one.
        let left_x = map.geometry().center(Cell::new(4, 4)).x;
        let robot = Pose::new(left_x + 2.0, 1.125, 0.0);
        assert_eq!(baseline1_select(&f, &map, robot, &p), Some(0));
        assert_eq!(baseline1_select(&[], &map, robot, &p), None);
    }

    #[test]
    fn baseline1_equals_empty_neighbor_scoring() {
        let map = open_map();
        let p = UtilityParams::for_radius(1.0);
        let f = [frontier_at(0, 4), frontier_at(1, 43)];
        let robot = Pose::new(6.0, 1.0, 0.0);
        let hgrid = crate::hgrid::Hgrid::new(0, Rect { min_x: 0.0, min_y: 0.0, max_x: 12.0, max_y: 2.25 }, 1.0);
        let via_hgrid: Vec<FrontierScore> = f
            .iter()
            .map(|fr| crate::wiserx::score_frontier(fr, robot, &map, &hgrid, &p))
            .collect();
        assert_eq!(baseline1_scores(&f, &map, robot, &p), via_hgrid);
        for s in &via_hgrid {
            let fr = &f[s.frontier_id];
            let c = map.geometry().center(fr.center).distance(robot.position());
            assert!((s.utility - s.gain_raw / c).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_avoids_crossing() {
        let map = open_map();
        let p = UtilityParams::for_radius(1.0);
        let f = [frontier_at(0, 4), frontier_at(1, 43)];
        let g = map.geometry();
        let near_left = Pose::new(g.center(Cell::new(4, 8)).x, 1.0, 0.0);
        let near_right = Pose::new(g.center(Cell::new(4, 39)).x, 1.0, 0.0);
        let a = baseline2_assign(&map, &[(0, near_right), (1, near_left)], &f, &p);
        assert_eq!(a, BTreeMap::from([(0, 1), (1, 0)]));

        // Enumerate both assignments and confirm greedy picked the better sum.
        let val = |pose: Pose, fr: &Frontier| {
            baseline1_scores(std::slice::from_ref(fr), &map, pose, &p)[0].utility
        };
        let chosen = val(near_right, &f[1]) + val(near_left, &f[0]);
        let crossed = val(near_right, &f[0]) + val(near_left, &f[1]);
        assert!(chosen > crossed);
    }

    #[test]
    fn greedy_edge_cases() {
        let map = open_map();
        let p = UtilityParams::for_radius(1.0);
        let f = [frontier_at(0, 4)];
        let robots: Vec<(usize, Pose)> = (0..3).map(|i| (i, Pose::new(2.0 + i as f64, 1.0, 0.0))).collect();
        assert_eq!(baseline2_assign(&map, &robots, &f, &p).len(), 1);
        assert!(baseline2_assign(&map, &robots, &[], &p).is_empty());
        let tie = [
            Candidate { robot: 1, frontier: 0, value: 1.0 },
            Candidate { robot: 0, frontier: 0, value: 1.0 },
        ];
        assert_eq!(greedy_assign(&tie), BTreeMap::from([(0, 0)]));
    }

    fn bounds(w: f64) -> Rect {
        Rect { min_x: 0.0, min_y: 0.0, max_x: w, max_y: 4.0 }
    }

    #[test]
    fn strips_are_equal() {
        let two = baseline3_partition(bounds(16.0), 2);
        assert_eq!(two.regions[0].max_x, 8.0);
        assert_eq!(two.regions[1].width(), 8.0);
        let three = baseline3_partition(bounds(16.0), 3);
        for r in &three.regions {
            assert!((r.width() - 16.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(three.regions[2].max_x, 16.0);
        assert_eq!(three.region_of(Point::new(0.0, 1.0)), Some(0));
        assert_eq!(three.region_of(Point::new(16.0 / 3.0, 1.0)), Some(1));
        assert_eq!(three.region_of(Point::new(16.0, 1.0)), Some(2));
        assert_eq!(three.region_of(Point::new(17.0, 1.0)), None);
    }

    #[test]
    fn out_of_strip_frontier_never_selected() {
        let map = open_map();
        let p = UtilityParams::for_radius(1.0);
        let f = [frontier_at(0, 4), frontier_at(1, 43)];
        let part = baseline3_partition(Rect { min_x: 0.0, min_y: 0.0, max_x: 12.0, max_y: 2.25 }, 2);
        // Robot sits right next to frontier 0 but owns the right strip.
        let robot = Pose::new(1.5, 1.0, 0.0);
        assert_eq!(baseline3_select(&f, &map, robot, &part, 1, &p), Some(1));
        assert_eq!(baseline3_select(&f[..1], &map, robot, &part, 1, &p), None);
    }
}
