//! Frontier utility with neighbor-aware information loss, validity, and the
//! soft/hard termination rule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Point, Pose};
use crate::hgrid::Hgrid;
use crate::mapping::{CellState, Frontier, LocalMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Sigmoid midpoint, meters.
    pub kappa1: f64,
    /// Sigmoid steepness, meters.
    pub kappa2: f64,
    /// Sensor radius, meters.
    pub r: f64,
    pub invalid_ratio: f64,
    pub beta_floor: f64,
    pub query_radius_mult: f64,
}

impl UtilityParams {
    pub fn for_radius(r: f64) -> Self {
        UtilityParams {
            kappa1: 0.8 * r,
            kappa2: r / 6.0,
            r,
            invalid_ratio: 0.9,
            beta_floor: 0.01,
            query_radius_mult: 2.0,
        }
    }
}

/// `1 / (1 + e^((d − κ₁)/κ₂))`, evaluated without overflow.
pub fn sigmoid(d: f64, p: &UtilityParams) -> f64 {
    let z = (d - p.kappa1) / p.kappa2;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// A neighbor position estimate as seen by the loss term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborEstimate {
    pub position: Point,
    pub trace_pos: f64,
    pub tau: f64,
}

impl NeighborEstimate {
    fn weight(&self) -> f64 {
        // 1/0 is +inf, so a zero trace weighs exactly 1.
        self.tau * (1.0 / self.trace_pos).min(1.0)
    }
}

/// Expected information already gathered at `cell` by neighbors.
pub fn information_loss(cell: Point, estimates: &[NeighborEstimate], p: &UtilityParams) -> f64 {
    estimates
        .iter()
        .map(|e| e.weight() * sigmoid(e.position.distance(cell), p))
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GainTerms {
    /// `Σ max(0, S − E)` over unknown cells in range.
    pub gain: f64,
    /// `Σ S`, ignoring neighbors.
    pub gain_raw: f64,
    /// `Σ min(S, E)`: the part of `gain_raw` already claimed by neighbors.
    pub loss: f64,
}

/// Gain of a viewpoint over the Unknown cells within `r` of it.
pub fn information_gain(
    viewpoint: Cell,
    map: &LocalMap,
    estimates: &[NeighborEstimate],
    p: &UtilityParams,
) -> GainTerms {
    let mut cache = LossCache::default();
    gain_cached(viewpoint, map, estimates, p, &mut cache, &map.geometry().disc_offsets(p.r))
}

/// Per-cell partial loss sums. Every term is non-negative, so a sum that
/// already reaches `S` settles `min(S, E)` and `max(0, S − E)` without the
/// remaining terms; evaluation resumes if a later viewpoint needs more.
#[derive(Default)]
struct LossCache {
    values: HashMap<Cell, (f64, usize)>,
}

impl LossCache {
    fn settle(&mut self, cell: Cell, at: Point, target: f64, estimates: &[NeighborEstimate], p: &UtilityParams) -> f64 {
        let entry = self.values.entry(cell).or_insert((0.0, 0));
        while entry.0 < target && entry.1 < estimates.len() {
            let e = &estimates[entry.1];
            entry.0 += e.weight() * sigmoid(e.position.distance(at), p);
            entry.1 += 1;
        }
        entry.0
    }
}

fn gain_cached(
    viewpoint: Cell,
    map: &LocalMap,
    estimates: &[NeighborEstimate],
    p: &UtilityParams,
    cache: &mut LossCache,
    disc: &[(i64, i64)],
) -> GainTerms {
    let geom = map.geometry();
    let vp = geom.center(viewpoint);
    let mut out = GainTerms::default();
    for &(dr, dc) in disc {
        let Some(cell) = geom.offset(viewpoint, dr, dc) else {
            continue;
        };
        if map.get(cell) != CellState::Unknown {
            continue;
        }
        let center = geom.center(cell);
        let s = sigmoid(center.distance(vp), p);
        let e = if estimates.is_empty() {
            0.0
        } else {
            cache.settle(cell, center, s, estimates, p)
        };
        out.gain += (s - e).max(0.0);
        out.gain_raw += s;
        out.loss += s.min(e);
    }
    out
}

/// `max(floor, log10(nearest neighbor distance))`, or 1 with no neighbors.
pub fn beta(viewpoint: Point, neighbors: &[Point], p: &UtilityParams) -> f64 {
    neighbors
        .iter()
        .map(|n| n.distance(viewpoint))
        .min_by(f64::total_cmp)
        .map_or(1.0, |d| d.log10().max(p.beta_floor))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierScore {
    pub frontier_id: usize,
    pub utility: f64,
    pub gain: f64,
    pub gain_raw: f64,
    pub loss_total: f64,
    pub valid: bool,
    pub best_viewpoint: Cell,
}

/// Scores a frontier against explicit neighbor data: utility is the best
/// `β·I/C` over the three viewpoints, with `C` the clamped Euclidean distance
/// from the robot to the frontier center.
pub fn score_with(
    frontier: &Frontier,
    robot: Pose,
    map: &LocalMap,
    estimates: &[NeighborEstimate],
    neighbors: &[Point],
    p: &UtilityParams,
) -> FrontierScore {
    let geom = map.geometry();
    let disc = geom.disc_offsets(p.r);
    let cost = geom
        .center(frontier.center)
        .distance(robot.position())
        .max(geom.resolution);
    let mut cache = LossCache::default();
    let mut best: Option<(f64, GainTerms, Cell)> = None;
    for &vp in &frontier.viewpoints {
        let terms = gain_cached(vp, map, estimates, p, &mut cache, &disc);
        let utility = beta(geom.center(vp), neighbors, p) * terms.gain / cost;
        if best.is_none_or(|(u, _, _)| utility > u) {
            best = Some((utility, terms, vp));
        }
    }
    let (utility, terms, vp) = best.expect("three viewpoints");
    let valid = terms.gain_raw > 0.0 && terms.loss / terms.gain_raw < p.invalid_ratio;
    FrontierScore {
        frontier_id: frontier.id,
        utility,
        gain: terms.gain,
        gain_raw: terms.gain_raw,
        loss_total: terms.loss,
        valid,
        best_viewpoint: vp,
    }
}

/// Neighbor estimates near a frontier, as stored in `hgrid` (the owner's own
/// trail is not a neighbor and is left out).
pub fn neighbor_estimates(frontier: &Frontier, map: &LocalMap, hgrid: &Hgrid, p: &UtilityParams) -> Vec<NeighborEstimate> {
    let center = map.geometry().center(frontier.center);
    hgrid
        .query_near(center, p.query_radius_mult * p.r)
        .into_iter()
        .filter(|e| e.robot != hgrid.owner())
        .map(|e| NeighborEstimate {
            position: e.position,
            trace_pos: e.trace_pos,
            tau: if hgrid.is_active(e.robot) { 1.0 } else { 0.0 },
        })
        .collect()
}

pub fn score_frontier(
    frontier: &Frontier,
    robot: Pose,
    map: &LocalMap,
    hgrid: &Hgrid,
    p: &UtilityParams,
) -> FrontierScore {
    let estimates = neighbor_estimates(frontier, map, hgrid, p);
    let neighbors: Vec<Point> = hgrid
        .latest_active(hgrid.owner())
        .into_iter()
        .map(|(_, pos)| pos)
        .collect();
    score_with(frontier, robot, map, &estimates, &neighbors, p)
}

/// Highest utility among candidates (valid ones only once the soft threshold
/// is reached); ties go to the lowest frontier id.
pub fn select_frontier(scores: &[FrontierScore], soft_reached: bool) -> Option<usize> {
    scores
        .iter()
        .filter(|s| !soft_reached || s.valid)
        .fold(None::<&FrontierScore>, |best, s| match best {
            Some(b)
                if b.utility > s.utility
                    || (b.utility == s.utility && b.frontier_id < s.frontier_id) =>
            {
                Some(b)
            }
            _ => Some(s),
        })
        .map(|s| s.frontier_id)
}

/// Whether a committed robot should re-run frontier selection: its goal
/// frontier disappeared, or it passed the half-way mark and has not yet used
/// its one re-evaluation for this commitment.
pub fn commitment_check(progress: f64, goal_invalidated: bool, reevaluated: bool) -> bool {
    goal_invalidated || (progress >= 0.5 && !reevaluated)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Continue,
    Terminate,
}

pub fn should_terminate(scores: &[FrontierScore], coverage: f64, soft: f64, hard: f64) -> Termination {
    let no_valid = !scores.iter().any(|s| s.valid);
    if coverage >= hard || (coverage >= soft && no_valid) || scores.is_empty() {
        Termination::Terminate
    } else {
        Termination::Continue
    }
}

/// One row of the per-decision trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: usize,
    pub robot: usize,
    pub frontier_id: usize,
    pub utility: f64,
    pub gain: f64,
    pub loss: f64,
    pub valid: bool,
    pub chosen: bool,
}
