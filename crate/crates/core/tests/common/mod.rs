//! Independent oracles shared by the acceptance gate and the property suites.
#![allow(dead_code)]

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::f64::consts::PI;

use nalgebra::{Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wiserx_core::grid::{Cell, GridGeometry, Point, Pose};
use wiserx_core::hgrid::{Estimate, Hgrid};
use wiserx_core::mapping::{detect_frontiers, CellState, LocalMap};
use wiserx_core::planner::shortest_path;
use wiserx_core::relpos::{select_stable_bearing, MeasurementNoise, RangeBearing, RelPosTrack};
use wiserx_core::wiserx::{information_gain, sigmoid, NeighborEstimate, UtilityParams};
use wiserx_core::world::Rect;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------- hgrid ----------

/// One random hgrid case: inserts, some deactivations, one query checked
/// against a linear scan. Also checks the node-visit bound.
pub fn hgrid_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let w = r.random_range(1.0..40.0);
    let h = r.random_range(1.0..40.0);
    let cell = r.random_range(0.5..8.0);
    let bounds = Rect { min_x: 0.0, min_y: 0.0, max_x: w, max_y: h };
    let mut g = Hgrid::new(0, bounds, cell);
    let mut all: Vec<Estimate> = Vec::new();
    let n = r.random_range(0..60);
    for tick in 0..n {
        let robot = r.random_range(0..4);
        let p = Point::new(r.random_range(-2.0..w + 2.0), r.random_range(-2.0..h + 2.0));
        let trace = r.random_range(0.0..3.0);
        g.insert(robot, p, trace, tick);
        let clamped = bounds.clamp(p);
        all.push(Estimate { robot, tick, position: clamped, trace_pos: trace });
    }
    let mut inactive = BTreeSet::new();
    for robot in 0..4 {
        if r.random_bool(0.25) {
            g.set_active(robot, false);
            inactive.insert(robot);
        }
    }
    let q = Point::new(r.random_range(-5.0..w + 5.0), r.random_range(-5.0..h + 5.0));
    let radius = if r.random_bool(0.1) { 0.0 } else { r.random_range(0.0..20.0) };
    let (got, visited) = g.query_near_counted(q, radius);
    let mut want: Vec<Estimate> = all
        .iter()
        .filter(|e| !inactive.contains(&e.robot))
        .filter(|e| {
            let (dx, dy) = (e.position.x - q.x, e.position.y - q.y);
            dx * dx + dy * dy <= radius * radius
        })
        .copied()
        .collect();
    want.sort_by_key(|e| (e.tick, e.robot));
    if got != want {
        return Err(format!("seed {seed}: query returned {} estimates, scan {}", got.len(), want.len()));
    }
    // Leaves whose square meets the disc, counted directly.
    let cols = (w / cell).ceil() as usize;
    let rows = (h / cell).ceil() as usize;
    let mut meeting = 0;
    for row in 0..rows {
        for col in 0..cols {
            let (x0, y0) = (col as f64 * cell, row as f64 * cell);
            let dx = (x0 - q.x).max(0.0).max(q.x - (x0 + cell));
            let dy = (y0 - q.y).max(0.0).max(q.y - (y0 + cell));
            if dx * dx + dy * dy <= radius * radius {
                meeting += 1;
            }
        }
    }
    let bound = 4 * (g.depth() as usize + 1) * meeting;
    if visited > bound {
        return Err(format!("seed {seed}: visited {visited} nodes, bound {bound}"));
    }
    Ok(())
}

// ---------- frontiers ----------

pub fn random_local_map(r: &mut ChaCha8Rng, max_side: usize) -> LocalMap {
    let w = r.random_range(1..=max_side);
    let h = r.random_range(1..=max_side);
    let mut text = String::new();
    for _ in 0..h {
        for _ in 0..w {
            text.push(match r.random_range(0..10) {
                0..=3 => '?',
                4..=7 => '.',
                _ => '#',
            });
        }
        text.push('\n');
    }
    LocalMap::from_ascii(&text, 0.25).unwrap()
}

/// Frontier detection against a per-cell predicate on the ASCII rendering
/// and a union-find grouping of the predicate cells.
pub fn frontier_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let map = random_local_map(&mut r, 30);
    let grid: Vec<Vec<char>> = map.to_ascii().lines().map(|l| l.chars().collect()).collect();
    let (h, w) = (grid.len(), grid[0].len());
    let unknown = |row: isize, col: isize| {
        row >= 0 && col >= 0 && (row as usize) < h && (col as usize) < w && grid[row as usize][col as usize] == '?'
    };
    let mut expected = BTreeSet::new();
    for row in 0..h {
        for col in 0..w {
            let (ri, ci) = (row as isize, col as isize);
            if grid[row][col] == '.'
                && (unknown(ri - 1, ci) || unknown(ri + 1, ci) || unknown(ri, ci - 1) || unknown(ri, ci + 1))
            {
                expected.insert((row, col));
            }
        }
    }
    let clusters = detect_frontiers(&map);
    let got: BTreeSet<(usize, usize)> = clusters
        .iter()
        .flat_map(|c| c.cells.iter().map(|c| (c.row, c.col)))
        .collect();
    if got != expected {
        return Err(format!("seed {seed}: frontier cell sets differ"));
    }
    let total: usize = clusters.iter().map(|c| c.cells.len()).sum();
    if total != expected.len() {
        return Err(format!("seed {seed}: a cell appears in two clusters"));
    }
    // Union-find over 8-adjacent predicate cells.
    let cells: Vec<(usize, usize)> = expected.iter().copied().collect();
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (cells[i], cells[j]);
            if a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 {
                let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                parent[ra] = rb;
            }
        }
    }
    let roots: BTreeSet<usize> = (0..cells.len()).map(|i| find(&mut parent, i)).collect();
    if roots.len() != clusters.len() {
        return Err(format!("seed {seed}: {} clusters, oracle {}", clusters.len(), roots.len()));
    }
    for c in &clusters {
        let ids: BTreeSet<usize> = c
            .cells
            .iter()
            .map(|x| {
                let i = cells.binary_search(&(x.row, x.col)).unwrap();
                find(&mut parent, i)
            })
            .collect();
        if ids.len() != 1 {
            return Err(format!("seed {seed}: cluster spans oracle components"));
        }
    }
    Ok(())
}

// ---------- planning ----------

/// Dijkstra over the same move set (8-connected Free cells, no corner
/// cutting, goal in any state), written from the rules rather than the code.
pub fn dijkstra(map: &LocalMap, start: Cell, goal: Cell) -> Option<f64> {
    let geom = map.geometry();
    let res = geom.resolution;
    let ok = |r: i64, c: i64| {
        r >= 0
            && c >= 0
            && (r as usize) < geom.height
            && (c as usize) < geom.width
            && ((r as usize, c as usize) == (goal.row, goal.col)
                || map.get(Cell::new(r as usize, c as usize)) == CellState::Free)
    };
    let mut dist = vec![f64::INFINITY; geom.len()];
    let mut heap = BinaryHeap::new();
    dist[geom.index(start)] = 0.0;
    // Integer key in micro-cells keeps the heap ordering exact enough.
    heap.push(Reverse((0u64, start.row, start.col)));
    while let Some(Reverse((_, row, col))) = heap.pop() {
        let here = Cell::new(row, col);
        let d = dist[geom.index(here)];
        if here == goal {
            return Some(d);
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                if !ok(nr, nc) {
                    continue;
                }
                if dr != 0 && dc != 0 && !(ok(row as i64 + dr, col as i64) && ok(row as i64, col as i64 + dc)) {
                    continue;
                }
                let step = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 * res } else { res };
                let next = Cell::new(nr as usize, nc as usize);
                let ni = geom.index(next);
                if d + step < dist[ni] - 1e-12 {
                    dist[ni] = d + step;
                    heap.push(Reverse(((dist[ni] * 1e9) as u64, next.row, next.col)));
                }
            }
        }
    }
    None
}

pub fn path_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let map = random_local_map(&mut r, 15);
    let geom = *map.geometry();
    let free: Vec<Cell> = (0..geom.len()).map(|i| geom.cell_at(i)).filter(|&c| map.is_free(c)).collect();
    if free.is_empty() {
        return Ok(());
    }
    for _ in 0..5 {
        let s = free[r.random_range(0..free.len())];
        let g = geom.cell_at(r.random_range(0..geom.len()));
        let got = shortest_path(&map, s, g).map(|p| p.length);
        let want = dijkstra(&map, s, g);
        match (got, want) {
            (None, None) => {}
            (Some(a), Some(b)) if (a - b).abs() < 1e-9 => {}
            _ => return Err(format!("seed {seed}: {s:?}->{g:?} A* {got:?} Dijkstra {want:?}")),
        }
    }
    Ok(())
}

// ---------- bearings ----------

/// Brute force: for every start index, the circular mean and variance of
/// the three samples from there; keep the lowest variance, earliest first.
pub fn stable_bearing_oracle(samples: &[f64]) -> f64 {
    let k = samples.len().min(3);
    let mut best = (f64::INFINITY, 0.0);
    for start in 0..=samples.len() - k {
        let mut s = 0.0;
        let mut c = 0.0;
        for i in start..start + k {
            s += samples[i].sin();
            c += samples[i].cos();
        }
        let var = 1.0 - (s * s + c * c).sqrt() / k as f64;
        if var < best.0 {
            best = (var, s.atan2(c));
        }
    }
    best.1
}

pub fn bearing_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let n = r.random_range(1..=12);
    let samples: Vec<f64> = (0..n).map(|_| r.random_range(-PI..PI)).collect();
    let got = select_stable_bearing(&samples);
    let want = stable_bearing_oracle(&samples);
    let diff = (got - want).sin().abs() + (1.0 - (got - want).cos()).abs();
    if diff > 1e-9 {
        return Err(format!("seed {seed}: {got} vs {want}"));
    }
    Ok(())
}

// ---------- numerics ----------

pub fn sigmoid_check() -> Check {
    for r in [0.5, 1.0, 3.5, 10.0] {
        let p = UtilityParams::for_radius(r);
        if (sigmoid(p.kappa1, &p) - 0.5).abs() > 1e-15 {
            return Err(format!("midpoint off for r={r}"));
        }
        let mut prev = f64::INFINITY;
        for i in 0..=4000 {
            let d = -2.0 * r + i as f64 * (12.0 * r / 4000.0);
            let s = sigmoid(d, &p);
            if !(0.0..=1.0).contains(&s) || s > prev {
                return Err(format!("sigmoid out of bounds or rising at d={d}"));
            }
            prev = s;
        }
        for d in [-1e308, -1e9, 1e9, 1e308] {
            let s = sigmoid(d, &p);
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(format!("sigmoid not finite at {d}"));
            }
        }
    }
    Ok(())
}

pub fn is_psd(m: &Matrix4<f64>) -> bool {
    if (m - m.transpose()).abs().max() > 1e-9 * (1.0 + m.abs().max()) {
        return false;
    }
    let eig = SymmetricEigen::new(*m);
    let tol = 1e-9 * (1.0 + m.trace().abs());
    eig.eigenvalues.iter().all(|&l| l >= -tol)
}

/// A random predict/update sequence keeps the covariance symmetric PSD.
pub fn ekf_psd_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let observer = Pose::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-3.0..3.0));
    let sr = r.random_range(0.001..1.0);
    let sb = r.random_range(0.001..0.6);
    let noise = MeasurementNoise { range_var: sr * sr, bearing_var: sb * sb };
    let first = RangeBearing { range: r.random_range(0.2..10.0), bearing: r.random_range(-3.0..3.0) };
    let mut t = RelPosTrack::initialize(1, first, observer, sr, 0);
    let steps = r.random_range(1..12);
    for tick in 1..=steps {
        if r.random_bool(0.5) {
            t.ekf_predict(r.random_range(0.0..10.0), r.random_range(0.0..1.0));
        } else {
            let m = RangeBearing { range: r.random_range(0.05..15.0), bearing: r.random_range(-PI..PI) };
            let _ = t.ekf_update(m, observer, noise, tick);
        }
        if !is_psd(&t.covariance) || !t.state.iter().all(|v| v.is_finite()) {
            return Err(format!("seed {seed}: covariance left PSD at step {tick}"));
        }
    }
    Ok(())
}

/// Ten exact updates of a static target bring the estimate within 1 cm.
pub fn ekf_convergence_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let observer = Pose::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
    let target = Point::new(r.random_range(-8.0..8.0), r.random_range(-8.0..8.0));
    let d = target.distance(observer.position());
    if d < 0.3 {
        return Ok(());
    }
    let exact = RangeBearing {
        range: d,
        bearing: wiserx_core::grid::wrap_angle((target.y - observer.y).atan2(target.x - observer.x) - observer.heading),
    };
    // Start from a measurement that is off by a realistic amount.
    let first = RangeBearing { range: d + 0.3, bearing: exact.bearing + 0.1 };
    let noise = MeasurementNoise { range_var: 0.01, bearing_var: (5f64.to_radians()).powi(2) };
    let mut t = RelPosTrack::initialize(1, first, observer, 0.1, 0);
    for tick in 1..=10 {
        t.ekf_predict(5.0, 0.05);
        t.ekf_update(exact, observer, noise, tick).map_err(|e| e.to_string())?;
    }
    let err = t.position().distance(target);
    if err >= 0.01 {
        return Err(format!("seed {seed}: error {err} after 10 updates"));
    }
    Ok(())
}

pub fn open_map_with_unknown(r: &mut ChaCha8Rng) -> LocalMap {
    let w = r.random_range(10..30);
    let h = r.random_range(10..30);
    let mut text = String::new();
    for _ in 0..h {
        for _ in 0..w {
            text.push(if r.random_bool(0.6) { '?' } else { '.' });
        }
        text.push('\n');
    }
    LocalMap::from_ascii(&text, 0.25).unwrap()
}

pub fn random_estimate(r: &mut ChaCha8Rng, map: &LocalMap, tau: f64) -> NeighborEstimate {
    let (w, h) = map.geometry().extent();
    NeighborEstimate {
        position: Point::new(r.random_range(0.0..w), r.random_range(0.0..h)),
        trace_pos: if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..4.0) },
        tau,
    }
}

/// Gain is non-negative and never grows when a neighbor estimate is added.
pub fn gain_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let map = open_map_with_unknown(&mut r);
    let p = UtilityParams::for_radius(r.random_range(0.5..2.5));
    let geom: GridGeometry = *map.geometry();
    let vp = geom.cell_at(r.random_range(0..geom.len()));
    let mut est = Vec::new();
    let mut prev = information_gain(vp, &map, &est, &p);
    for _ in 0..6 {
        est.push(random_estimate(&mut r, &map, 1.0));
        let next = information_gain(vp, &map, &est, &p);
        if next.gain < 0.0 || next.gain > prev.gain + 1e-9 {
            return Err(format!("seed {seed}: gain {} after {}", next.gain, prev.gain));
        }
        if (next.gain_raw - prev.gain_raw).abs() > 1e-9 {
            return Err(format!("seed {seed}: raw gain changed with neighbors"));
        }
        prev = next;
    }
    Ok(())
}

/// Estimates with τ = 0 leave every gain term bit-identical.
pub fn tau_exclusion_case(seed: u64) -> Check {
    let mut r = rng(seed);
    let map = open_map_with_unknown(&mut r);
    let p = UtilityParams::for_radius(r.random_range(0.5..2.5));
    let geom = *map.geometry();
    let vp = geom.cell_at(r.random_range(0..geom.len()));
    let live: Vec<NeighborEstimate> = (0..r.random_range(0..5)).map(|_| random_estimate(&mut r, &map, 1.0)).collect();
    let mut mixed = live.clone();
    for _ in 0..r.random_range(1..5) {
        let at = r.random_range(0..=mixed.len());
        mixed.insert(at, random_estimate(&mut r, &map, 0.0));
    }
    let a = information_gain(vp, &map, &live, &p);
    let b = information_gain(vp, &map, &mixed, &p);
    if a != b {
        return Err(format!("seed {seed}: {a:?} vs {b:?}"));
    }
    Ok(())
}

/// Runs `case` over seeds `0..n`; stops at the first failure.
pub fn over(n: u64, case: impl Fn(u64) -> Check) -> Check {
    (0..n).try_for_each(case)
}
