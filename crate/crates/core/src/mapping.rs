//! Per-robot occupancy grids, frontier detection, and PCA-based frontier
//! splitting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry, Pose};
use crate::sensing::LidarScan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// A robot's own occupancy grid. It shares the ground truth's shape; `frame`
/// is the integer cell offset of the local origin in the ground frame and is
/// only consulted by evaluation code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMap {
    geom: GridGeometry,
    cells: Vec<CellState>,
    pub frame: (i64, i64),
}

impl LocalMap {
    pub fn new(geom: GridGeometry) -> Self {
        LocalMap {
            geom,
            cells: vec![CellState::Unknown; geom.len()],
            frame: (0, 0),
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.geom.index(cell)]
    }

    pub fn get_index(&self, index: usize) -> CellState {
        self.cells[index]
    }

    pub fn states(&self) -> &[CellState] {
        &self.cells
    }

    /// Sets a cell. Occupied is sticky: a later Free never overrides it.
    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.geom.index(cell);
        self.cells[i] = merge_state(self.cells[i], state);
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Free
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|s| **s != CellState::Unknown).count()
    }

    /// True for a Free cell with at least one 4-adjacent Unknown cell.
    pub fn is_frontier_cell(&self, cell: Cell) -> bool {
        self.is_free(cell)
            && cell
                .neighbors4(&self.geom)
                .any(|n| self.get(n) == CellState::Unknown)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.geom.len() + self.geom.height);
        for row in 0..self.geom.height {
            for col in 0..self.geom.width {
                out.push(match self.get(Cell::new(row, col)) {
                    CellState::Unknown => '?',
                    CellState::Free => '.',
                    CellState::Occupied => '#',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`LocalMap::to_ascii`].
    pub fn from_ascii(text: &str, resolution: f64) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        let width = rows.first().map_or(0, |r| r.len());
        if width == 0 {
            return Err(Error::MalformedMap("empty local map".into()));
        }
        let mut cells = Vec::with_capacity(width * rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::MalformedMap(format!("row {r} is ragged")));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '?' => CellState::Unknown,
                    '.' => CellState::Free,
                    '#' => CellState::Occupied,
                    other => {
                        return Err(Error::MalformedMap(format!("unexpected {other:?}")))
                    }
                });
            }
        }
        Ok(LocalMap {
            geom: GridGeometry::new(width, rows.len(), resolution),
            cells,
            frame: (0, 0),
        })
    }
}

/// Combines two observations of a cell: Occupied dominates, then Free.
pub fn merge_state(a: CellState, b: CellState) -> CellState {
    match (a, b) {
        (CellState::Occupied, _) | (_, CellState::Occupied) => CellState::Occupied,
        (CellState::Free, _) | (_, CellState::Free) => CellState::Free,
        _ => CellState::Unknown,
    }
}

const HIT_EPS: f64 = 1e-9;

/// Marks cells pierced by each beam Free and the beam's end cell Occupied.
pub fn integrate_scan(map: &mut LocalMap, pose: Pose, scan: &LidarScan) -> Result<()> {
    if (scan.resolution - map.geom.resolution).abs() > 1e-12 {
        return Err(Error::FrameMismatch(format!(
            "scan resolution {} differs from map resolution {}",
            scan.resolution, map.geom.resolution
        )));
    }
    if scan.origin != pose {
        return Err(Error::FrameMismatch(
            "scan origin differs from the integration pose".into(),
        ));
    }
    let origin = pose.position();
    for beam in &scan.beams {
        let angle = pose.heading + beam.angle;
        match beam.hit {
            None => {
                for (cell, t) in map.geom.ray(origin, angle, scan.max_range) {
                    if t > scan.max_range {
                        break;
                    }
                    map.set(cell, CellState::Free);
                }
            }
            Some(h) => {
                // The hit cell is the one the ray enters at distance `h`.
                for (cell, t) in map.geom.ray(origin, angle, h + HIT_EPS) {
                    if t >= h - HIT_EPS {
                        map.set(cell, CellState::Occupied);
                        break;
                    }
                    map.set(cell, CellState::Free);
                }
            }
        }
    }
    Ok(())
}

/// A maximal 8-connected group of frontier cells, before splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontierCluster {
    /// Row-major sorted.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub id: usize,
    /// Row-major sorted.
    pub cells: Vec<Cell>,
    pub center: Cell,
    /// `[center, min extreme, max extreme]` along the principal axis.
    pub viewpoints: [Cell; 3],
}

/// Groups frontier cells into 8-connected clusters, ordered by their first
/// cell in row-major order.
pub fn detect_frontiers(map: &LocalMap) -> Vec<FrontierCluster> {
    let geom = map.geom;
    let n = geom.len();
    let mut is_frontier = vec![false; n];
    for (i, slot) in is_frontier.iter_mut().enumerate() {
        *slot = map.is_frontier_cell(geom.cell_at(i));
    }
    let mut seen = vec![false; n];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !is_frontier[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(geom.cell_at(start));
        let mut cells = Vec::new();
        while let Some(cell) = queue.pop_front() {
            cells.push(cell);
            for nb in cell.neighbors8(&geom) {
                let j = geom.index(nb);
                if is_frontier[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(nb);
                }
            }
        }
        cells.sort_unstable();
        clusters.push(FrontierCluster { cells });
    }
    clusters
}

/// First principal axis of the cells' `(row, col)` coordinates as a unit
/// vector `(d_row, d_col)` with its first nonzero component positive.
/// Equal eigenvalues resolve to the row axis `(1, 0)`.
pub fn principal_axis(cells: &[Cell]) -> (f64, f64) {
    let n = cells.len() as f64;
    let (mr, mc) = centroid(cells);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for cell in cells {
        let dr = cell.row as f64 - mr;
        let dc = cell.col as f64 - mc;
        a += dr * dr;
        b += dr * dc;
        c += dc * dc;
    }
    a /= n;
    b /= n;
    c /= n;
    let half_gap = ((a - c) * 0.5).hypot(b);
    let scale = a.max(c).max(1.0);
    if half_gap <= 1e-12 * scale {
        return (1.0, 0.0);
    }
    let (vr, vc) = if b.abs() <= 1e-12 * scale {
        if a > c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let lambda = (a + c) * 0.5 + half_gap;
        (lambda - c, b)
    };
    let norm = vr.hypot(vc);
    let (vr, vc) = (vr / norm, vc / norm);
    if vr < 0.0 || (vr == 0.0 && vc < 0.0) {
        (-vr, -vc)
    } else {
        (vr, vc)
    }
}

fn centroid(cells: &[Cell]) -> (f64, f64) {
    let n = cells.len() as f64;
    let sr: f64 = cells.iter().map(|c| c.row as f64).sum();
    let sc: f64 = cells.iter().map(|c| c.col as f64).sum();
    (sr / n, sc / n)
}

fn project(cell: Cell, axis: (f64, f64)) -> f64 {
    cell.row as f64 * axis.0 + cell.col as f64 * axis.1
}

/// Builds a frontier (viewpoints and center) from a non-empty cell set.
pub fn make_frontier(id: usize, mut cells: Vec<Cell>) -> Frontier {
    cells.sort_unstable();
    let axis = principal_axis(&cells);
    let (mr, mc) = centroid(&cells);
    let mut center = cells[0];
    let mut best_d = f64::INFINITY;
    let mut lo = (f64::INFINITY, cells[0]);
    let mut hi = (f64::NEG_INFINITY, cells[0]);
    for &cell in &cells {
        let d = (cell.row as f64 - mr).powi(2) + (cell.col as f64 - mc).powi(2);
        if d < best_d - 1e-12 {
            best_d = d;
            center = cell;
        }
        let p = project(cell, axis);
        if p < lo.0 - 1e-9 {
            lo = (p, cell);
        }
        if p > hi.0 + 1e-9 {
            hi = (p, cell);
        }
    }
    Frontier {
        id,
        center,
        viewpoints: [center, lo.1, hi.1],
        cells,
    }
}

/// Splits a cluster whose extent along its principal axis exceeds
/// `max_extent` meters into `⌈extent / max_extent⌉` equal projected
/// intervals (boundary cells go to the lower interval). Each interval is
/// further separated into 8-connected pieces. Returned frontiers carry id 0.
pub fn split_frontier(cluster: &FrontierCluster, max_extent: f64, geom: &GridGeometry) -> Vec<Frontier> {
    let cells = &cluster.cells;
    assert!(!cells.is_empty(), "split_frontier on an empty cluster");
    let axis = principal_axis(cells);
    let proj: Vec<f64> = cells.iter().map(|&c| project(c, axis)).collect();
    let min = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let max = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let extent = (max - min) * geom.resolution;
    if extent <= max_extent + 1e-9 || max_extent <= 0.0 {
        return vec![make_frontier(0, cells.clone())];
    }
    let pieces = ((extent / max_extent) - 1e-9).ceil() as usize;
    let len = (max - min) / pieces as f64;
    let mut buckets: Vec<Vec<Cell>> = vec![Vec::new(); pieces];
    for (&cell, &p) in cells.iter().zip(&proj) {
        let idx = (((p - min) / len) - 1e-9).ceil() as i64 - 1;
        buckets[idx.clamp(0, pieces as i64 - 1) as usize].push(cell);
    }
    buckets
        .into_iter()
        .filter(|b| !b.is_empty())
        .flat_map(|b| connected_pieces(b, geom))
        .map(|piece| make_frontier(0, piece))
        .collect()
}

fn connected_pieces(mut cells: Vec<Cell>, geom: &GridGeometry) -> Vec<Vec<Cell>> {
    cells.sort_unstable();
    let mut assigned = vec![false; cells.len()];
    let mut out = Vec::new();
    for start in 0..cells.len() {
        if assigned[start] {
            continue;
        }
        assigned[start] = true;
        let mut piece = vec![cells[start]];
        let mut k = 0;
        while k < piece.len() {
            let cur = piece[k];
            for nb in cur.neighbors8(geom) {
                if let Ok(j) = cells.binary_search(&nb) {
                    if !assigned[j] {
                        assigned[j] = true;
                        piece.push(nb);
                    }
                }
            }
            k += 1;
        }
        piece.sort_unstable();
        out.push(piece);
    }
    out
}

/// Detects, splits, and numbers all frontiers of a map.
pub fn extract_frontiers(map: &LocalMap, max_extent: f64) -> Vec<Frontier> {
    let mut out = Vec::new();
    for cluster in detect_frontiers(map) {
        for mut f in split_frontier(&cluster, max_extent, &map.geom) {
            f.id = out.len();
            out.push(f);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::lidar_scan;
    use crate::world::load_environment;
    use std::collections::BTreeSet;

    #[test]
    fn scans_never_contradict_truth() {
        use rand::{Rng, SeedableRng};
        let truth = crate::world::office_map();
        let free: Vec<Cell> = truth.free_cells().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut map = LocalMap::new(*truth.geometry());
        for _ in 0..300 {
            let c = free[rng.random_range(0..free.len())];
            let p = truth.geometry().center(c);
            let pose = Pose::new(
                p.x + rng.random_range(-0.12..0.12),
                p.y + rng.random_range(-0.12..0.12),
                rng.random_range(-3.0..3.0),
            );
            let scan = lidar_scan(pose, &truth, 3.5, 360).unwrap();
            integrate_scan(&mut map, pose, &scan).unwrap();
        }
        for i in 0..map.geometry().len() {
            let cell = map.geometry().cell_at(i);
            match map.get(cell) {
                CellState::Free => assert!(truth.is_free(cell), "{cell:?} marked free"),
                CellState::Occupied => assert!(truth.is_occupied(cell), "{cell:?} marked occupied"),
                CellState::Unknown => {}
            }
        }
    }

    fn line(cells: impl IntoIterator<Item = (usize, usize)>) -> FrontierCluster {
        let mut cells: Vec<Cell> = cells.into_iter().map(|(r, c)| Cell::new(r, c)).collect();
        cells.sort_unstable();
        FrontierCluster { cells }
    }

    #[test]
    fn fully_known_or_unknown_has_no_frontiers() {
        let mut m = LocalMap::new(GridGeometry::new(6, 6, 0.25));
        assert!(detect_frontiers(&m).is_empty());
        for i in 0..36 {
            let c = m.geom.cell_at(i);
            m.set(c, CellState::Free);
        }
        assert!(detect_frontiers(&m).is_empty());
    }

    #[test]
    fn half_known_map_has_one_column_frontier() {
        let m = LocalMap::from_ascii("..???\n..???\n..???\n..???\n..???\n", 0.25).unwrap();
        let f = detect_frontiers(&m);
        assert_eq!(f.len(), 1);
        let expect: Vec<Cell> = (0..5).map(|r| Cell::new(r, 1)).collect();
        assert_eq!(f[0].cells, expect);
    }

    #[test]
    fn collinear_ten_cells_split_four_three_three() {
        let geom = GridGeometry::new(20, 20, 0.25);
        let cl = line((0..10).map(|c| (3, c + 2)));
        let parts = split_frontier(&cl, 4.0 * 0.25, &geom);
        let sizes: Vec<usize> = parts.iter().map(|f| f.cells.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let mut union: Vec<Cell> = parts.iter().flat_map(|f| f.cells.clone()).collect();
        union.sort_unstable();
        assert_eq!(union, cl.cells);
    }

    #[test]
    fn short_cluster_unchanged() {
        let geom = GridGeometry::new(20, 20, 0.25);
        let cl = line([(1, 1), (1, 2)]);
        let parts = split_frontier(&cl, 3.5, &geom);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].cells, cl.cells);
    }

    #[test]
    fn square_blob_splits_along_rows() {
        let geom = GridGeometry::new(20, 20, 1.0);
        let cl = line((0..4).flat_map(|r| (0..4).map(move |c| (r + 2, c + 2))));
        assert_eq!(principal_axis(&cl.cells), (1.0, 0.0));
        let parts = split_frontier(&cl, 1.5, &geom);
        // extent 3 along rows -> 2 bands, each constant in row-range
        assert_eq!(parts.len(), 2);
        for p in &parts {
            let rows: BTreeSet<usize> = p.cells.iter().map(|c| c.row).collect();
            assert_eq!(rows.len(), 2);
        }
    }

    #[test]
    fn principal_axis_matches_symmetric_eigen() {
        let cells: Vec<Cell> = [(0, 0), (1, 2), (2, 3), (3, 5), (4, 6), (2, 2)]
            .iter()
            .map(|&(r, c)| Cell::new(r, c))
            .collect();
        let (mr, mc) = centroid(&cells);
        let mut cov = nalgebra::Matrix2::<f64>::zeros();
        for c in &cells {
            let d = nalgebra::Vector2::new(c.row as f64 - mr, c.col as f64 - mc);
            cov += d * d.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov / cells.len() as f64);
        let k = if eig.eigenvalues[0] > eig.eigenvalues[1] { 0 } else { 1 };
        let v = eig.eigenvectors.column(k);
        let (ar, ac) = principal_axis(&cells);
        assert!((ar * v[0] + ac * v[1]).abs() > 1.0 - 1e-9);
    }

    #[test]
    fn viewpoints_are_center_and_extremes() {
        let f = make_frontier(0, line((0..5).map(|c| (2, c))).cells);
        assert_eq!(f.center, Cell::new(2, 2));
        assert_eq!(f.viewpoints, [Cell::new(2, 2), Cell::new(2, 0), Cell::new(2, 4)]);
    }

    fn wall_map() -> crate::world::GroundTruthMap {
        let mut rows = vec![vec!['.'; 40]; 40];
        for i in 0..40 {
            rows[0][i] = '#';
            rows[39][i] = '#';
            rows[i][0] = '#';
            rows[i][39] = '#';
        }
        for row in rows.iter_mut().take(39).skip(1) {
            row[28] = '#';
        }
        let text: String = rows.iter().map(|r| r.iter().collect::<String>() + "\n").collect();
        load_environment(&text, 0.25).unwrap()
    }

    #[test]
    fn four_beam_scan_marks_ray_cells() {
        let truth = wall_map();
        let pose = Pose::new(5.125, 5.125, 0.0); // cell (20, 20)
        let scan = lidar_scan(pose, &truth, 3.5, 4).unwrap();
        let mut m = LocalMap::new(*truth.geometry());
        integrate_scan(&mut m, pose, &scan).unwrap();
        // east: cols 20..=27 free, col 28 occupied
        for c in 20..28 {
            assert_eq!(m.get(Cell::new(20, c)), CellState::Free, "col {c}");
        }
        assert_eq!(m.get(Cell::new(20, 28)), CellState::Occupied);
        // west: 3.5 m = 14 cells; cells whose entry is within range
        for c in 6..20 {
            assert_eq!(m.get(Cell::new(20, c)), CellState::Free, "col {c}");
        }
        assert_eq!(m.get(Cell::new(20, 5)), CellState::Unknown);
        let occupied = m.states().iter().filter(|s| **s == CellState::Occupied).count();
        assert_eq!(occupied, 1);
        let free = m.states().iter().filter(|s| **s == CellState::Free).count();
        // origin + east 7 + west/north/south 14 each
        assert_eq!(free, 1 + 7 + 14 + 14 + 14);

        let before = m.clone();
        integrate_scan(&mut m, pose, &scan).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn max_range_scan_adds_no_obstacles() {
        let truth = wall_map();
        let pose = Pose::new(2.125, 5.125, 0.0);
        let scan = lidar_scan(pose, &truth, 1.0, 90).unwrap();
        assert!(scan.beams.iter().all(|b| b.hit.is_none()));
        let mut m = LocalMap::new(*truth.geometry());
        integrate_scan(&mut m, pose, &scan).unwrap();
        assert!(m.states().iter().all(|s| *s != CellState::Occupied));
        assert!(m.known_count() > 0);
    }

    #[test]
    fn resolution_mismatch_rejected() {
        let truth = wall_map();
        let pose = Pose::new(2.125, 5.125, 0.0);
        let scan = lidar_scan(pose, &truth, 1.0, 8).unwrap();
        let mut m = LocalMap::new(GridGeometry::new(40, 40, 0.5));
        assert!(matches!(
            integrate_scan(&mut m, pose, &scan),
            Err(Error::FrameMismatch(_))
        ));
    }

    #[test]
    fn occupied_is_sticky() {
        let mut m = LocalMap::new(GridGeometry::new(3, 3, 1.0));
        m.set(Cell::new(1, 1), CellState::Occupied);
        m.set(Cell::new(1, 1), CellState::Free);
        assert_eq!(m.get(Cell::new(1, 1)), CellState::Occupied);
    }

    #[test]
    fn ascii_roundtrip() {
        let text = "#.?\n?.#\n";
        let m = LocalMap::from_ascii(text, 0.25).unwrap();
        assert_eq!(m.to_ascii(), text);
    }
}
