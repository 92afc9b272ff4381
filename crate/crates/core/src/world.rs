//! Ground-truth environment and scenario configuration.
//!
//! Map files are ASCII grids: `#` is occupied, `.` is free, one line per row,
//! every row the same length. The border must be fully occupied.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry, Point, Pose};

/// Version of the scenario schema and of the run bundle layout.
pub const SCHEMA_VERSION: u32 = 1;

pub mod defaults {
    pub const RESOLUTION: f64 = 0.25;
    pub const SENSOR_RADIUS: f64 = 3.5;
    pub const LIDAR_BEAMS: usize = 360;
    pub const TICK_DT: f64 = 0.5;
    pub const HGRID_FILL_K: u32 = 3;
    pub const SOFT_THRESHOLD: f64 = 0.80;
    pub const HARD_THRESHOLD: f64 = 0.95;
    pub const BEARING_STD_DEG: f64 = 5.0;
    pub const RANGE_STD_M: f64 = 0.10;
    pub const MULTIPATH_PROB: f64 = 0.2;
    pub const NOMINAL_SPEED: f64 = 0.5;
    pub const MAX_TICKS: usize = 5000;
    pub const DECISION_INTERVAL: usize = 10;
    pub const SEED: u64 = 0;
}

/// Axis-aligned rectangle in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min_x, self.max_x),
            p.y.clamp(self.min_y, self.max_y),
        )
    }
}

/// Immutable true environment.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthMap {
    geom: GridGeometry,
    occupied: Vec<bool>,
    free_count: usize,
}

impl GroundTruthMap {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn resolution(&self) -> f64 {
        self.geom.resolution
    }

    pub fn bounds(&self) -> Rect {
        let (w, h) = self.geom.extent();
        Rect {
            min_x: 0.0,
            min_y: 0.0,
            max_x: w,
            max_y: h,
        }
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.geom.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn is_free_index(&self, index: usize) -> bool {
        !self.occupied[index]
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.geom.len())
            .filter(|&i| !self.occupied[i])
            .map(|i| self.geom.cell_at(i))
    }

    /// True when `p` falls on a free cell inside the grid.
    pub fn is_free_point(&self, p: Point) -> bool {
        self.geom.cell_of(p).is_some_and(|c| self.is_free(c))
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.geom.len() + self.geom.height);
        for row in 0..self.geom.height {
            for col in 0..self.geom.width {
                out.push(if self.is_occupied(Cell::new(row, col)) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses an ASCII grid into a validated ground-truth map.
pub fn load_environment(text: &str, resolution: f64) -> Result<GroundTruthMap> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::MalformedMap(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .skip_while(|l| l.is_empty())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if rows.is_empty() {
        return Err(Error::MalformedMap("empty map".into()));
    }
    let width = rows[0].len();
    if width == 0 {
        return Err(Error::MalformedMap("first row is empty".into()));
    }
    let mut occupied = Vec::with_capacity(width * rows.len());
    for (r, line) in rows.iter().enumerate() {
        if line.len() != width {
            return Err(Error::MalformedMap(format!(
                "row {r} has length {} but row 0 has length {width}",
                line.len()
            )));
        }
        for (c, ch) in line.chars().enumerate() {
            match ch {
                '#' => occupied.push(true),
                '.' => occupied.push(false),
                other => {
                    return Err(Error::MalformedMap(format!(
                        "unexpected character {other:?} at row {r}, col {c}"
                    )))
                }
            }
        }
    }
    let geom = GridGeometry::new(width, rows.len(), resolution);
    for i in 0..geom.len() {
        let cell = geom.cell_at(i);
        if geom.is_border(cell) && !occupied[i] {
            return Err(Error::UnboundedMap {
                row: cell.row,
                col: cell.col,
            });
        }
    }
    let free_count = occupied.iter().filter(|o| !**o).count();
    if free_count == 0 {
        return Err(Error::MalformedMap("map has no free cells".into()));
    }
    Ok(GroundTruthMap {
        geom,
        occupied,
        free_count,
    })
}

pub fn load_environment_file(path: &Path, resolution: f64) -> Result<GroundTruthMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_environment(&text, resolution)
}

/// The 40×40 cluttered office used by the canned experiments.
pub fn office_map_text() -> &'static str {
    include_str!("../assets/office.txt")
}

pub fn office_map() -> GroundTruthMap {
    load_environment(office_map_text(), defaults::RESOLUTION).expect("bundled office map is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    WiserX,
    Baseline1,
    Baseline2,
    Baseline3,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::WiserX => "wiserx",
            Strategy::Baseline1 => "baseline1",
            Strategy::Baseline2 => "baseline2",
            Strategy::Baseline3 => "baseline3",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wiserx" | "wiser-x" => Ok(Strategy::WiserX),
            "baseline1" => Ok(Strategy::Baseline1),
            "baseline2" => Ok(Strategy::Baseline2),
            "baseline3" => Ok(Strategy::Baseline3),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Standard deviations of the simulated inter-robot channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    /// radians
    pub bearing_std: f64,
    /// meters
    pub range_std: f64,
}

impl NoiseLevel {
    pub fn from_degrees(bearing_deg: f64, range_m: f64) -> Self {
        NoiseLevel {
            bearing_std: bearing_deg.to_radians(),
            range_std: range_m,
        }
    }

    pub fn bearing_deg(&self) -> f64 {
        self.bearing_std.to_degrees()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub robot: usize,
    /// Merged-coverage fractions `(low, high)` arming the failure.
    pub window: (f64, f64),
}

/// How start poses are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartSpec {
    Fixed(Vec<Pose>),
    /// Distinct free cells drawn from the run seed.
    Random,
    /// Robot `k` starts on a free cell of the `k`-th vertical strip.
    RandomPerStrip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    Path(PathBuf),
    Inline(String),
    Office,
}

/// A fully validated scenario. Construct through [`validate_scenario`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub map_source: MapSource,
    #[serde(skip)]
    pub map: Arc<GroundTruthMap>,
    pub robot_count: usize,
    pub start: StartSpec,
    pub sensor_radius: f64,
    pub lidar_beams: usize,
    pub noise: NoiseLevel,
    pub multipath_prob: f64,
    pub speed_factors: Vec<f64>,
    pub nominal_speed: f64,
    pub failure: Option<FailureSpec>,
    pub strategy: Strategy,
    pub soft_threshold: f64,
    pub hard_threshold: f64,
    pub hgrid_fill_k: u32,
    pub seed: u64,
    pub max_ticks: usize,
    pub tick_dt: f64,
    pub decision_interval: usize,
    /// When false, peers never clear a silent robot's activity flag
    /// (ablation of failure handling).
    pub tau_gating: bool,
}

impl ScenarioConfig {
    /// Renders the resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
        out.push_str(&toml::to_string(self).unwrap_or_else(|e| format!("# unrenderable: {e}\n")));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawFailure {
    pub robot: usize,
    pub window: [f64; 2],
}

/// Scenario document as written by users; every field except the map and
/// the robot count is optional.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: Option<String>,
    pub map: Option<PathBuf>,
    pub map_inline: Option<String>,
    pub resolution: Option<f64>,
    pub robots: Option<usize>,
    pub start_poses: Option<Vec<Vec<f64>>>,
    pub start_mode: Option<String>,
    pub strategy: Option<String>,
    pub sensor_radius: Option<f64>,
    pub lidar_beams: Option<usize>,
    pub bearing_noise_deg: Option<f64>,
    pub range_noise_m: Option<f64>,
    pub multipath_prob: Option<f64>,
    pub speed_factors: Option<Vec<f64>>,
    pub nominal_speed: Option<f64>,
    pub failure: Option<RawFailure>,
    pub soft_threshold: Option<f64>,
    pub hard_threshold: Option<f64>,
    pub hgrid_fill_k: Option<u32>,
    pub seed: Option<u64>,
    pub max_ticks: Option<usize>,
    pub tick_dt: Option<f64>,
    pub decision_interval: Option<usize>,
    pub tau_gating: Option<bool>,
}

impl RawScenario {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
        }
    }
}

/// Reads, parses and validates a scenario file. Relative map paths resolve
/// against the file's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = RawScenario::parse(&text)?;
    validate_scenario(raw, path.parent())
}

pub fn validate_scenario(raw: RawScenario, base_dir: Option<&Path>) -> Result<ScenarioConfig> {
    let resolution = raw.resolution.unwrap_or(defaults::RESOLUTION);
    let (map_source, map) = match (&raw.map, &raw.map_inline) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "give either `map` or `map_inline`, not both".into(),
            ))
        }
        (Some(path), None) => {
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let map = load_environment_file(&full, resolution)?;
            (MapSource::Path(path.clone()), map)
        }
        (None, Some(text)) => (
            MapSource::Inline(text.clone()),
            load_environment(text, resolution)?,
        ),
        (None, None) => (MapSource::Office, load_environment(office_map_text(), resolution)?),
    };

    let robot_count = raw
        .robots
        .ok_or_else(|| Error::InvalidConfig("`robots` is required".into()))?;
    if robot_count == 0 {
        return Err(Error::InvalidConfig("`robots` must be at least 1".into()));
    }

    let start = match (&raw.start_poses, raw.start_mode.as_deref()) {
        (Some(poses), None | Some("fixed")) => {
            if poses.len() != robot_count {
                return Err(Error::InvalidConfig(format!(
                    "{} start poses given for {robot_count} robots",
                    poses.len()
                )));
            }
            let mut out = Vec::with_capacity(poses.len());
            for (robot, p) in poses.iter().enumerate() {
                let pose = match p.as_slice() {
                    [x, y] => Pose::new(*x, *y, 0.0),
                    [x, y, h] => Pose::new(*x, *y, *h),
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "start pose {robot} must be [x, y] or [x, y, heading]"
                        )))
                    }
                };
                if !map.is_free_point(pose.position()) {
                    return Err(Error::InvalidStartPose {
                        robot,
                        x: pose.x,
                        y: pose.y,
                    });
                }
                out.push(pose);
            }
            StartSpec::Fixed(out)
        }
        (Some(_), Some(mode)) => {
            return Err(Error::InvalidConfig(format!(
                "start_mode {mode:?} conflicts with explicit start_poses"
            )))
        }
        (None, None | Some("random")) => StartSpec::Random,
        (None, Some("random-per-strip")) => StartSpec::RandomPerStrip,
        (None, Some(mode)) => {
            return Err(Error::InvalidConfig(format!("unknown start_mode {mode:?}")))
        }
    };

    let sensor_radius = raw.sensor_radius.unwrap_or(defaults::SENSOR_RADIUS);
    if !(sensor_radius >= 0.0 && sensor_radius.is_finite()) {
        return Err(Error::InvalidConfig("sensor_radius must be >= 0".into()));
    }
    let lidar_beams = raw.lidar_beams.unwrap_or(defaults::LIDAR_BEAMS);
    if lidar_beams == 0 {
        return Err(Error::InvalidConfig("lidar_beams must be >= 1".into()));
    }

    let bearing_deg = raw.bearing_noise_deg.unwrap_or(defaults::BEARING_STD_DEG);
    let range_m = raw.range_noise_m.unwrap_or(defaults::RANGE_STD_M);
    if !(bearing_deg >= 0.0 && bearing_deg.is_finite()) {
        return Err(Error::BadNoise(format!(
            "bearing std must be >= 0, got {bearing_deg}"
        )));
    }
    if !(range_m >= 0.0 && range_m.is_finite()) {
        return Err(Error::BadNoise(format!("range std must be >= 0, got {range_m}")));
    }
    let multipath_prob = raw.multipath_prob.unwrap_or(defaults::MULTIPATH_PROB);
    if !(0.0..=1.0).contains(&multipath_prob) {
        return Err(Error::BadNoise(format!(
            "multipath_prob must lie in [0, 1], got {multipath_prob}"
        )));
    }

    let speed_factors = raw
        .speed_factors
        .clone()
        .unwrap_or_else(|| vec![1.0; robot_count]);
    if speed_factors.len() != robot_count {
        return Err(Error::InvalidConfig(format!(
            "{} speed factors given for {robot_count} robots",
            speed_factors.len()
        )));
    }
    if speed_factors.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidConfig("speed factors must be positive".into()));
    }
    let nominal_speed = raw.nominal_speed.unwrap_or(defaults::NOMINAL_SPEED);
    if !(nominal_speed > 0.0 && nominal_speed.is_finite()) {
        return Err(Error::InvalidConfig("nominal_speed must be positive".into()));
    }

    let failure = match raw.failure {
        None => None,
        Some(f) => {
            let [lo, hi] = f.window;
            if f.robot >= robot_count {
                return Err(Error::InvalidConfig(format!(
                    "failure robot {} out of range",
                    f.robot
                )));
            }
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "failure window [{lo}, {hi}] must satisfy 0 <= low <= high <= 1"
                )));
            }
            Some(FailureSpec {
                robot: f.robot,
                window: (lo, hi),
            })
        }
    };

    let strategy = match &raw.strategy {
        Some(s) => s.parse()?,
        None => Strategy::WiserX,
    };

    let soft = raw.soft_threshold.unwrap_or(defaults::SOFT_THRESHOLD);
    let hard = raw.hard_threshold.unwrap_or(defaults::HARD_THRESHOLD);
    if !(soft > 0.0 && soft <= hard && hard <= 1.0) {
        return Err(Error::ThresholdOrder { soft, hard });
    }
    let hgrid_fill_k = raw.hgrid_fill_k.unwrap_or(defaults::HGRID_FILL_K);
    if hgrid_fill_k == 0 {
        return Err(Error::InvalidConfig("hgrid_fill_k must be >= 1".into()));
    }
    let max_ticks = raw.max_ticks.unwrap_or(defaults::MAX_TICKS);
    if max_ticks == 0 {
        return Err(Error::InvalidConfig("max_ticks must be >= 1".into()));
    }
    let tick_dt = raw.tick_dt.unwrap_or(defaults::TICK_DT);
    if !(tick_dt > 0.0 && tick_dt.is_finite()) {
        return Err(Error::InvalidConfig("tick_dt must be positive".into()));
    }
    let decision_interval = raw.decision_interval.unwrap_or(defaults::DECISION_INTERVAL);
    if decision_interval == 0 {
        return Err(Error::InvalidConfig("decision_interval must be >= 1".into()));
    }

    Ok(ScenarioConfig {
        name: raw.name.unwrap_or_else(|| strategy.as_str().to_string()),
        map_source,
        map: Arc::new(map),
        robot_count,
        start,
        sensor_radius,
        lidar_beams,
        noise: NoiseLevel::from_degrees(bearing_deg, range_m),
        multipath_prob,
        speed_factors,
        nominal_speed,
        failure,
        strategy,
        soft_threshold: soft,
        hard_threshold: hard,
        hgrid_fill_k,
        seed: raw.seed.unwrap_or(defaults::SEED),
        max_ticks,
        tick_dt,
        decision_interval,
        tau_gating: raw.tau_gating.unwrap_or(true),
    })
}
