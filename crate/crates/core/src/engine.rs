//! Deterministic tick loop: sensing, relative-position estimation, frontier
//! decisions, motion, failure injection, and trace recording.
//!
//! Each tick runs in phases. Every robot senses first, then (on decision
//! ticks) pings its peers, then decides, then moves, and finally the
//! evaluation oracle records coverage. Within a phase robots only read the
//! state of other robots left by earlier phases, so the result does not
//! depend on the order robots are visited in.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path as FsPath;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{baseline1_scores, baseline3_partition, greedy_assign, in_strip, Candidate, Partition};
use crate::error::{Error, Result};
use crate::grid::{Cell, Pose};
use crate::hgrid::Hgrid;
use crate::mapping::{extract_frontiers, integrate_scan, CellState, Frontier, LocalMap};
use crate::metrics::{coverage_percent, fmt_g, merge_maps, pairwise_overlap};
use crate::planner::{reachable_from, shortest_path, step_motion, Path, Route};
use crate::relpos::{
    fuse_samples, MeasurementNoise, RelPosTrack, DEFAULT_PROCESS_NOISE, MISSED_PINGS_TO_FAIL,
    RANGE_SUBSAMPLE_STRIDE,
};
use crate::rng::{stream, Purpose, SimRng};
use crate::sensing::{lidar_scan, ping_measurement, PingRequest};
use crate::wiserx::{
    commitment_check, score_frontier, select_frontier, should_terminate, FrontierScore,
    Termination, TraceRow, UtilityParams,
};
use crate::world::{ScenarioConfig, StartSpec, Strategy};

/// Ping samples gathered per estimation event.
pub const PING_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AgentState {
    Exploring,
    Terminated,
    Failed,
}

/// The frontier a robot is heading to.
#[derive(Clone, Debug, PartialEq)]
pub struct Commitment {
    pub route: Route,
    pub goal: Cell,
    /// Cells of the chosen frontier when it was selected.
    pub frontier_cells: Vec<Cell>,
    pub reevaluated: bool,
}

#[derive(Clone, Debug)]
pub struct RobotAgent {
    pub id: usize,
    pub pose: Pose,
    pub map: LocalMap,
    pub hgrid: Hgrid,
    pub tracks: BTreeMap<usize, RelPosTrack>,
    missed: BTreeMap<usize, u32>,
    pub commitment: Option<Commitment>,
    pub state: AgentState,
    pub speed_factor: f64,
    blacklist: BTreeSet<Cell>,
}

impl RobotAgent {
    fn cell(&self) -> Cell {
        self.map
            .geometry()
            .cell_of(self.pose.position())
            .expect("robot stays inside its map")
    }

    pub fn is_exploring(&self) -> bool {
        self.state == AgentState::Exploring
    }

    /// Cells this robot refuses as goals after reaching them without
    /// clearing the frontier.
    pub fn blacklist(&self) -> &BTreeSet<Cell> {
        &self.blacklist
    }
}

/// Outcome of a decision step.
#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Goal { frontier: Frontier, goal: Cell, path: Path },
    Terminate,
    Idle,
}

/// Decision-time thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub soft: f64,
    pub hard: f64,
    pub fill_k: u32,
}

fn trace_rows(tick: usize, robot: usize, scores: &[FrontierScore], chosen: Option<usize>) -> Vec<TraceRow> {
    scores
        .iter()
        .map(|s| TraceRow {
            tick,
            robot,
            frontier_id: s.frontier_id,
            utility: s.utility,
            gain: s.gain,
            loss: s.loss_total,
            valid: s.valid,
            chosen: chosen == Some(s.frontier_id),
        })
        .collect()
}

/// Frontiers of `map` with at least one viewpoint reachable from `from`.
fn reachable_frontiers(map: &LocalMap, from: Cell, r: f64) -> (Vec<Frontier>, Vec<bool>) {
    let reach = reachable_from(map, from);
    let geom = map.geometry();
    let frontiers = extract_frontiers(map, r)
        .into_iter()
        .filter(|f| f.viewpoints.iter().any(|&v| reach[geom.index(v)]))
        .collect();
    (frontiers, reach)
}

/// Keeps scores whose best viewpoint can be driven to and is not blacklisted.
fn usable(scores: Vec<FrontierScore>, map: &LocalMap, reach: &[bool], blacklist: &BTreeSet<Cell>) -> Vec<FrontierScore> {
    scores
        .into_iter()
        .filter(|s| reach[map.geometry().index(s.best_viewpoint)] && !blacklist.contains(&s.best_viewpoint))
        .collect()
}

fn goal_for(agent: &RobotAgent, map: &LocalMap, frontiers: &[Frontier], score: &FrontierScore) -> Decision {
    let frontier = frontiers
        .iter()
        .find(|f| f.id == score.frontier_id)
        .expect("score refers to a listed frontier")
        .clone();
    match shortest_path(map, agent.cell(), score.best_viewpoint) {
        Some(path) => Decision::Goal {
            frontier,
            goal: score.best_viewpoint,
            path,
        },
        None => Decision::Idle,
    }
}

/// One robot's frontier decision under the neighbor-aware utility. Reads
/// only the robot's own map, hgrid, pose and blacklist.
pub fn wiserx_decide(
    agent: &RobotAgent,
    p: &UtilityParams,
    th: Thresholds,
    tick: usize,
) -> (Decision, Vec<TraceRow>) {
    let map = &agent.map;
    let (frontiers, reach) = reachable_frontiers(map, agent.cell(), p.r);
    let scores: Vec<FrontierScore> = frontiers
        .iter()
        .map(|f| score_frontier(f, agent.pose, map, &agent.hgrid, p))
        .collect();
    let scores = usable(scores, map, &reach, &agent.blacklist);
    let coverage = agent.hgrid.coverage_fraction(th.fill_k);
    if should_terminate(&scores, coverage, th.soft, th.hard) == Termination::Terminate {
        return (Decision::Terminate, trace_rows(tick, agent.id, &scores, None));
    }
    let chosen = select_frontier(&scores, coverage >= th.soft);
    let rows = trace_rows(tick, agent.id, &scores, chosen);
    match chosen {
        Some(id) => {
            let score = scores.iter().find(|s| s.frontier_id == id).unwrap();
            (goal_for(agent, map, &frontiers, score), rows)
        }
        None => (Decision::Terminate, rows),
    }
}

/// Independent greedy decision, optionally restricted to frontiers centered
/// in one strip of `partition`. Terminates when nothing reachable is left.
pub fn greedy_decide(
    agent: &RobotAgent,
    p: &UtilityParams,
    strip: Option<(&Partition, usize)>,
    tick: usize,
) -> (Decision, Vec<TraceRow>) {
    let map = &agent.map;
    let (mut frontiers, reach) = reachable_frontiers(map, agent.cell(), p.r);
    if let Some((partition, k)) = strip {
        // Goals stay inside the strip: a viewpoint outside it falls back to
        // the frontier center, which is inside by selection.
        let geom = *map.geometry();
        frontiers = in_strip(&frontiers, map, partition, k)
            .into_iter()
            .map(|f| {
                let mut f = f.clone();
                for v in f.viewpoints.iter_mut() {
                    if partition.region_of(geom.center(*v)) != Some(k) {
                        *v = f.center;
                    }
                }
                f
            })
            .collect();
    }
    let scores = baseline1_scores(&frontiers, map, agent.pose, p);
    let scores = usable(scores, map, &reach, &agent.blacklist);
    let chosen = select_frontier(&scores, false);
    let rows = trace_rows(tick, agent.id, &scores, chosen);
    match chosen {
        Some(id) => {
            let score = scores.iter().find(|s| s.frontier_id == id).unwrap();
            (goal_for(agent, map, &frontiers, score), rows)
        }
        None => (Decision::Terminate, rows),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Terminate,
    Fail,
    GoalChange,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Terminate => "terminate",
            EventKind::Fail => "fail",
            EventKind::GoalChange => "goal_change",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub tick: usize,
    pub robot: usize,
    pub kind: EventKind,
    pub goal: Option<Cell>,
}

/// State captured when a robot fails.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureRecord {
    pub robot: usize,
    pub tick: usize,
    /// Every robot's local map at the fail tick, indexed by robot id.
    pub maps: Vec<LocalMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub trial: usize,
    pub ticks: usize,
    /// Merged coverage % over non-failed robots, one entry per tick.
    pub coverage: Vec<f64>,
    /// `robot_coverage[tick][robot]`, %.
    pub robot_coverage: Vec<Vec<f64>>,
    /// Pairwise overlap % over non-failed robots, per tick.
    pub overlap: Vec<f64>,
    pub events: Vec<Event>,
    pub start_poses: Vec<Pose>,
    pub final_poses: Vec<Pose>,
    pub final_maps: Vec<LocalMap>,
    pub termination_ticks: Vec<Option<usize>>,
    pub failure: Option<FailureRecord>,
    pub budget_exceeded: bool,
    pub trace: Vec<TraceRow>,
}

impl RunResult {
    /// Latest termination tick over robots that did not fail, or the tick
    /// count when the budget ran out.
    pub fn completion_tick(&self) -> usize {
        if self.budget_exceeded {
            return self.ticks;
        }
        self.termination_ticks.iter().flatten().copied().max().unwrap_or(self.ticks)
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage.last().copied().unwrap_or(0.0)
    }

    /// First tick whose merged coverage reached `pct`.
    pub fn tick_to_coverage(&self, pct: f64) -> Option<usize> {
        self.coverage.iter().position(|&c| c >= pct)
    }

    /// Output files as `(relative path, contents)`, in a fixed order.
    pub fn bundle(&self) -> Vec<(String, String)> {
        let n = self.config.robot_count;
        let mut ticks = String::from("tick,merged_coverage_pct,overlap_pct");
        for r in 0..n {
            let _ = write!(ticks, ",robot{r}_coverage_pct");
        }
        ticks.push('\n');
        for t in 0..self.ticks {
            let _ = write!(ticks, "{t},{},{}", self.coverage[t], self.overlap[t]);
            for c in &self.robot_coverage[t] {
                let _ = write!(ticks, ",{c}");
            }
            ticks.push('\n');
        }

        let mut events = String::from("tick,robot,kind,goal_row,goal_col\n");
        for e in &self.events {
            let (gr, gc) = e
                .goal
                .map(|g| (g.row.to_string(), g.col.to_string()))
                .unwrap_or_default();
            let _ = writeln!(events, "{},{},{},{gr},{gc}", e.tick, e.robot, e.kind.as_str());
        }

        let mut trace = String::from("tick,robot,frontier_id,utility,gain,loss,valid,chosen\n");
        for r in &self.trace {
            let _ = writeln!(
                trace,
                "{},{},{},{},{},{},{},{}",
                r.tick, r.robot, r.frontier_id, r.utility, r.gain, r.loss, r.valid, r.chosen
            );
        }

        let mut summary = String::from("robot,start_x,start_y,final_x,final_y,termination_tick,failed\n");
        for r in 0..n {
            let s = self.start_poses[r];
            let f = self.final_poses[r];
            let term = self.termination_ticks[r].map(|t| t.to_string()).unwrap_or_default();
            let failed = self.failure.as_ref().is_some_and(|x| x.robot == r);
            let _ = writeln!(summary, "{r},{},{},{},{},{term},{failed}", s.x, s.y, f.x, f.y);
        }

        let config = serde_json::json!({
            "seed": self.seed,
            "trial": self.trial,
            "ticks": self.ticks,
            "budget_exceeded": self.budget_exceeded,
            "final_coverage_pct": fmt_g(self.final_coverage()),
            "scenario": serde_json::from_str::<serde_json::Value>(&self.config.to_json()).expect("json"),
        });

        let mut out = vec![
            ("config.json".to_string(), serde_json::to_string_pretty(&config).expect("json") + "\n"),
            ("ticks.csv".to_string(), ticks),
            ("events.csv".to_string(), events),
            ("robots.csv".to_string(), summary),
            ("trace.csv".to_string(), trace),
        ];
        for (r, m) in self.final_maps.iter().enumerate() {
            out.push((format!("maps/robot{r}.txt"), m.to_ascii()));
        }
        if let Some(f) = &self.failure {
            for (r, m) in f.maps.iter().enumerate() {
                out.push((format!("maps/at_fail_tick{}_robot{r}.txt", f.tick), m.to_ascii()));
            }
        }
        out
    }

    /// All bundle files concatenated; equal bytes mean equal runs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (name, body) in self.bundle() {
            out.extend_from_slice(name.as_bytes());
            out.push(0);
            out.extend_from_slice(body.as_bytes());
            out.push(0);
        }
        out
    }

    pub fn write_bundle(&self, dir: &FsPath) -> Result<()> {
        std::fs::create_dir_all(dir.join("maps")).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.bundle() {
            let path = dir.join(&name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Start poses for a run: the configured ones, or distinct free cells drawn
/// from the run seed (per vertical strip when asked).
pub fn resolve_start_poses(cfg: &ScenarioConfig) -> Result<Vec<Pose>> {
    let map = &cfg.map;
    let geom = map.geometry();
    let mut rng = stream(cfg.seed, Purpose::StartPoses, 0, 0);
    let pose_at = |c: Cell, rng: &mut SimRng| {
        let p = geom.center(c);
        Pose::new(p.x, p.y, rng.random_range(-PI..PI))
    };
    match &cfg.start {
        StartSpec::Fixed(poses) => Ok(poses.clone()),
        StartSpec::Random => {
            let free: Vec<Cell> = map.free_cells().collect();
            if free.len() < cfg.robot_count {
                return Err(Error::InvalidConfig("fewer free cells than robots".into()));
            }
            let picks = sample(&mut rng, free.len(), cfg.robot_count).into_vec();
            Ok(picks.into_iter().map(|i| pose_at(free[i], &mut rng)).collect())
        }
        StartSpec::RandomPerStrip => {
            let part = baseline3_partition(map.bounds(), cfg.robot_count);
            (0..cfg.robot_count)
                .map(|k| {
                    let free: Vec<Cell> = map
                        .free_cells()
                        .filter(|&c| part.region_of(geom.center(c)) == Some(k))
                        .collect();
                    if free.is_empty() {
                        return Err(Error::InvalidConfig(format!("strip {k} has no free cell")));
                    }
                    let i = rng.random_range(0..free.len());
                    Ok(pose_at(free[i], &mut rng))
                })
                .collect()
        }
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    trial: usize,
    params: UtilityParams,
    thresholds: Thresholds,
    partition: Partition,
    agents: Vec<RobotAgent>,
    ping_rngs: Vec<Vec<SimRng>>,
    tick: usize,
    start_poses: Vec<Pose>,
    coverage: Vec<f64>,
    robot_coverage: Vec<Vec<f64>>,
    overlap: Vec<f64>,
    events: Vec<Event>,
    trace: Vec<TraceRow>,
    failure: Option<FailureRecord>,
    failure_armed: bool,
    finished: bool,
    budget_exceeded: bool,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, trial: usize) -> Result<Self> {
        let start_poses = resolve_start_poses(&cfg)?;
        let geom = *cfg.map.geometry();
        let bounds = cfg.map.bounds();
        let hgrid_cell = if cfg.sensor_radius > 0.0 {
            cfg.sensor_radius
        } else {
            geom.resolution
        };
        let agents = start_poses
            .iter()
            .enumerate()
            .map(|(id, &pose)| RobotAgent {
                id,
                pose,
                map: LocalMap::new(geom),
                hgrid: Hgrid::new(id, bounds, hgrid_cell),
                tracks: BTreeMap::new(),
                missed: BTreeMap::new(),
                commitment: None,
                state: AgentState::Exploring,
                speed_factor: cfg.speed_factors[id],
                blacklist: BTreeSet::new(),
            })
            .collect();
        let n = cfg.robot_count;
        let ping_rngs = (0..n)
            .map(|i| (0..n).map(|j| stream(cfg.seed, Purpose::Ping, i as u64, j as u64)).collect())
            .collect();
        Ok(Simulation {
            params: UtilityParams::for_radius(cfg.sensor_radius),
            thresholds: Thresholds {
                soft: cfg.soft_threshold,
                hard: cfg.hard_threshold,
                fill_k: cfg.hgrid_fill_k,
            },
            partition: baseline3_partition(bounds, n),
            agents,
            ping_rngs,
            tick: 0,
            start_poses,
            coverage: Vec::new(),
            robot_coverage: Vec::new(),
            overlap: Vec::new(),
            events: Vec::new(),
            trace: Vec::new(),
            failure: None,
            failure_armed: cfg.failure.is_some(),
            finished: false,
            budget_exceeded: false,
            trial,
            cfg,
        })
    }

    pub fn agents(&self) -> &[RobotAgent] {
        &self.agents
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    /// Advances one tick; returns false once the run is over.
    pub fn step(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let t = self.tick;
        self.check_failure(t);
        self.sense()?;
        if t.is_multiple_of(self.cfg.decision_interval) {
            self.ping_round(t);
        }
        match self.cfg.strategy {
            Strategy::Baseline2 => self.decide_assigned(t)?,
            _ => {
                for i in 0..self.agents.len() {
                    self.decide_one(i, t);
                }
            }
        }
        self.move_agents();
        let merged = self.record_metrics()?;
        if matches!(self.cfg.strategy, Strategy::Baseline1 | Strategy::Baseline2)
            && merged >= 100.0 * self.cfg.hard_threshold
        {
            for i in 0..self.agents.len() {
                if self.agents[i].is_exploring() {
                    self.terminate(i, t);
                }
            }
        }
        self.tick += 1;
        if self.agents.iter().all(|a| !a.is_exploring()) {
            self.finished = true;
        } else if self.tick >= self.cfg.max_ticks {
            self.finished = true;
            self.budget_exceeded = true;
        }
        Ok(!self.finished)
    }

    fn check_failure(&mut self, t: usize) {
        let Some(spec) = self.cfg.failure else { return };
        if !self.failure_armed {
            return;
        }
        let Some(&last) = self.coverage.last() else { return };
        let (lo, hi) = (100.0 * spec.window.0, 100.0 * spec.window.1);
        if last < lo || last > hi {
            return;
        }
        self.failure_armed = false;
        self.inject_failure(spec.robot, t);
    }

    /// Fails an exploring robot: it stops and its map leaves the merged
    /// evaluation. No effect on robots that already stopped.
    pub fn inject_failure(&mut self, robot: usize, t: usize) {
        if !self.agents[robot].is_exploring() {
            return;
        }
        self.failure = Some(FailureRecord {
            robot,
            tick: t,
            maps: self.agents.iter().map(|a| a.map.clone()).collect(),
        });
        let a = &mut self.agents[robot];
        a.state = AgentState::Failed;
        a.commitment = None;
        self.events.push(Event {
            tick: t,
            robot,
            kind: EventKind::Fail,
            goal: None,
        });
    }

    fn sense(&mut self) -> Result<()> {
        let map = &self.cfg.map;
        for a in self.agents.iter_mut().filter(|a| a.is_exploring()) {
            let scan = lidar_scan(a.pose, map, self.cfg.sensor_radius, self.cfg.lidar_beams)?;
            integrate_scan(&mut a.map, a.pose, &scan)?;
        }
        Ok(())
    }

    fn ping_round(&mut self, t: usize) {
        let poses: Vec<Pose> = self.agents.iter().map(|a| a.pose).collect();
        let states: Vec<AgentState> = self.agents.iter().map(|a| a.state).collect();
        let noise = self.cfg.noise;
        let r = MeasurementNoise::from(noise);
        let dt_tick = self.cfg.tick_dt;
        for i in 0..self.agents.len() {
            if states[i] != AgentState::Exploring {
                continue;
            }
            for j in 0..self.agents.len() {
                if j == i {
                    continue;
                }
                let agent = &mut self.agents[i];
                if states[j] == AgentState::Failed {
                    let missed = agent.missed.entry(j).or_insert(0);
                    *missed += 1;
                    if *missed >= MISSED_PINGS_TO_FAIL && self.cfg.tau_gating {
                        if let Some(track) = agent.tracks.get_mut(&j) {
                            track.deactivate();
                        }
                        agent.hgrid.set_active(j, false);
                    }
                    continue;
                }
                agent.missed.insert(j, 0);
                let set = ping_measurement(
                    PingRequest {
                        observer: i,
                        target: j,
                        tick: t,
                    },
                    poses[i],
                    poses[j],
                    noise,
                    self.cfg.multipath_prob,
                    PING_WINDOW,
                    &mut self.ping_rngs[i][j],
                );
                let meas = fuse_samples(&set, RANGE_SUBSAMPLE_STRIDE);
                let fresh = || RelPosTrack::initialize(j, meas, poses[i], noise.range_std, t);
                let track = match agent.tracks.get_mut(&j) {
                    Some(track) if track.is_active() => {
                        let dt = (t - track.last_update_tick) as f64 * dt_tick;
                        track.ekf_predict(dt, DEFAULT_PROCESS_NOISE);
                        if track.ekf_update(meas, poses[i], r, t).is_err() {
                            *track = fresh();
                        }
                        track
                    }
                    Some(_) => continue,
                    None => agent.tracks.entry(j).or_insert_with(fresh),
                };
                let (pos, trace) = (track.position(), track.trace_pos);
                agent.hgrid.insert(j, pos, trace, t);
            }
            let agent = &mut self.agents[i];
            agent.hgrid.insert(i, poses[i].position(), 0.0, t);
        }
    }

    /// Whether robot `i` must choose a goal now, and whether that choice is
    /// the half-way re-evaluation of its current commitment.
    fn needs_decision(agent: &mut RobotAgent, map: &LocalMap) -> (bool, bool) {
        let Some(c) = &agent.commitment else {
            return (true, false);
        };
        if c.route.is_done() {
            if map.is_frontier_cell(c.goal) {
                agent.blacklist.insert(c.goal);
            }
            return (true, false);
        }
        let invalidated = !c.frontier_cells.iter().any(|&f| map.is_frontier_cell(f));
        let blocked = c
            .route
            .remaining()
            .iter()
            .any(|&w| w != c.goal && map.get(w) != CellState::Free)
            || map.get(c.goal) == CellState::Occupied;
        if invalidated || blocked {
            return (true, false);
        }
        let progress = c.route.progress();
        if commitment_check(progress, false, c.reevaluated) {
            return (true, true);
        }
        (false, false)
    }

    fn terminate(&mut self, i: usize, t: usize) {
        let a = &mut self.agents[i];
        a.state = AgentState::Terminated;
        a.commitment = None;
        self.events.push(Event {
            tick: t,
            robot: i,
            kind: EventKind::Terminate,
            goal: None,
        });
    }

    fn apply(&mut self, i: usize, t: usize, decision: Decision, reeval: bool) {
        match decision {
            Decision::Terminate => self.terminate(i, t),
            Decision::Idle => self.agents[i].commitment = None,
            Decision::Goal { frontier, goal, path } => {
                let a = &mut self.agents[i];
                if reeval {
                    if let Some(c) = a.commitment.as_mut() {
                        if c.goal == goal {
                            c.reevaluated = true;
                            return;
                        }
                    }
                }
                let geom = *a.map.geometry();
                a.commitment = Some(Commitment {
                    route: Route::new(a.pose.position(), path, &geom),
                    goal,
                    frontier_cells: frontier.cells,
                    reevaluated: false,
                });
                self.events.push(Event {
                    tick: t,
                    robot: i,
                    kind: EventKind::GoalChange,
                    goal: Some(goal),
                });
            }
        }
    }

    fn decide_one(&mut self, i: usize, t: usize) {
        if !self.agents[i].is_exploring() {
            return;
        }
        let agent = &mut self.agents[i];
        let own = agent.map.clone();
        let (needed, reeval) = Self::needs_decision(agent, &own);
        if !needed {
            return;
        }
        let agent = &self.agents[i];
        let (decision, rows) = match self.cfg.strategy {
            Strategy::WiserX => wiserx_decide(agent, &self.params, self.thresholds, t),
            Strategy::Baseline1 => greedy_decide(agent, &self.params, None, t),
            Strategy::Baseline3 => greedy_decide(agent, &self.params, Some((&self.partition, i)), t),
            Strategy::Baseline2 => unreachable!("assigned centrally"),
        };
        self.trace.extend(rows);
        self.apply(i, t, decision, reeval);
    }

    /// Central assigner over the merged map of all robots.
    fn decide_assigned(&mut self, t: usize) -> Result<()> {
        let geom = *self.cfg.map.geometry();
        let maps: Vec<&LocalMap> = self
            .agents
            .iter()
            .filter(|a| a.state != AgentState::Failed)
            .map(|a| &a.map)
            .collect();
        let merged = merge_maps(&maps, &geom)?;
        let mut needing = Vec::new();
        for i in 0..self.agents.len() {
            if !self.agents[i].is_exploring() {
                continue;
            }
            let (needed, reeval) = Self::needs_decision(&mut self.agents[i], &merged);
            if needed {
                needing.push((i, reeval));
            }
        }
        if needing.is_empty() {
            return Ok(());
        }
        let all = extract_frontiers(&merged, self.params.r);
        if all.is_empty() {
            for (i, _) in needing {
                self.terminate(i, t);
            }
            return Ok(());
        }
        // Frontiers held by robots keeping their goal are not up for grabs,
        // but a robot re-evaluating competes for its own.
        let held: Vec<&Commitment> = self
            .agents
            .iter()
            .filter(|a| a.is_exploring() && !needing.iter().any(|(i, _)| *i == a.id))
            .filter_map(|a| a.commitment.as_ref())
            .collect();
        let open: Vec<Frontier> = all
            .into_iter()
            .filter(|f| !held.iter().any(|c| f.cells.contains(&c.goal)))
            .collect();
        let mut candidates = Vec::new();
        let mut reaches = BTreeMap::new();
        for &(i, _) in &needing {
            let a = &self.agents[i];
            let reach = reachable_from(&merged, a.cell());
            let scores = usable(baseline1_scores(&open, &merged, a.pose, &self.params), &merged, &reach, &a.blacklist);
            self.trace.extend(trace_rows(t, i, &scores, None));
            candidates.extend(scores.iter().map(|s| Candidate {
                robot: i,
                frontier: s.frontier_id,
                value: s.utility,
            }));
            reaches.insert(i, scores);
        }
        let assignment = greedy_assign(&candidates);
        for (i, reeval) in needing {
            let decision = match assignment.get(&i) {
                Some(&fid) => {
                    let score = reaches[&i].iter().find(|s| s.frontier_id == fid).unwrap();
                    for row in self.trace.iter_mut().rev().take_while(|r| r.tick == t) {
                        if row.robot == i && row.frontier_id == fid {
                            row.chosen = true;
                        }
                    }
                    goal_for(&self.agents[i], &merged, &open, score)
                }
                None => Decision::Idle,
            };
            self.apply(i, t, decision, reeval);
        }
        Ok(())
    }

    fn move_agents(&mut self) {
        let dt = self.cfg.tick_dt;
        let speed = self.cfg.nominal_speed;
        for a in self.agents.iter_mut().filter(|a| a.is_exploring()) {
            if let Some(c) = a.commitment.as_mut() {
                let (pose, _) = step_motion(a.pose, &mut c.route, speed * a.speed_factor, dt);
                a.pose = pose;
            }
        }
    }

    fn record_metrics(&mut self) -> Result<f64> {
        let truth = &self.cfg.map;
        let alive: Vec<&LocalMap> = self
            .agents
            .iter()
            .filter(|a| a.state != AgentState::Failed)
            .map(|a| &a.map)
            .collect();
        let merged = merge_maps(&alive, truth.geometry())?;
        let cov = coverage_percent(&merged, truth)?;
        self.overlap.push(pairwise_overlap(&alive, truth)?);
        self.coverage.push(cov);
        self.robot_coverage.push(
            self.agents
                .iter()
                .map(|a| coverage_percent(&a.map, truth))
                .collect::<Result<_>>()?,
        );
        Ok(cov)
    }

    pub fn finish(self) -> RunResult {
        let mut termination_ticks = vec![None; self.agents.len()];
        for e in &self.events {
            if e.kind == EventKind::Terminate {
                termination_ticks[e.robot] = Some(e.tick);
            }
        }
        RunResult {
            seed: self.cfg.seed,
            trial: self.trial,
            ticks: self.tick,
            coverage: self.coverage,
            robot_coverage: self.robot_coverage,
            overlap: self.overlap,
            events: self.events,
            start_poses: self.start_poses,
            final_poses: self.agents.iter().map(|a| a.pose).collect(),
            final_maps: self.agents.iter().map(|a| a.map.clone()).collect(),
            termination_ticks,
            failure: self.failure,
            budget_exceeded: self.budget_exceeded,
            trace: self.trace,
            config: self.cfg,
        }
    }
}

/// Runs one scenario to completion (or the tick budget).
pub fn run(cfg: ScenarioConfig) -> Result<RunResult> {
    run_trial(cfg, 0)
}

pub fn run_trial(cfg: ScenarioConfig, trial: usize) -> Result<RunResult> {
    let mut sim = Simulation::new(cfg, trial)?;
    while sim.step()? {}
    Ok(sim.finish())
}

/// Per-trial configurations: trial `k` runs with seed `base_seed + k`.
pub fn trial_configs(cfg: &ScenarioConfig, trials: usize, base_seed: u64) -> Vec<ScenarioConfig> {
    (0..trials)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = base_seed.wrapping_add(k as u64);
            c
        })
        .collect()
}

fn tag(k: usize, r: Result<RunResult>) -> Result<RunResult> {
    r.map_err(|e| Error::Trial {
        index: k,
        source: Box::new(e),
    })
}

/// Runs prepared configurations in parallel; results keep input order.
pub fn run_all(configs: Vec<ScenarioConfig>) -> Result<Vec<RunResult>> {
    configs
        .into_par_iter()
        .enumerate()
        .map(|(k, c)| tag(k, run_trial(c, k)))
        .collect()
}

pub fn run_all_serial(configs: Vec<ScenarioConfig>) -> Result<Vec<RunResult>> {
    configs
        .into_iter()
        .enumerate()
        .map(|(k, c)| tag(k, run_trial(c, k)))
        .collect()
}

pub fn batch(cfg: &ScenarioConfig, trials: usize, base_seed: u64) -> Result<Vec<RunResult>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    run_all(trial_configs(cfg, trials, base_seed))
}

pub fn batch_serial(cfg: &ScenarioConfig, trials: usize, base_seed: u64) -> Result<Vec<RunResult>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    run_all_serial(trial_configs(cfg, trials, base_seed))
}
