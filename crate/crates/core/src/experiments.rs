//! Canned desk-scale experiments: office map, three robots, paired seeds.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::engine::{run_all, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, aggregate_csv, series_csv, summarize_run, write_csv, TrialSummary,
};
use crate::rng::{stream, Purpose};
use crate::world::{
    defaults, office_map, FailureSpec, MapSource, NoiseLevel, ScenarioConfig, StartSpec, Strategy,
};

pub const DEFAULT_TRIALS: usize = 20;
pub const ROBOTS: usize = 3;
pub const SLOW_FACTOR: f64 = 0.5;
pub const FAILURE_WINDOW: (f64, f64) = (0.5, 0.7);

/// `(bearing degrees, range meters)` for the noise sweep.
pub const NOISE_LEVELS: [(f64, f64); 4] = [(2.0, 0.01), (5.0, 0.10), (10.0, 0.20), (30.0, 1.00)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Overlap,
    Termination,
    Slow,
    Failure,
    Noise,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Overlap,
        Experiment::Termination,
        Experiment::Slow,
        Experiment::Failure,
        Experiment::Noise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Overlap => "overlap",
            Experiment::Termination => "termination",
            Experiment::Slow => "slow",
            Experiment::Failure => "failure",
            Experiment::Noise => "noise",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

/// The shared harness configuration for one strategy.
pub fn base_config(strategy: Strategy) -> ScenarioConfig {
    ScenarioConfig {
        name: strategy.as_str().to_string(),
        map_source: MapSource::Office,
        map: Arc::new(office_map()),
        robot_count: ROBOTS,
        start: StartSpec::Random,
        sensor_radius: defaults::SENSOR_RADIUS,
        lidar_beams: defaults::LIDAR_BEAMS,
        noise: NoiseLevel::from_degrees(defaults::BEARING_STD_DEG, defaults::RANGE_STD_M),
        multipath_prob: defaults::MULTIPATH_PROB,
        speed_factors: vec![1.0; ROBOTS],
        nominal_speed: defaults::NOMINAL_SPEED,
        failure: None,
        strategy,
        soft_threshold: defaults::SOFT_THRESHOLD,
        hard_threshold: defaults::HARD_THRESHOLD,
        hgrid_fill_k: defaults::HGRID_FILL_K,
        seed: defaults::SEED,
        max_ticks: defaults::MAX_TICKS,
        tick_dt: defaults::TICK_DT,
        decision_interval: defaults::DECISION_INTERVAL,
        tau_gating: true,
    }
}

/// A labelled arm of an experiment: one configuration per trial.
#[derive(Clone, Debug)]
pub struct Arm {
    pub label: String,
    pub configs: Vec<ScenarioConfig>,
}

fn arm(label: &str, trials: usize, base_seed: u64, edit: impl Fn(&mut ScenarioConfig, u64)) -> Arm {
    let configs = (0..trials)
        .map(|k| {
            let seed = base_seed.wrapping_add(k as u64);
            let mut c = base_config(Strategy::WiserX);
            c.seed = seed;
            edit(&mut c, seed);
            c.name = label.to_string();
            c
        })
        .collect();
    Arm {
        label: label.to_string(),
        configs,
    }
}

/// Robot that fails in trial `seed`, drawn from its own stream.
pub fn failure_robot(seed: u64, robots: usize) -> usize {
    stream(seed, Purpose::FailurePick, 0, 0).random_range(0..robots)
}

/// The arms of an experiment. Trial `k` of every arm uses seed
/// `base_seed + k`, so arms are paired on start poses.
pub fn arms(exp: Experiment, trials: usize, base_seed: u64) -> Vec<Arm> {
    let with = |s: Strategy| move |c: &mut ScenarioConfig, _: u64| c.strategy = s;
    match exp {
        Experiment::Overlap | Experiment::Termination => vec![
            arm("wiserx", trials, base_seed, with(Strategy::WiserX)),
            arm("baseline1", trials, base_seed, with(Strategy::Baseline1)),
            arm("baseline2", trials, base_seed, with(Strategy::Baseline2)),
        ],
        Experiment::Slow => {
            let slow = |s: Strategy| {
                move |c: &mut ScenarioConfig, _: u64| {
                    c.strategy = s;
                    c.start = StartSpec::RandomPerStrip;
                    c.speed_factors[0] = SLOW_FACTOR;
                }
            };
            vec![
                arm("wiserx", trials, base_seed, slow(Strategy::WiserX)),
                arm("baseline3", trials, base_seed, slow(Strategy::Baseline3)),
            ]
        }
        Experiment::Failure => {
            let fail = |gating: bool| {
                move |c: &mut ScenarioConfig, seed: u64| {
                    c.tau_gating = gating;
                    c.failure = Some(FailureSpec {
                        robot: failure_robot(seed, c.robot_count),
                        window: FAILURE_WINDOW,
                    });
                }
            };
            vec![
                arm("wiserx", trials, base_seed, fail(true)),
                arm("wiserx-no-tau", trials, base_seed, fail(false)),
            ]
        }
        Experiment::Noise => NOISE_LEVELS
            .iter()
            .map(|&(deg, m)| {
                let label = format!("wiserx-noise-{deg}deg-{}cm", (m * 100.0).round());
                arm(&label, trials, base_seed, move |c, _| {
                    c.noise = NoiseLevel::from_degrees(deg, m);
                    c.multipath_prob = 0.0;
                })
            })
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    /// `(arm label, run)` in arm then trial order.
    pub runs: Vec<(String, RunResult)>,
    pub summaries: Vec<TrialSummary>,
}

impl ExperimentOutput {
    /// Summaries of one arm, in trial order.
    pub fn arm(&self, label: &str) -> Vec<&TrialSummary> {
        self.summaries.iter().filter(|s| s.strategy == label).collect()
    }

    pub fn runs_of(&self, label: &str) -> Vec<&RunResult> {
        self.runs.iter().filter(|(l, _)| l == label).map(|(_, r)| r).collect()
    }

    /// Writes `summary.csv`, `aggregate.csv` and `series.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&self.summaries, &dir.join("summary.csv"))?;
        let series: Vec<(&str, &RunResult)> = self.runs.iter().map(|(l, r)| (l.as_str(), r)).collect();
        for (name, body) in [
            ("aggregate.csv", aggregate_csv(&aggregate(&self.summaries)?)),
            ("series.csv", series_csv(&series)),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn run_experiment(exp: Experiment, trials: usize, base_seed: u64) -> Result<ExperimentOutput> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let arms = arms(exp, trials, base_seed);
    let labels: Vec<String> = arms
        .iter()
        .flat_map(|a| std::iter::repeat_n(a.label.clone(), a.configs.len()))
        .collect();
    let configs: Vec<ScenarioConfig> = arms.into_iter().flat_map(|a| a.configs).collect();
    let results = run_all(configs)?;
    let mut summaries = Vec::with_capacity(results.len());
    let mut runs = Vec::with_capacity(results.len());
    for (label, mut r) in labels.into_iter().zip(results) {
        r.trial %= trials;
        summaries.push(summarize_run(&r, &label)?);
        runs.push((label, r));
    }
    Ok(ExperimentOutput {
        experiment: exp,
        runs,
        summaries,
    })
}
