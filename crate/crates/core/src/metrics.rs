//! Ground-truth-frame evaluation: map merging, coverage, overlap, recovery,
//! and the summary CSV files.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry};
use crate::mapping::{merge_state, CellState, LocalMap};
use crate::world::GroundTruthMap;

/// Projects a local map into the ground frame described by `geom`, using its
/// integer frame offset. Cells falling outside `geom` are dropped.
pub fn register(map: &LocalMap, geom: &GridGeometry) -> Result<LocalMap> {
    let src = map.geometry();
    if (src.resolution - geom.resolution).abs() > 1e-12 {
        return Err(Error::ShapeMismatch {
            expected: (geom.height, geom.width),
            found: (src.height, src.width),
        });
    }
    if map.frame == (0, 0) && src.width == geom.width && src.height == geom.height {
        return Ok(map.clone());
    }
    let mut out = LocalMap::new(*geom);
    for i in 0..src.len() {
        let state = map.get_index(i);
        if state == CellState::Unknown {
            continue;
        }
        let c = src.cell_at(i);
        let row = c.row as i64 + map.frame.0;
        let col = c.col as i64 + map.frame.1;
        if row < 0 || col < 0 {
            continue;
        }
        let target = Cell::new(row as usize, col as usize);
        if geom.contains(target) {
            out.set(target, state);
        }
    }
    Ok(out)
}

/// Cellwise merge in the ground frame: Occupied over Free over Unknown.
pub fn merge_maps(maps: &[&LocalMap], geom: &GridGeometry) -> Result<LocalMap> {
    let mut out = LocalMap::new(*geom);
    let mut merged = vec![CellState::Unknown; geom.len()];
    for map in maps {
        let reg = register(map, geom)?;
        for (slot, &s) in merged.iter_mut().zip(reg.states()) {
            *slot = merge_state(*slot, s);
        }
    }
    for (i, s) in merged.into_iter().enumerate() {
        if s != CellState::Unknown {
            out.set(geom.cell_at(i), s);
        }
    }
    Ok(out)
}

fn check_shape(map: &LocalMap, truth: &GroundTruthMap) -> Result<()> {
    let (a, b) = (map.geometry(), truth.geometry());
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch {
            expected: (b.height, b.width),
            found: (a.height, a.width),
        });
    }
    Ok(())
}

/// `100 · |known ∩ truth-free| / |truth-free|` for a ground-frame map.
pub fn coverage_percent(map: &LocalMap, truth: &GroundTruthMap) -> Result<f64> {
    check_shape(map, truth)?;
    let known = (0..truth.geometry().len())
        .filter(|&i| truth.is_free_index(i) && map.get_index(i) != CellState::Unknown)
        .count();
    Ok(100.0 * known as f64 / truth.free_count() as f64)
}

/// `100 · |free cells known by ≥ 2 maps| / |free cells known by ≥ 1 map|`;
/// zero when nothing is known.
pub fn pairwise_overlap(maps: &[&LocalMap], truth: &GroundTruthMap) -> Result<f64> {
    for m in maps {
        check_shape(m, truth)?;
    }
    let mut once = 0usize;
    let mut twice = 0usize;
    for i in 0..truth.geometry().len() {
        if !truth.is_free_index(i) {
            continue;
        }
        let n = maps
            .iter()
            .filter(|m| m.get_index(i) != CellState::Unknown)
            .take(2)
            .count();
        if n >= 1 {
            once += 1;
        }
        if n >= 2 {
            twice += 1;
        }
    }
    Ok(if once == 0 {
        0.0
    } else {
        100.0 * twice as f64 / once as f64
    })
}

/// Share of the free space that only the failed robot knew at the fail tick
/// and that the survivors know by the end, in percent of all free cells.
pub fn recovered_percent(
    failed_at_fail: &LocalMap,
    survivors_at_fail: &[&LocalMap],
    survivors_final: &[&LocalMap],
    truth: &GroundTruthMap,
) -> Result<f64> {
    check_shape(failed_at_fail, truth)?;
    let known = |maps: &[&LocalMap], i: usize| {
        maps.iter().any(|m| m.get_index(i) != CellState::Unknown)
    };
    let mut recovered = 0usize;
    for i in 0..truth.geometry().len() {
        if truth.is_free_index(i)
            && failed_at_fail.get_index(i) != CellState::Unknown
            && !known(survivors_at_fail, i)
            && known(survivors_final, i)
        {
            recovered += 1;
        }
    }
    Ok(100.0 * recovered as f64 / truth.free_count() as f64)
}

/// Share of the free space known only to `failed` at the fail tick.
pub fn exclusive_percent(failed: &LocalMap, others: &[&LocalMap], truth: &GroundTruthMap) -> f64 {
    let n = (0..truth.geometry().len())
        .filter(|&i| {
            truth.is_free_index(i)
                && failed.get_index(i) != CellState::Unknown
                && others.iter().all(|m| m.get_index(i) == CellState::Unknown)
        })
        .count();
    100.0 * n as f64 / truth.free_count() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    /// Strategy label; ablations append a suffix.
    pub strategy: String,
    pub trial: usize,
    pub seed: u64,
    pub noise_bearing_deg: f64,
    pub noise_range_cm: f64,
    pub coverage_pct: f64,
    pub term_tick_max: usize,
    pub overlap_pct: f64,
    pub recovered_pct: Option<f64>,
    pub term_ticks: Vec<Option<usize>>,
    pub budget_exceeded: bool,
}

/// Summary of one run: final merged coverage and overlap over the robots
/// that did not fail, and the last termination tick.
pub fn summarize_run(result: &RunResult, label: &str) -> Result<TrialSummary> {
    let cfg = &result.config;
    let truth = &cfg.map;
    let geom = truth.geometry();
    let alive: Vec<&LocalMap> = result
        .final_maps
        .iter()
        .enumerate()
        .filter(|(i, _)| result.failure.as_ref().is_none_or(|f| f.robot != *i))
        .map(|(_, m)| m)
        .collect();
    let merged = merge_maps(&alive, geom)?;
    let registered: Vec<LocalMap> = alive
        .iter()
        .map(|m| register(m, geom))
        .collect::<Result<_>>()?;
    let reg_refs: Vec<&LocalMap> = registered.iter().collect();
    let recovered_pct = match &result.failure {
        Some(f) => {
            let failed = register(&f.maps[f.robot], geom)?;
            let at_fail: Vec<LocalMap> = f
                .maps
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != f.robot)
                .map(|(_, m)| register(m, geom))
                .collect::<Result<_>>()?;
            let at_fail_refs: Vec<&LocalMap> = at_fail.iter().collect();
            Some(recovered_percent(&failed, &at_fail_refs, &reg_refs, truth)?)
        }
        None => None,
    };
    Ok(TrialSummary {
        strategy: label.to_string(),
        trial: result.trial,
        seed: result.seed,
        noise_bearing_deg: cfg.noise.bearing_deg(),
        noise_range_cm: cfg.noise.range_std * 100.0,
        coverage_pct: coverage_percent(&merged, truth)?,
        term_tick_max: result.completion_tick(),
        overlap_pct: pairwise_overlap(&reg_refs, truth)?,
        recovered_pct,
        term_ticks: result.termination_ticks.clone(),
        budget_exceeded: result.budget_exceeded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 when `n == 1`.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn single(&self) -> bool {
        self.n == 1
    }
}

pub fn mean_std(values: &[f64]) -> Result<Stat> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(Stat { mean, std, n })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub strategy: String,
    pub noise_bearing_deg: f64,
    pub noise_range_cm: f64,
    pub coverage: Stat,
    pub term_tick: Stat,
    pub overlap: Stat,
    pub recovered: Option<Stat>,
}

/// Groups summaries by `(strategy, noise)` in first-seen order.
pub fn aggregate(summaries: &[TrialSummary]) -> Result<Vec<Aggregate>> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut keys: Vec<(String, f64, f64)> = Vec::new();
    for s in summaries {
        let k = (s.strategy.clone(), s.noise_bearing_deg, s.noise_range_cm);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(strategy, b, r)| {
            let group: Vec<&TrialSummary> = summaries
                .iter()
                .filter(|s| s.strategy == strategy && s.noise_bearing_deg == b && s.noise_range_cm == r)
                .collect();
            let col = |f: &dyn Fn(&TrialSummary) -> f64| -> Vec<f64> { group.iter().map(|s| f(s)).collect() };
            let rec: Vec<f64> = group.iter().filter_map(|s| s.recovered_pct).collect();
            Ok(Aggregate {
                strategy,
                noise_bearing_deg: b,
                noise_range_cm: r,
                coverage: mean_std(&col(&|s| s.coverage_pct))?,
                term_tick: mean_std(&col(&|s| s.term_tick_max as f64))?,
                overlap: mean_std(&col(&|s| s.overlap_pct))?,
                recovered: if rec.is_empty() { None } else { Some(mean_std(&rec)?) },
            })
        })
        .collect()
}

/// Six significant digits, trailing zeros trimmed, exponent form outside
/// `[1e-5, 1e6)`, like C's `%g`.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const SUMMARY_HEADER: &str = "strategy,trial,seed,noise_bearing_deg,noise_range_cm,coverage_pct,term_tick_max,overlap_pct,recovered_pct";

pub const AGGREGATE_HEADER: &str = "strategy,noise_bearing_deg,noise_range_cm,n,coverage_mean,coverage_std,term_tick_mean,term_tick_std,overlap_mean,overlap_std,recovered_mean,recovered_std";

pub const SERIES_HEADER: &str = "strategy,trial,tick,coverage_pct,overlap_pct";

pub fn summaries_csv(summaries: &[TrialSummary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for t in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            t.strategy,
            t.trial,
            t.seed,
            fmt_g(t.noise_bearing_deg),
            fmt_g(t.noise_range_cm),
            fmt_g(t.coverage_pct),
            t.term_tick_max,
            fmt_g(t.overlap_pct),
            t.recovered_pct.map(fmt_g).unwrap_or_default()
        );
    }
    s
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for a in aggs {
        let (rm, rs) = a
            .recovered
            .map(|r| (fmt_g(r.mean), fmt_g(r.std)))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            a.strategy,
            fmt_g(a.noise_bearing_deg),
            fmt_g(a.noise_range_cm),
            a.coverage.n,
            fmt_g(a.coverage.mean),
            fmt_g(a.coverage.std),
            fmt_g(a.term_tick.mean),
            fmt_g(a.term_tick.std),
            fmt_g(a.overlap.mean),
            fmt_g(a.overlap.std),
            rm,
            rs
        );
    }
    s
}

/// Per-tick merged coverage and overlap of each run.
pub fn series_csv(rows: &[(&str, &RunResult)]) -> String {
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for (label, r) in rows {
        for (tick, (c, o)) in r.coverage.iter().zip(&r.overlap).enumerate() {
            let _ = writeln!(s, "{label},{},{tick},{},{}", r.trial, fmt_g(*c), fmt_g(*o));
        }
    }
    s
}

pub fn write_csv(summaries: &[TrialSummary], path: &Path) -> Result<()> {
    std::fs::write(path, summaries_csv(summaries)).map_err(|e| Error::io(path, e))
}

/// Parses a summary CSV written by [`summaries_csv`]; per-robot termination
/// ticks are not part of the file and come back empty.
pub fn parse_summaries(text: &str) -> Result<Vec<TrialSummary>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SUMMARY_HEADER => {}
        _ => return Err(Error::InvalidConfig("unexpected summary header".into())),
    }
    let bad = |what: &str| Error::InvalidConfig(format!("bad summary field {what}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::InvalidConfig(format!("expected 9 fields: {line}")));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(f[i]));
            Ok(TrialSummary {
                strategy: f[0].to_string(),
                trial: f[1].parse().map_err(|_| bad(f[1]))?,
                seed: f[2].parse().map_err(|_| bad(f[2]))?,
                noise_bearing_deg: num(3)?,
                noise_range_cm: num(4)?,
                coverage_pct: num(5)?,
                term_tick_max: f[6].parse().map_err(|_| bad(f[6]))?,
                overlap_pct: num(7)?,
                recovered_pct: if f[8].is_empty() { None } else { Some(num(8)?) },
                term_ticks: Vec::new(),
                budget_exceeded: false,
            })
        })
        .collect()
}
