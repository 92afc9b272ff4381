//! Simulated sensors: a 360° LiDAR cast against the ground truth and the
//! noisy range/bearing channel between robots.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, Pose};
use crate::world::{GroundTruthMap, NoiseLevel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beam {
    /// Sensor-frame angle, radians.
    pub angle: f64,
    /// Distance to the first occupied cell, or `None` at max range.
    pub hit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    pub origin: Pose,
    pub max_range: f64,
    /// Resolution of the grid the scan was cast in.
    pub resolution: f64,
    pub beams: Vec<Beam>,
}

impl LidarScan {
    /// Distance reported by a beam, with max range for misses.
    pub fn range(&self, beam: &Beam) -> f64 {
        beam.hit.unwrap_or(self.max_range)
    }
}

/// Casts `beams` evenly spaced rays from `pose` and reports the distance to
/// the first occupied cell along each, capped at `max_range`.
pub fn lidar_scan(
    pose: Pose,
    map: &GroundTruthMap,
    max_range: f64,
    beams: usize,
) -> Result<LidarScan> {
    let geom = map.geometry();
    match geom.cell_of(pose.position()) {
        Some(c) if map.is_free(c) => {}
        _ => return Err(Error::PoseInOccupied { x: pose.x, y: pose.y }),
    }
    let beams = (0..beams)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / beams as f64;
            let hit = geom
                .ray(pose.position(), pose.heading + angle, max_range)
                .take_while(|&(_, t)| t <= max_range)
                .find(|&(cell, _)| map.is_occupied(cell))
                .map(|(_, t)| t);
            Beam { angle, hit }
        })
        .collect();
    Ok(LidarScan {
        origin: pose,
        max_range,
        resolution: geom.resolution,
        beams,
    })
}

/// One estimation event's worth of raw range/bearing samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PingSampleSet {
    pub observer: usize,
    pub target: usize,
    pub tick: usize,
    /// Observer-frame bearings in `(-π, π]`.
    pub bearings: Vec<f64>,
    pub ranges: Vec<f64>,
    /// Ground truth; kept for tests, never consumed by strategies.
    pub true_range: f64,
    pub true_bearing: f64,
}

pub struct PingRequest {
    pub observer: usize,
    pub target: usize,
    pub tick: usize,
}

/// Samples `window` noisy range/bearing pairs between two poses.
///
/// Per sample the draw order is fixed: outlier coin, bearing noise, range
/// noise, outlier bearing. All four are drawn even when unused so the stream
/// position depends only on `window`.
pub fn ping_measurement<R: Rng + ?Sized>(
    req: PingRequest,
    observer: Pose,
    target: Pose,
    noise: NoiseLevel,
    multipath_prob: f64,
    window: usize,
    rng: &mut R,
) -> PingSampleSet {
    let dx = target.x - observer.x;
    let dy = target.y - observer.y;
    let true_range = dx.hypot(dy);
    let true_bearing = wrap_angle(dy.atan2(dx) - observer.heading);

    let mut bearings = Vec::with_capacity(window);
    let mut ranges = Vec::with_capacity(window);
    for _ in 0..window.max(1) {
        let coin: f64 = rng.random();
        let bearing_noise: f64 = rng.sample(StandardNormal);
        let range_noise: f64 = rng.sample(StandardNormal);
        let outlier_u: f64 = rng.random();
        let bearing = if coin < multipath_prob {
            PI - 2.0 * PI * outlier_u
        } else {
            wrap_angle(true_bearing + noise.bearing_std * bearing_noise)
        };
        bearings.push(bearing);
        ranges.push((true_range + noise.range_std * range_noise).max(0.0));
    }
    PingSampleSet {
        observer: req.observer,
        target: req.target,
        tick: req.tick,
        bearings,
        ranges,
        true_range,
        true_bearing,
    }
}
