//! Relative-position tracking from raw ping samples.
//!
//! Each estimation event turns a window of range/bearing samples into one
//! fused measurement (the most stable bearing triple and a sub-sampled mean
//! range), which then drives a constant-velocity EKF in the observer's map
//! frame.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, Point, Pose};
use crate::sensing::PingSampleSet;
use crate::world::NoiseLevel;

/// Process-noise intensity of the white-acceleration model, m²/s³.
pub const DEFAULT_PROCESS_NOISE: f64 = 0.05;
/// Decision steps without a ping before a neighbor is declared failed.
pub const MISSED_PINGS_TO_FAIL: u32 = 3;
/// Stride of the uniform range sub-sample.
pub const RANGE_SUBSAMPLE_STRIDE: usize = 2;

const STABLE_WINDOW: usize = 3;

/// Circular mean of the length-3 window (or shorter, for short inputs) with
/// the least circular variance; ties go to the earliest window.
pub fn select_stable_bearing(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "select_stable_bearing needs a sample");
    let len = STABLE_WINDOW.min(samples.len());
    let mut best: Option<(f64, f64)> = None;
    for window in samples.windows(len) {
        let (s, c) = window
            .iter()
            .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
        let resultant = s.hypot(c) / len as f64;
        let variance = 1.0 - resultant;
        if best.is_none_or(|(v, _)| variance < v) {
            best = Some((variance, wrap_angle(s.atan2(c))));
        }
    }
    best.map(|(_, mean)| mean).unwrap()
}

/// Mean of `samples[0], samples[stride], samples[2·stride], …`.
pub fn average_range(samples: &[f64], stride: usize) -> f64 {
    assert!(!samples.is_empty() && stride >= 1);
    let picked: Vec<f64> = samples.iter().step_by(stride).copied().collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeBearing {
    pub range: f64,
    /// Observer frame, radians.
    pub bearing: f64,
}

/// Fuses one window of samples into a single measurement.
pub fn fuse_samples(set: &PingSampleSet, stride: usize) -> RangeBearing {
    RangeBearing {
        range: average_range(&set.ranges, stride),
        bearing: select_stable_bearing(&set.bearings),
    }
}

/// Measurement noise variances `(σ_r², σ_θ²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementNoise {
    pub range_var: f64,
    pub bearing_var: f64,
}

impl From<NoiseLevel> for MeasurementNoise {
    fn from(n: NoiseLevel) -> Self {
        MeasurementNoise {
            range_var: n.range_std * n.range_std,
            bearing_var: n.bearing_std * n.bearing_std,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub tick: usize,
    pub position: Point,
    pub trace_pos: f64,
}

/// EKF track of one neighbor, state `(x, y, vx, vy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelPosTrack {
    pub target: usize,
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub trace_pos: f64,
    pub last_update_tick: usize,
    active: bool,
    pub history: Vec<TrackPoint>,
}

impl RelPosTrack {
    /// Starts a track at the position implied by the first measurement, with
    /// zero velocity and covariance `diag(σ_r²+1, σ_r²+1, 1, 1)`.
    pub fn initialize(
        target: usize,
        meas: RangeBearing,
        observer: Pose,
        range_std: f64,
        tick: usize,
    ) -> Self {
        let angle = observer.heading + meas.bearing;
        let x = observer.x + meas.range * angle.cos();
        let y = observer.y + meas.range * angle.sin();
        let pos_var = range_std * range_std + 1.0;
        let covariance = Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, 1.0, 1.0));
        let mut track = RelPosTrack {
            target,
            state: Vector4::new(x, y, 0.0, 0.0),
            covariance,
            trace_pos: 2.0 * pos_var,
            last_update_tick: tick,
            active: true,
            history: Vec::new(),
        };
        track.record(tick);
        track
    }

    pub fn position(&self) -> Point {
        Point::new(self.state[0], self.state[1])
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Activity flag as the 0/1 weight used by the loss term.
    pub fn tau(&self) -> f64 {
        if self.active {
            1.0
        } else {
            0.0
        }
    }

    /// Clears the activity flag; history is kept.
    pub fn deactivate(&mut self) {
        self.active = false;
    }

    fn record(&mut self, tick: usize) {
        let point = TrackPoint {
            tick,
            position: self.position(),
            trace_pos: self.trace_pos,
        };
        match self.history.last_mut() {
            Some(last) if last.tick >= tick => *last = point,
            _ => self.history.push(point),
        }
    }

    /// Constant-velocity prediction with white-acceleration process noise.
    pub fn ekf_predict(&mut self, dt: f64, q: f64) {
        let f = transition(dt);
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + process_noise(dt, q);
        self.covariance = symmetrize(&self.covariance);
        self.trace_pos = self.covariance[(0, 0)] + self.covariance[(1, 1)];
    }

    /// Range/bearing update with a Joseph-form covariance step.
    pub fn ekf_update(
        &mut self,
        meas: RangeBearing,
        observer: Pose,
        noise: MeasurementNoise,
        tick: usize,
    ) -> Result<()> {
        if !self.active {
            return Err(Error::InactiveTrack {
                target: self.target,
            });
        }
        let (predicted, h) = observe(&self.state, observer);
        let innovation = Vector2::new(
            meas.range - predicted[0],
            wrap_angle(meas.bearing - predicted[1]),
        );
        let r = Matrix2::new(noise.range_var, 0.0, 0.0, noise.bearing_var);
        let s = h * self.covariance * h.transpose() + r;
        let det = s.determinant();
        if !det.is_finite() || det.abs() < 1e-18 {
            return Err(Error::SingularInnovation);
        }
        let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
        let k: Matrix4x2<f64> = self.covariance * h.transpose() * s_inv;
        self.state += k * innovation;
        let i_kh = Matrix4::identity() - k * h;
        let joseph = i_kh * self.covariance * i_kh.transpose() + k * r * k.transpose();
        self.covariance = symmetrize(&joseph);
        self.trace_pos = self.covariance[(0, 0)] + self.covariance[(1, 1)];
        self.last_update_tick = tick;
        self.record(tick);
        Ok(())
    }
}

pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

pub fn process_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let a = q * dt.powi(3) / 3.0;
    let b = q * dt.powi(2) / 2.0;
    let c = q * dt;
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    )
}

/// Predicted `(range, bearing)` and its Jacobian at `state`.
fn observe(state: &Vector4<f64>, observer: Pose) -> (Vector2<f64>, Matrix2x4<f64>) {
    let dx = state[0] - observer.x;
    let dy = state[1] - observer.y;
    let rho2 = (dx * dx + dy * dy).max(1e-12);
    let rho = rho2.sqrt();
    let predicted = Vector2::new(rho, wrap_angle(dy.atan2(dx) - observer.heading));
    let h = Matrix2x4::new(
        dx / rho, dy / rho, 0.0, 0.0, //
        -dy / rho2, dx / rho2, 0.0, 0.0,
    );
    (predicted, h)
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
