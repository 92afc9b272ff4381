//! Deterministic multi-robot frontier-exploration simulator.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod hgrid;
pub mod mapping;
pub mod metrics;
pub mod planner;
pub mod relpos;
pub mod rng;
pub mod sensing;
pub mod wiserx;
pub mod world;

pub use error::{Error, Result};
pub use grid::{Cell, GridGeometry, Point, Pose};
pub use world::{GroundTruthMap, ScenarioConfig, Strategy};
