//! Coupled sensor configuration and path planning in a time-varying
//! threat field.
//!
//! The crate is organised bottom-up: [`threat`] defines the field and its
//! dynamics, [`estimator`] tracks the field parameters with an unscented
//! Kalman filter, [`planner`] finds minimum-exposure paths and their cost
//! statistics, [`placement`] chooses sensor locations, and [`cscp`] runs the
//! iterative loop that ties them together.

pub mod cscp;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod placement;
pub mod planner;
pub mod threat;

pub use nalgebra;

pub use cscp::{run, CscpTrace, IterationRecord, Method, Model, Scenario, Status};
pub use error::{Error, Result};
pub use estimator::{GaussianBelief, MeasurementModel, Phase, UkfParams};
pub use placement::{ObjectiveContext, PlacementResult, SensorConfig};
pub use planner::{GridGraph, PathHorizonStats, PathPlan};
pub use threat::{BasisSet, LinearDynamics, ThreatTruth, Workspace};
