//! Potential-field driving risk model for car following.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`], [`vehicle`] and [`params`] hold the shared domain types,
//!   vehicle-frame transforms and the anisotropic virtual distance.
//! * [`risk`] evaluates the three risk surrogates (interactive vehicle,
//!   restriction, speed) and turns their field strengths into accelerations.
//! * [`dynamics`] replays a recorded leader and integrates a follower under any
//!   [`dynamics::CarFollowingModel`]; [`idm`] provides the IDM baseline.
//! * [`dataset`] ingests trajectory CSV files and extracts car-following pairs.
//! * [`calibration`] holds the RMSE loss and the particle swarm optimizer with a
//!   standby pool.
//! * [`reporting`] produces boxplot statistics, heatmap grids and exports.
//! * [`synthetic`] generates leader profiles and model-driven pairs for tests.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod idm;
pub mod params;
pub mod reporting;
pub mod risk;
pub mod synthetic;
pub mod vehicle;

pub use error::ModelError;
pub use geometry::Vec2;
pub use params::{AccelBounds, DrsParams, ParamError, Restriction, RestrictionShape};
pub use vehicle::{VehicleId, VehicleState};
