//! Simulation core for a soft pneumatic hexapod.
//!
//! Static pressure models map chamber pressure to leg extension and
//! bending. A hysteresis controller regulates each of eight channels, a
//! tripod gait schedules the channels, and a corridor tracker steers the
//! body along a desired path at a desired height.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod gait;
pub mod harness;
pub mod kinematics;
pub mod locomotion;
pub mod models;
pub mod plant;
pub mod tracker;

pub use controller::{ChannelCommand, ChannelState, ControllerConfig, Mode};
pub use gait::{GaitConfig, GaitMode};
pub use harness::{run, Episode, ErrorStats, ExperimentKind, HarnessError, Scenario};
pub use kinematics::{BodyPose, RobotGeometry, Tripod, TripodLengths};
pub use locomotion::LocomotionParams;
pub use models::{CaseLabel, ModelSet, PolyModel};
pub use plant::{ChannelId, ChannelMap, PlantParams, CHANNEL_COUNT};
pub use tracker::{Corridor, Point2, TrackerState, TrajectorySpec};
