//! End-to-end experiment runner: wires the modules together on a fixed-step
//! clock, logs every tick and summarizes the run as error statistics.

pub mod fit;
pub mod logs;
pub mod scenario;
mod sim;
pub mod stats;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controller::{ChannelCommand, ControllerError};
use crate::gait::{GaitError, GaitMode};
use crate::kinematics::{BodyPose, KinematicsError};
use crate::locomotion::LocomotionError;
use crate::models::{CalibrationFileError, FitError, FitResult, ModelError, ModelFileError};
use crate::plant::{ChannelId, PlantError};
use crate::tracker::{MappedPoint, TrackerError, TrackerState};

pub use logs::Table;
pub use scenario::{ExperimentKind, Scenario};
pub use stats::{
    compare_to_reference, local_maxima, ComparisonLine, ComparisonReport, ErrorStats, Reference, ReferenceEntry,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error(transparent)]
    Calibration(#[from] CalibrationFileError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Locomotion(#[from] LocomotionError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// One executed clock phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub mode: GaitMode,
    pub t_end_s: f64,
    pub start: BodyPose,
    pub end: BodyPose,
    pub bend_rad: Option<f64>,
}

/// Tracker output at one decision tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub t_s: f64,
    pub pose: BodyPose,
    pub offset_m: f64,
    pub state: TrackerState,
    pub mapped: MappedPoint,
    /// Desired height in force after this decision.
    pub commanded_z_m: Option<f64>,
}

/// A local maximum of the datum-adjusted height trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightPeak {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub commanded_z_m: f64,
}

impl HeightPeak {
    pub fn error_mm(&self) -> f64 {
        (self.z_m - self.commanded_z_m) * 1000.0
    }
}

/// One command held on one channel during a step-response run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSegment {
    pub channel: ChannelId,
    pub command: ChannelCommand,
    pub epsilon_kpa: f64,
    pub t_start_s: f64,
    pub t_end_s: f64,
    /// True chamber pressure at the end of the segment.
    pub final_kpa: f64,
    pub valve_transitions: usize,
    /// Largest one-tick rise from `desired - epsilon`.
    pub one_tick_rise_kpa: f64,
}

/// One trial of an experiment; tracking scenarios run one per start angle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trial {
    pub label: String,
    pub start_angle_deg: f64,
    pub sim_time_s: f64,
    pub stop_reached: bool,
    pub final_pose: BodyPose,
    pub cycles: Vec<CycleRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub peaks: Vec<HeightPeak>,
    pub steps: Vec<StepSegment>,
}

impl Trial {
    /// Decision ticks at which a turn was newly latched.
    pub fn turns_fired(&self) -> usize {
        let mut prev = TrackerState::default();
        let mut n = 0;
        for d in &self.decisions {
            if d.state.latched && (!prev.latched || d.state.command != prev.command) {
                n += 1;
            }
            prev = d.state;
        }
        n
    }
}

/// Everything a run produced.
#[derive(Debug, Clone, Default)]
pub struct Episode {
    pub tables: Vec<Table>,
    pub stats: Vec<ErrorStats>,
    pub trials: Vec<Trial>,
    pub fits: Vec<FitResult>,
    /// Additional text artifacts as `(file name, contents)`.
    pub files: Vec<(String, String)>,
}

impl Episode {
    pub fn stat(&self, name: &str) -> Option<&ErrorStats> {
        self.stats.iter().find(|s| s.name == name)
    }

    pub fn stats_table(&self) -> Table {
        let mut t = Table::new("stats", &["variable", "mean", "std", "unit", "count"]);
        for s in &self.stats {
            t.push(vec![s.name.clone(), logs::fmt_f(s.mean), logs::fmt_f(s.std), s.unit.clone(), s.count.to_string()]);
        }
        t
    }

    /// Writes every table, the statistics and extra files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut written = Vec::new();
        for t in self.tables.iter().chain(std::iter::once(&self.stats_table())) {
            t.write_to(dir)?;
            written.push(dir.join(t.file_name()));
        }
        for (name, text) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<Episode, HarnessError> {
    match scenario.kind {
        ExperimentKind::Fit => fit::run_fit(scenario),
        _ => sim::run_sim(scenario),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turns_fired_counts_new_latches() {
        let mk = |command, latched| DecisionRecord {
            t_s: 0.0,
            pose: BodyPose::default(),
            offset_m: 0.0,
            state: TrackerState { command, latched },
            mapped: MappedPoint { point: crate::tracker::Point2::new(0.0, 0.0), s_m: 0.0, z_m: None },
            commanded_z_m: None,
        };
        let trial = Trial {
            decisions: vec![
                mk(GaitMode::Walk, false),
                mk(GaitMode::TurnLeft, true),
                mk(GaitMode::TurnLeft, true),
                mk(GaitMode::TurnRight, true),
                mk(GaitMode::Walk, false),
                mk(GaitMode::TurnLeft, true),
            ],
            ..Default::default()
        };
        assert_eq!(trial.turns_fired(), 3);
    }
}
