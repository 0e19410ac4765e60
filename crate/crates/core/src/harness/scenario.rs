//! Scenario files: one experiment kind plus every module's configuration.
//!
//! Any section left out of a scenario file falls back to the preset for
//! that experiment kind, so a file only needs the values it changes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controller::{ControllerConfig, Mode};
use crate::gait::{GaitConfig, GaitMode};
use crate::kinematics::RobotGeometry;
use crate::locomotion::LocomotionParams;
use crate::plant::PlantParams;
use crate::tracker::{Axis, Comparison, Corridor, HeightStep, Point2, Segment, StopPredicate, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fit,
    StepResponse,
    HeightControl,
    RollControl,
    TrackLine,
    TrackCircle,
    TrackVarheight,
    TurnCalibration,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Fit,
        ExperimentKind::StepResponse,
        ExperimentKind::HeightControl,
        ExperimentKind::RollControl,
        ExperimentKind::TrackLine,
        ExperimentKind::TrackCircle,
        ExperimentKind::TrackVarheight,
        ExperimentKind::TurnCalibration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Fit => "fit",
            ExperimentKind::StepResponse => "step_response",
            ExperimentKind::HeightControl => "height_control",
            ExperimentKind::RollControl => "roll_control",
            ExperimentKind::TrackLine => "track_line",
            ExperimentKind::TrackCircle => "track_circle",
            ExperimentKind::TrackVarheight => "track_varheight",
            ExperimentKind::TurnCalibration => "turn_calibration",
        }
    }

    pub fn is_tracking(self) -> bool {
        matches!(self, ExperimentKind::TrackLine | ExperimentKind::TrackCircle | ExperimentKind::TrackVarheight)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment kind {s:?}")))
    }
}

/// Simulation clock: one tick drives the plant, controller and pose
/// source; the tracker runs every `decision_period_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    pub tick_s: f64,
    pub decision_period_s: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { tick_s: 0.01, decision_period_s: 0.1 }
    }
}

impl ClockConfig {
    /// Number of ticks in `period_s`, which must be a whole multiple of the tick.
    pub fn ticks(&self, period_s: f64, what: &str) -> Result<u64, HarnessError> {
        if !(self.tick_s > 0.0 && self.tick_s.is_finite()) {
            return Err(HarnessError::Config(format!("tick {} s must be positive", self.tick_s)));
        }
        let n = (period_s / self.tick_s).round();
        if n < 1.0 || (n * self.tick_s - period_s).abs() > 1e-9 {
            return Err(HarnessError::Config(format!(
                "{what} {period_s} s is not a whole number of {} s ticks",
                self.tick_s
            )));
        }
        Ok(n as u64)
    }
}

/// Plant parameters for one channel (one-based id), replacing the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPlantOverride {
    pub id: usize,
    pub params: PlantParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Calibration CSV; synthetic samples from the current models when absent.
    pub calibration_file: Option<PathBuf>,
    pub extension_noise_mm: f64,
    pub theta_noise_rad: f64,
    /// Measurements per swept pressure.
    pub repeats: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { calibration_file: None, extension_noise_mm: 0.5, theta_noise_rad: 0.02, repeats: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRow {
    pub t_s: f64,
    pub mode: Mode,
    pub desired_kpa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// One-based channel.
    pub channel: usize,
    pub commands: Vec<StepRow>,
    /// Desired-trajectory CSV; replaces `commands` when set.
    pub commands_file: Option<PathBuf>,
    /// Time the last command is held, s.
    pub hold_s: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        let row = |t_s, mode, desired_kpa| StepRow { t_s, mode, desired_kpa };
        StepConfig {
            channel: 1,
            commands: vec![
                row(0.0, Mode::Pressurize, 30.0),
                row(5.0, Mode::Depressurize, 10.0),
                row(10.0, Mode::Pressurize, 20.0),
                row(15.0, Mode::Depressurize, 0.0),
                row(20.0, Mode::Depressurize, -10.0),
                row(25.0, Mode::Pressurize, 15.0),
            ],
            commands_file: None,
            hold_s: 5.0,
        }
    }
}

/// Target side lengths for the active tripod.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthTarget {
    pub single_mm: f64,
    pub double_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseControlConfig {
    pub interval_s: f64,
    pub repeats: usize,
    pub targets: Vec<LengthTarget>,
}

impl Default for PoseControlConfig {
    /// Highest and lowest level stance, then the two rolled stances that
    /// mix the same extreme lengths.
    fn default() -> Self {
        let t = |single_mm, double_mm| LengthTarget { single_mm, double_mm };
        PoseControlConfig {
            interval_s: 2.0,
            repeats: 3,
            targets: vec![t(67.0, 67.0), t(55.0, 55.0), t(67.0, 55.0), t(55.0, 67.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPose {
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub corridor: Corridor,
    pub stop: StopPredicate,
    #[serde(default)]
    pub start: StartPose,
    /// One trial per entry, each starting at `start.heading_deg` plus the offset.
    #[serde(default = "default_start_angles")]
    pub start_angles_deg: Vec<f64>,
}

fn default_start_angles() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnCalConfig {
    pub direction: GaitMode,
    pub turn_sequences: usize,
    pub walk_sequences: usize,
}

impl Default for TurnCalConfig {
    fn default() -> Self {
        TurnCalConfig { direction: GaitMode::TurnLeft, turn_sequences: 9, walk_sequences: 10 }
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_duration")]
    pub max_duration_s: f64,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default, rename = "channel_plant")]
    pub channel_plants: Vec<ChannelPlantOverride>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub gait: GaitConfig,
    #[serde(default)]
    pub geometry: RobotGeometry,
    #[serde(default)]
    pub locomotion: LocomotionParams,
    #[serde(default)]
    pub models_file: Option<PathBuf>,
    #[serde(default)]
    pub channel_map_file: Option<PathBuf>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub step: Option<StepConfig>,
    #[serde(default)]
    pub pose_control: Option<PoseControlConfig>,
    #[serde(default)]
    pub tracking: Option<TrackingConfig>,
    #[serde(default)]
    pub turn: Option<TurnCalConfig>,
}

fn default_max_duration() -> f64 {
    600.0
}

fn line_tracking(end: Point2, stop: StopPredicate) -> TrackingConfig {
    TrackingConfig {
        trajectory: TrajectorySpec::line(Point2::new(0.0, 0.0), end),
        corridor: Corridor::default(),
        stop,
        start: StartPose { x_m: 0.0, y_m: 0.0, heading_deg: 90.0 },
        start_angles_deg: vec![0.0],
    }
}

/// Heading noise used by the tracking presets so the corridor logic fires.
/// The bias drifts the body to the left of its heading.
fn drifting() -> LocomotionParams {
    LocomotionParams {
        heading_drift_std_rad: 0.02,
        heading_bias_rad: 0.01,
        lateral_noise_std_mm: 5.0,
        nominal_bend_rad: Some(crate::models::PolyModel::theta().eval_clamped(30.0)),
        ..Default::default()
    }
}

impl Scenario {
    /// Ready-to-run defaults for `kind`.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut s = Scenario {
            kind,
            seed: 7,
            max_duration_s: default_max_duration(),
            clock: ClockConfig::default(),
            plant: PlantParams::default(),
            channel_plants: vec![],
            controller: ControllerConfig::default(),
            gait: GaitConfig::default(),
            geometry: RobotGeometry::default(),
            locomotion: LocomotionParams::default(),
            models_file: None,
            channel_map_file: None,
            fit: None,
            step: None,
            pose_control: None,
            tracking: None,
            turn: None,
        };
        match kind {
            ExperimentKind::Fit => s.fit = Some(FitConfig::default()),
            ExperimentKind::StepResponse => {
                s.plant.noise_std_kpa = 0.2;
                s.step = Some(StepConfig::default());
            }
            ExperimentKind::HeightControl | ExperimentKind::RollControl => {
                s.pose_control = Some(PoseControlConfig::default());
            }
            ExperimentKind::TrackLine => {
                s.locomotion = drifting();
                let stop = StopPredicate { axis: Axis::Y, when: Comparison::AtLeast, value_m: 1.5 };
                let mut t = line_tracking(Point2::new(0.0, 1.5), stop);
                t.start_angles_deg = vec![0.0, 15.0, -15.0];
                s.tracking = Some(t);
            }
            ExperimentKind::TrackCircle => {
                s.locomotion = drifting();
                s.tracking = Some(TrackingConfig {
                    trajectory: TrajectorySpec {
                        segments: vec![Segment::Arc {
                            center: Point2::new(-1.0, 0.0),
                            radius_m: 1.0,
                            start_angle_deg: 0.0,
                            sweep_deg: 90.0,
                        }],
                        heights: vec![],
                        height_datum_mm: 0.0,
                    },
                    corridor: Corridor::default(),
                    stop: StopPredicate { axis: Axis::X, when: Comparison::AtMost, value_m: -1.0 },
                    start: StartPose { x_m: 0.0, y_m: 0.0, heading_deg: 90.0 },
                    start_angles_deg: vec![0.0, 0.0, 0.0],
                });
            }
            ExperimentKind::TrackVarheight => {
                s.locomotion = drifting();
                let stop = StopPredicate { axis: Axis::Y, when: Comparison::AtLeast, value_m: 1.0 };
                let mut t = line_tracking(Point2::new(0.0, 1.0), stop);
                t.trajectory.heights =
                    vec![HeightStep { from_s_m: 0.0, z_m: 0.135 }, HeightStep { from_s_m: 0.5, z_m: 0.140 }];
                // markers sit 10 mm above the body center
                t.trajectory.height_datum_mm = 10.0;
                s.tracking = Some(t);
            }
            ExperimentKind::TurnCalibration => {
                s.locomotion.nominal_bend_rad = Some(crate::models::PolyModel::theta().eval_clamped(30.0));
                s.turn = Some(TurnCalConfig::default());
            }
        }
        s
    }

    /// Parses a scenario, resolving relative file references against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let preset = Scenario::preset(s.kind);
        s.fit = s.fit.or(preset.fit);
        s.step = s.step.or(preset.step);
        s.pose_control = s.pose_control.or(preset.pose_control);
        s.tracking = s.tracking.or(preset.tracking);
        s.turn = s.turn.or(preset.turn);
        if let Some(base) = base_dir {
            let resolve = |p: &mut Option<PathBuf>| {
                if let Some(path) = p {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            };
            resolve(&mut s.models_file);
            resolve(&mut s.channel_map_file);
            if let Some(f) = s.fit.as_mut() {
                resolve(&mut f.calibration_file);
            }
            if let Some(st) = s.step.as_mut() {
                resolve(&mut st.commands_file);
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
