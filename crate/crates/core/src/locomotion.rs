//! Quasi-static odometry: each executed clock phase (or share of one) moves the body by a
//! calibrated stride and, when turning, rotates it by a fixed angle.
//! Height and roll come from the leg lengths the pressures produce.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::GaitMode;
use crate::kinematics::{body_height, BodyPose, RobotGeometry, Tripod, TripodLengths};
use crate::models::ModelSet;
use crate::plant::{ChannelMap, Part, CHANNEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocomotionParams {
    /// Forward travel per walking clock phase, mm (24.5 mm/s over 6.6 s).
    pub stride_per_phase_mm: f64,
    /// Heading change per turning clock phase, rad.
    pub turn_per_sequence_rad: f64,
    /// Share of the stride covered while turning.
    pub turn_forward_fraction: f64,
    /// Standard deviation of the per-phase heading random walk, rad.
    pub heading_drift_std_rad: f64,
    /// Constant heading bias added each phase, rad.
    pub heading_bias_rad: f64,
    /// Standard deviation of sideways slip per phase, mm.
    pub lateral_noise_std_mm: f64,
    /// Bending angle at which the full stride is reached. `None` disables
    /// stride scaling by the achieved bend.
    pub nominal_bend_rad: Option<f64>,
}

impl Default for LocomotionParams {
    fn default() -> Self {
        LocomotionParams {
            stride_per_phase_mm: 24.5 * 6.6,
            turn_per_sequence_rad: 10f64.to_radians(),
            turn_forward_fraction: 0.5,
            heading_drift_std_rad: 0.0,
            heading_bias_rad: 0.0,
            lateral_noise_std_mm: 0.0,
            nominal_bend_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocomotionError {
    #[error("invalid locomotion params: {0}")]
    InvalidParams(String),
    #[error("pressure log spans {span_s} s, need at least one {phase_s} s phase")]
    InsufficientData { span_s: f64, phase_s: f64 },
}

impl LocomotionParams {
    pub fn validate(&self) -> Result<(), LocomotionError> {
        let bad = |m: &str| Err(LocomotionError::InvalidParams(m.into()));
        if !(self.stride_per_phase_mm >= 0.0 && self.stride_per_phase_mm.is_finite()) {
            return bad("stride_per_phase must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.turn_forward_fraction) {
            return bad("turn_forward_fraction must lie in [0, 1]");
        }
        if !(self.heading_drift_std_rad >= 0.0 && self.lateral_noise_std_mm >= 0.0) {
            return bad("noise levels must be >= 0");
        }
        if !(self.turn_per_sequence_rad.is_finite() && self.heading_bias_rad.is_finite()) {
            return bad("turn and bias must be finite");
        }
        if self.nominal_bend_rad.is_some_and(|b| !(b > 0.0)) {
            return bad("nominal_bend_rad must be positive");
        }
        Ok(())
    }

    pub fn speed_mm_per_s(&self, phase_s: f64) -> f64 {
        self.stride_per_phase_mm / phase_s
    }
}

/// Summary of one executed clock phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleResult {
    pub mode: GaitMode,
    /// Tripod standing at the end of the phase.
    pub active: Tripod,
    pub lengths: TripodLengths,
    /// Peak bending angle reached by the driven bending parts, if tracked.
    pub bend_rad: Option<f64>,
    pub duration_s: f64,
    /// Share of a clock phase this record covers; 1 for a complete phase.
    /// Smaller values let the pose follow the gait tick by tick.
    pub phase_fraction: f64,
}

impl CycleResult {
    /// A phase that reached the nominal bend with the given side lengths.
    pub fn nominal(mode: GaitMode, lengths: TripodLengths, duration_s: f64) -> Self {
        CycleResult { mode, active: Tripod::B, lengths, bend_rad: None, duration_s, phase_fraction: 1.0 }
    }
}

fn stride_scale(params: &LocomotionParams, cycle: &CycleResult) -> f64 {
    match (params.nominal_bend_rad, cycle.bend_rad) {
        (Some(nominal), Some(achieved)) => (achieved / nominal).clamp(0.0, 1.0),
        _ => 1.0,
    }
}

/// Pose after executing `cycle` from `pose`.
///
/// Travel, turn and bias scale linearly with `cycle.phase_fraction` and the
/// noise standard deviations with its square root, so splitting a phase
/// into pieces keeps the per-phase mean and variance. Draws exactly two
/// normal samples from `rng` per call, so the stream stays aligned
/// whatever the noise levels are.
pub fn advance_pose<R: Rng + ?Sized>(
    pose: &BodyPose,
    cycle: &CycleResult,
    params: &LocomotionParams,
    geom: &RobotGeometry,
    rng: &mut R,
) -> BodyPose {
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let f = cycle.phase_fraction;
    let drift = params.heading_bias_rad * f + params.heading_drift_std_rad * f.sqrt() * unit.sample(rng);
    let slip_m = params.lateral_noise_std_mm * f.sqrt() * unit.sample(rng) / 1000.0;

    let (turn, forward) = match cycle.mode {
        GaitMode::Walk => (0.0, 1.0),
        GaitMode::TurnLeft => (params.turn_per_sequence_rad, params.turn_forward_fraction),
        GaitMode::TurnRight => (-params.turn_per_sequence_rad, params.turn_forward_fraction),
    };
    let dheading = turn * f + drift;
    let mean = pose.heading_rad + dheading / 2.0;
    let dist_m = params.stride_per_phase_mm * forward * f * stride_scale(params, cycle) / 1000.0;
    let (s, c) = mean.sin_cos();
    BodyPose {
        // slip is along the right-hand normal (sin, -cos) of the travel direction
        x_m: pose.x_m + dist_m * c + slip_m * s,
        y_m: pose.y_m + dist_m * s - slip_m * c,
        z_mm: body_height(cycle.lengths.double_mm, cycle.lengths.single_mm, geom),
        heading_rad: pose.heading_rad + dheading,
        roll_rad: cycle.active.roll(cycle.lengths, geom),
    }
}

/// Side lengths of `tripod` given the eight channel pressures.
pub fn tripod_lengths(
    tripod: Tripod,
    channels: &[f64; CHANNEL_COUNT],
    map: &ChannelMap,
    models: &ModelSet,
) -> TripodLengths {
    let parts = map.fanout(channels);
    let double = parts[Part::ext(tripod.double_legs()[0]).index()];
    let single = parts[Part::ext(tripod.single_leg()).index()];
    TripodLengths { double_mm: models.two_w.eval_clamped(double), single_mm: models.one_w.eval_clamped(single) }
}

/// Height, roll and the supporting tripod for the given channel pressures.
///
/// The body rests on whichever tripod holds it higher.
pub fn support_pose(
    channels: &[f64; CHANNEL_COUNT],
    map: &ChannelMap,
    models: &ModelSet,
    geom: &RobotGeometry,
) -> (f64, f64, Tripod) {
    let mut best = None;
    for tripod in [Tripod::A, Tripod::B] {
        let l = tripod_lengths(tripod, channels, map, models);
        let h = body_height(l.double_mm, l.single_mm, geom);
        if best.is_none_or(|(bh, _, _)| h > bh) {
            best = Some((h, tripod.roll(l, geom), tripod));
        }
    }
    best.expect("two tripods")
}

/// Channel pressures at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSample {
    pub t_s: f64,
    pub channels: [f64; CHANNEL_COUNT],
}

/// Body-center height over a logged run, `(t_s, z_mm)` per sample.
pub fn height_trace(
    log: &[PressureSample],
    map: &ChannelMap,
    models: &ModelSet,
    geom: &RobotGeometry,
    phase_s: f64,
) -> Result<Vec<(f64, f64)>, LocomotionError> {
    let span_s = match (log.first(), log.last()) {
        (Some(a), Some(b)) => b.t_s - a.t_s,
        _ => 0.0,
    };
    if span_s + 1e-9 < phase_s {
        return Err(LocomotionError::InsufficientData { span_s, phase_s });
    }
    Ok(log.iter().map(|s| (s.t_s, support_pose(&s.channels, map, models, geom).0)).collect())
}
