//! Corridor trajectory tracker.
//!
//! The body center is compared against a band of fixed half-width around
//! the planar projection of the desired path. Leaving the band starts a
//! turn back toward the path, and the turn holds until the center has
//! crossed the path. The center is also projected onto the path to look
//! up the desired height, which becomes extension pressure setpoints.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ChannelCommand;
use crate::gait::GaitMode;
use crate::kinematics::{
    inverse_pose, lengths_to_pressures, BodyPose, KinematicsError, LengthLimits, RobotGeometry, SidePressures, Tripod,
};
use crate::models::ModelSet;
use crate::plant::{ChannelId, ChannelMap, Part};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    fn add_scaled(self, o: Point2, k: f64) -> Point2 {
        Point2::new(self.x + k * o.x, self.y + k * o.y)
    }

    fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("trajectory has no segments")]
    EmptyTrajectory,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("corridor half-width must be positive, got {0}")]
    BadCorridor(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One piece of the planar path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Line {
        start: Point2,
        end: Point2,
    },
    /// Positive sweep runs counter-clockwise.
    Arc {
        center: Point2,
        radius_m: f64,
        start_angle_deg: f64,
        sweep_deg: f64,
    },
}

/// Closest point on a segment and the signed lateral offset to it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Projection {
    point: Point2,
    s: f64,
    offset: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { start, end } => start.dist(end),
            Segment::Arc { radius_m, sweep_deg, .. } => radius_m * sweep_deg.to_radians().abs(),
        }
    }

    pub fn start(&self) -> Point2 {
        self.point_at(0.0)
    }

    pub fn end(&self) -> Point2 {
        self.point_at(self.length())
    }

    /// Point at arc length `s` from the segment start.
    pub fn point_at(&self, s: f64) -> Point2 {
        match *self {
            Segment::Line { start, end } => {
                let len = start.dist(end);
                start.add_scaled(end.sub(start), s / len)
            }
            Segment::Arc { center, radius_m, start_angle_deg, sweep_deg } => {
                let a = start_angle_deg.to_radians() + sweep_deg.signum() * s / radius_m;
                Point2::new(center.x + radius_m * a.cos(), center.y + radius_m * a.sin())
            }
        }
    }

    fn project(&self, p: Point2) -> Projection {
        match *self {
            Segment::Line { start, end } => {
                let len = start.dist(end);
                let u = end.sub(start);
                let u = Point2::new(u.x / len, u.y / len);
                let right = Point2::new(u.y, -u.x);
                let rel = p.sub(start);
                let along = rel.dot(u);
                let side = rel.dot(right);
                if (0.0..=len).contains(&along) {
                    return Projection { point: start.add_scaled(u, along), s: along, offset: side };
                }
                let s = along.clamp(0.0, len);
                let q = start.add_scaled(u, s);
                Projection { point: q, s, offset: signed(p.dist(q), side) }
            }
            Segment::Arc { center, radius_m, start_angle_deg, sweep_deg } => {
                let orient = sweep_deg.signum();
                let v = p.sub(center);
                let r = v.norm();
                let side = (r - radius_m) * orient;
                let sweep = sweep_deg.to_radians().abs();
                let phi = if r > 0.0 {
                    (orient * (v.y.atan2(v.x) - start_angle_deg.to_radians())).rem_euclid(TAU)
                } else {
                    0.0
                };
                if phi <= sweep && r > 0.0 {
                    let q = center.add_scaled(v, radius_m / r);
                    return Projection { point: q, s: phi * radius_m, offset: side };
                }
                let (a, b) = (self.start(), self.end());
                let (q, s) = if p.dist(a) <= p.dist(b) { (a, 0.0) } else { (b, self.length()) };
                Projection { point: q, s, offset: signed(p.dist(q), side) }
            }
        }
    }

    fn validate(&self) -> Result<(), TrackerError> {
        let ok = match *self {
            Segment::Line { start, end } => {
                [start.x, start.y, end.x, end.y].iter().all(|v| v.is_finite()) && start.dist(end) > 0.0
            }
            Segment::Arc { center, radius_m, start_angle_deg, sweep_deg } => {
                [center.x, center.y, start_angle_deg].iter().all(|v| v.is_finite())
                    && radius_m > 0.0
                    && radius_m.is_finite()
                    && sweep_deg != 0.0
                    && sweep_deg.abs() <= 360.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(TrackerError::InvalidTrajectory(format!("degenerate segment {self:?}")))
        }
    }
}

fn signed(magnitude: f64, side: f64) -> f64 {
    if side == 0.0 {
        0.0
    } else {
        magnitude.copysign(side)
    }
}

/// Desired maximal height from arc length `from_s_m` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightStep {
    pub from_s_m: f64,
    pub z_m: f64,
}

/// Desired 3D path: connected planar segments plus a piecewise-constant
/// height profile keyed by arc length.
///
/// Heights are measured from a datum `height_datum_mm` above the body
/// center, so a desired height `z` asks for a body-center height of
/// `z - datum`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
    #[serde(rename = "height", default)]
    pub heights: Vec<HeightStep>,
    #[serde(default)]
    pub height_datum_mm: f64,
}

/// Projection `o'` of the body center onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPoint {
    pub point: Point2,
    /// Arc length from the path start.
    pub s_m: f64,
    pub z_m: Option<f64>,
}

impl TrajectorySpec {
    pub fn line(start: Point2, end: Point2) -> Self {
        TrajectorySpec { segments: vec![Segment::Line { start, end }], heights: vec![], height_datum_mm: 0.0 }
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.segments.is_empty() {
            return Err(TrackerError::EmptyTrajectory);
        }
        for s in &self.segments {
            s.validate()?;
        }
        for w in self.segments.windows(2) {
            let gap = w[0].end().dist(w[1].start());
            if gap > 1e-6 {
                return Err(TrackerError::InvalidTrajectory(format!("segments not connected, gap {gap} m")));
            }
        }
        if let Some(first) = self.heights.first() {
            if first.from_s_m != 0.0 {
                return Err(TrackerError::InvalidTrajectory("height profile must start at s = 0".into()));
            }
        }
        if self.heights.windows(2).any(|w| w[1].from_s_m <= w[0].from_s_m) {
            return Err(TrackerError::InvalidTrajectory("height steps must increase in s".into()));
        }
        if self.heights.iter().any(|h| !h.z_m.is_finite()) || !self.height_datum_mm.is_finite() {
            return Err(TrackerError::InvalidTrajectory("non-finite height".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    fn nearest(&self, p: Point2) -> Result<Projection, TrackerError> {
        let mut best: Option<(f64, Projection)> = None;
        let mut s0 = 0.0;
        for seg in &self.segments {
            let mut proj = seg.project(p);
            proj.s += s0;
            let d = p.dist(proj.point);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, proj));
            }
            s0 += seg.length();
        }
        best.map(|(_, p)| p).ok_or(TrackerError::EmptyTrajectory)
    }

    pub fn height_at(&self, s_m: f64) -> Option<f64> {
        self.heights.iter().rev().find(|h| h.from_s_m <= s_m).map(|h| h.z_m)
    }
}

fn planar(pose: &BodyPose) -> Point2 {
    Point2::new(pose.x_m, pose.y_m)
}

/// Signed distance from the body center to the path, positive to the right
/// of the direction of travel.
pub fn lateral_offset(pose: &BodyPose, traj: &TrajectorySpec) -> Result<f64, TrackerError> {
    Ok(traj.nearest(planar(pose))?.offset)
}

/// Nearest-point projection of the body center onto the path.
///
/// For axis-aligned lines this keeps the coordinate along the line, the
/// same-coordinate mapping.
pub fn map_to_trajectory(pose: &BodyPose, traj: &TrajectorySpec) -> Result<MappedPoint, TrackerError> {
    let proj = traj.nearest(planar(pose))?;
    Ok(MappedPoint { point: proj.point, s_m: proj.s, z_m: traj.height_at(proj.s) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corridor {
    pub half_width_m: f64,
    /// Distance past the path the center must reach to count as crossed.
    pub crossing_deadband_m: f64,
}

impl Default for Corridor {
    fn default() -> Self {
        Corridor { half_width_m: 0.05, crossing_deadband_m: 0.001 }
    }
}

impl Corridor {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(self.half_width_m > 0.0 && self.half_width_m.is_finite()) {
            return Err(TrackerError::BadCorridor(self.half_width_m));
        }
        if !(self.crossing_deadband_m >= 0.0 && self.crossing_deadband_m < self.half_width_m) {
            return Err(TrackerError::BadCorridor(self.half_width_m));
        }
        Ok(())
    }
}

/// Current locomotion command. `latched` is set exactly while turning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerState {
    pub command: GaitMode,
    pub latched: bool,
}

impl Default for TrackerState {
    fn default() -> Self {
        TrackerState { command: GaitMode::Walk, latched: false }
    }
}

impl fmt::Display for TrackerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command)
    }
}

const WALK: TrackerState = TrackerState { command: GaitMode::Walk, latched: false };

/// Next tracker state for a given lateral offset.
pub fn decide_offset(offset: f64, corridor: &Corridor, state: TrackerState) -> TrackerState {
    let db = corridor.crossing_deadband_m;
    if state.latched {
        let crossed = match state.command {
            GaitMode::TurnLeft => offset < -db,
            GaitMode::TurnRight => offset > db,
            GaitMode::Walk => true,
        };
        if !crossed {
            return state;
        }
    }
    if offset > corridor.half_width_m {
        TrackerState { command: GaitMode::TurnLeft, latched: true }
    } else if offset < -corridor.half_width_m {
        TrackerState { command: GaitMode::TurnRight, latched: true }
    } else {
        WALK
    }
}

pub fn decide(
    pose: &BodyPose,
    traj: &TrajectorySpec,
    corridor: &Corridor,
    state: TrackerState,
) -> Result<TrackerState, TrackerError> {
    Ok(decide_offset(lateral_offset(pose, traj)?, corridor, state))
}

/// Extension setpoints realizing a level body at a desired height.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightCommand {
    pub body_height_mm: f64,
    pub pressures: SidePressures,
    pub commands: Vec<(ChannelId, ChannelCommand)>,
}

impl HeightCommand {
    pub fn setpoints(&self) -> Vec<(ChannelId, f64)> {
        self.commands.iter().map(|(c, cmd)| (*c, cmd.desired)).collect()
    }
}

/// Pressure commands for every extension channel so that either tripod,
/// once standing, holds the body level at `z_m` above the datum.
pub fn height_command(
    z_m: f64,
    datum_mm: f64,
    geom: &RobotGeometry,
    models: &ModelSet,
    map: &ChannelMap,
) -> Result<HeightCommand, TrackerError> {
    let h = z_m * 1000.0 - datum_mm;
    let lengths = inverse_pose(h, 0.0, geom, &LengthLimits::from_models(models))?;
    let pressures = lengths_to_pressures(lengths.single_mm, lengths.double_mm, models)?;
    let mut commands = Vec::with_capacity(4);
    for tripod in [Tripod::A, Tripod::B] {
        for (part, kpa) in [
            (Part::ext(tripod.double_legs()[0]), pressures.double_kpa),
            (Part::ext(tripod.single_leg()), pressures.single_kpa),
        ] {
            let ch = map.channel_of(part).expect("valid map covers every part");
            commands.push((ch, ChannelCommand::pressurize(kpa)));
        }
    }
    commands.sort_by_key(|(c, _)| *c);
    Ok(HeightCommand { body_height_mm: h, pressures, commands })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtLeast,
    AtMost,
}

/// Stops a run once the body center passes a line `axis = value_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopPredicate {
    pub axis: Axis,
    pub when: Comparison,
    pub value_m: f64,
}

impl StopPredicate {
    pub fn reached(&self, pose: &BodyPose) -> bool {
        let v = match self.axis {
            Axis::X => pose.x_m,
            Axis::Y => pose.y_m,
        };
        match self.when {
            Comparison::AtLeast => v >= self.value_m,
            Comparison::AtMost => v <= self.value_m,
        }
    }
}
