//! Alternating tripod gait and the bending-only turning variant.
//!
//! One clock phase is split into two half-phases, one per tripod. Inside
//! the active half-phase the extension channels pressurize first and hold,
//! the bending channels pressurize during a middle window, and every
//! channel of the resting tripod depressurizes. Turning keeps the
//! extension sequence and bends only the legs opposite the turn.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ChannelCommand, Mode, TimedCommand};
use crate::kinematics::{is_left, Tripod};
use crate::plant::{ChannelId, ChannelMap, PartKind, CHANNEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitMode {
    Walk,
    TurnLeft,
    TurnRight,
}

impl GaitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GaitMode::Walk => "walk",
            GaitMode::TurnLeft => "turn_left",
            GaitMode::TurnRight => "turn_right",
        }
    }

    pub fn is_turn(self) -> bool {
        self != GaitMode::Walk
    }

    /// Whether the bending part of `leg` is driven in this mode.
    fn bends(self, leg: u8) -> bool {
        match self {
            GaitMode::Walk => true,
            GaitMode::TurnLeft => !is_left(leg),
            GaitMode::TurnRight => is_left(leg),
        }
    }
}

impl fmt::Display for GaitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaitError {
    #[error("invalid gait config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitConfig {
    /// Full clock phase, s.
    pub phase_s: f64,
    /// Share of each half-phase during which only the extension parts act.
    pub extension_lead_fraction: f64,
    /// Share of each half-phase during which the bending parts pressurize.
    pub bending_on_fraction: f64,
    pub extension_kpa: f64,
    pub bending_kpa: f64,
    pub depressurize_kpa: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig {
            phase_s: 6.6,
            extension_lead_fraction: 0.25,
            bending_on_fraction: 0.5,
            extension_kpa: 30.0,
            bending_kpa: 30.0,
            depressurize_kpa: -20.0,
        }
    }
}

impl GaitConfig {
    pub fn validate(&self) -> Result<(), GaitError> {
        let lead = self.extension_lead_fraction;
        let on = self.bending_on_fraction;
        if !(self.phase_s > 0.0 && self.phase_s.is_finite()) {
            return Err(GaitError::InvalidConfig(format!("phase {} s must be positive", self.phase_s)));
        }
        if !(lead > 0.0 && lead < 1.0 && on > 0.0 && on < 1.0 && lead + on <= 1.0) {
            return Err(GaitError::InvalidConfig(format!(
                "fractions lead {lead} and bending {on} must lie in (0, 1) and sum to at most 1"
            )));
        }
        if !(self.depressurize_kpa < self.extension_kpa && self.depressurize_kpa < self.bending_kpa) {
            return Err(GaitError::InvalidConfig("depressurize setpoint must be below the others".into()));
        }
        Ok(())
    }

    pub fn half_phase_s(&self) -> f64 {
        self.phase_s / 2.0
    }

    /// Sub-phase boundaries within one half-phase, as fractions.
    fn sub_phases(&self) -> [(f64, f64); 3] {
        let lead = self.extension_lead_fraction;
        let end_on = lead + self.bending_on_fraction;
        [(0.0, lead), (lead, end_on), (end_on, 1.0)]
    }
}

/// Channel commands valid over `[t_start_s, t_end_s)` of the clock phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitCommandFrame {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub active: Tripod,
    pub commands: [ChannelCommand; CHANNEL_COUNT],
}

impl GaitCommandFrame {
    pub fn duration_s(&self) -> f64 {
        self.t_end_s - self.t_start_s
    }

    /// Replaces the setpoint of every extension channel the frame is
    /// pressurizing with the matching entry of `setpoints`.
    pub fn override_extension(&mut self, map: &ChannelMap, setpoints: &[(ChannelId, f64)]) {
        for (ch, kpa) in setpoints {
            let cmd = &mut self.commands[ch.0];
            if map.is_extension(*ch) && cmd.mode == Mode::Pressurize {
                cmd.desired = *kpa;
            }
        }
    }
}

fn channel_tripod(map: &ChannelMap, ch: ChannelId) -> Tripod {
    let leg = map.parts(ch)[0].leg;
    if Tripod::A.contains(leg) {
        Tripod::A
    } else {
        Tripod::B
    }
}

fn frame_commands(
    map: &ChannelMap,
    mode: GaitMode,
    cfg: &GaitConfig,
    active: Tripod,
    bending_window: bool,
) -> [ChannelCommand; CHANNEL_COUNT] {
    std::array::from_fn(|i| {
        let ch = ChannelId(i);
        let parts = map.parts(ch);
        if channel_tripod(map, ch) != active {
            return ChannelCommand::depressurize(cfg.depressurize_kpa);
        }
        match parts[0].kind {
            PartKind::Extension => ChannelCommand::pressurize(cfg.extension_kpa),
            PartKind::Bending if bending_window && parts.iter().all(|p| mode.bends(p.leg)) => {
                ChannelCommand::pressurize(cfg.bending_kpa)
            }
            PartKind::Bending => ChannelCommand::depressurize(cfg.depressurize_kpa),
        }
    })
}

/// Command frame in force at time `t_s` (taken modulo the clock phase).
///
/// Times within a nanosecond below a frame boundary count as the next
/// frame, so clock ticks that round short still land where they belong.
pub fn schedule(t_s: f64, mode: GaitMode, cfg: &GaitConfig, map: &ChannelMap) -> GaitCommandFrame {
    let t = (t_s + 1e-9).rem_euclid(cfg.phase_s);
    let half = cfg.half_phase_s();
    let (active, offset) = if t < half { (Tripod::A, 0.0) } else { (Tripod::B, half) };
    let local = (t - offset) / half;
    let subs = cfg.sub_phases();
    let idx = subs.iter().position(|(_, end)| local < *end).unwrap_or(2);
    let (start, end) = subs[idx];
    GaitCommandFrame {
        t_start_s: offset + start * half,
        t_end_s: offset + end * half,
        active,
        commands: frame_commands(map, mode, cfg, active, idx == 1),
    }
}

/// All frames of one clock phase, in order.
pub fn cycle_plan(mode: GaitMode, cfg: &GaitConfig, map: &ChannelMap) -> Vec<GaitCommandFrame> {
    let half = cfg.half_phase_s();
    let mut frames = Vec::with_capacity(6);
    for (active, offset) in [(Tripod::A, 0.0), (Tripod::B, half)] {
        for (idx, (start, end)) in cfg.sub_phases().into_iter().enumerate() {
            if end <= start {
                continue;
            }
            frames.push(GaitCommandFrame {
                t_start_s: offset + start * half,
                t_end_s: offset + end * half,
                active,
                commands: frame_commands(map, mode, cfg, active, idx == 1),
            });
        }
    }
    frames
}

/// Flattens a plan into timestamped per-channel rows starting at `t0_s`.
pub fn plan_commands(plan: &[GaitCommandFrame], t0_s: f64) -> Vec<TimedCommand> {
    plan.iter()
        .flat_map(|f| {
            f.commands.iter().enumerate().map(move |(i, c)| TimedCommand {
                t_s: t0_s + f.t_start_s,
                channel: ChannelId(i),
                command: *c,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Part;

    fn map() -> ChannelMap {
        ChannelMap::default()
    }

    fn ch(part: Part) -> usize {
        map().channel_of(part).unwrap().0
    }

    #[test]
    fn walk_early_frame() {
        let cfg = GaitConfig::default();
        let f = schedule(0.1 * cfg.phase_s, GaitMode::Walk, &cfg, &map());
        assert_eq!(f.active, Tripod::A);
        assert_eq!(f.commands[ch(Part::ext(1))], ChannelCommand::pressurize(30.0));
        assert_eq!(f.commands[ch(Part::ext(5))], ChannelCommand::pressurize(30.0));
        for leg in [2, 4, 6] {
            assert_eq!(f.commands[ch(Part::ext(leg))].mode, Mode::Depressurize);
            assert_eq!(f.commands[ch(Part::bend(leg))].mode, Mode::Depressurize);
        }
        // 0.1 T is 20% into the half-phase: bending not started yet
        assert_eq!(f.commands[ch(Part::bend(1))].mode, Mode::Depressurize);
    }

    #[test]
    fn walk_periodic() {
        let cfg = GaitConfig::default();
        let m = map();
        for frac in [0.0, 0.1, 0.3, 0.55, 0.8, 0.99] {
            let t = frac * cfg.phase_s;
            let a = schedule(t, GaitMode::Walk, &cfg, &m);
            let b = schedule(t + cfg.phase_s, GaitMode::Walk, &cfg, &m);
            assert_eq!(a.commands, b.commands, "t = {t}");
            assert_eq!(a.active, b.active);
        }
    }

    #[test]
    fn turn_left_never_bends_left_legs() {
        let cfg = GaitConfig::default();
        let plan = cycle_plan(GaitMode::TurnLeft, &cfg, &map());
        for f in &plan {
            for leg in [4, 5, 6] {
                assert_eq!(f.commands[ch(Part::bend(leg))].mode, Mode::Depressurize);
            }
        }
        let f = schedule(0.25 * cfg.phase_s, GaitMode::TurnLeft, &cfg, &map());
        assert_eq!(f.active, Tripod::A);
        assert_eq!(f.commands[ch(Part::bend(1))], ChannelCommand::pressurize(30.0));
        assert_eq!(f.commands[ch(Part::bend(5))].mode, Mode::Depressurize);
    }

    #[test]
    fn turn_right_mirrors() {
        let cfg = GaitConfig::default();
        for f in cycle_plan(GaitMode::TurnRight, &cfg, &map()) {
            for leg in [1, 2, 3] {
                assert_eq!(f.commands[ch(Part::bend(leg))].mode, Mode::Depressurize);
            }
        }
    }

    #[test]
    fn plan_tiles_phase() {
        let cfg = GaitConfig::default();
        let plan = cycle_plan(GaitMode::Walk, &cfg, &map());
        assert_eq!(plan.len(), 6);
        let total: f64 = plan.iter().map(|f| f.duration_s()).sum();
        assert!((total - cfg.phase_s).abs() < 1e-12);
        assert_eq!(plan[0].t_start_s, 0.0);
        for w in plan.windows(2) {
            assert_eq!(w[0].t_end_s, w[1].t_start_s);
        }
        let groups: Vec<Tripod> = plan.iter().map(|f| f.active).collect();
        assert_eq!(groups, [Tripod::A, Tripod::A, Tripod::A, Tripod::B, Tripod::B, Tripod::B]);
        for f in &plan {
            let sampled = schedule(f.t_start_s, GaitMode::Walk, &cfg, &map());
            assert_eq!(sampled.commands, f.commands);
        }
    }

    #[test]
    fn full_bending_window_drops_tail_frame() {
        let cfg = GaitConfig { extension_lead_fraction: 0.25, bending_on_fraction: 0.75, ..Default::default() };
        cfg.validate().unwrap();
        let plan = cycle_plan(GaitMode::Walk, &cfg, &map());
        assert_eq!(plan.len(), 4);
    }

    #[test]
    fn turn_extension_matches_walk() {
        let cfg = GaitConfig::default();
        let m = map();
        let walk = cycle_plan(GaitMode::Walk, &cfg, &m);
        for mode in [GaitMode::TurnLeft, GaitMode::TurnRight] {
            let turn = cycle_plan(mode, &cfg, &m);
            for (w, t) in walk.iter().zip(&turn) {
                for i in 0..CHANNEL_COUNT {
                    if m.is_extension(ChannelId(i)) {
                        assert_eq!(w.commands[i], t.commands[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = GaitConfig { extension_lead_fraction: 0.6, bending_on_fraction: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = GaitConfig { phase_s: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(GaitConfig::default().validate().is_ok());
    }

    #[test]
    fn override_touches_pressurized_extension_only() {
        let cfg = GaitConfig::default();
        let m = map();
        let mut f = schedule(0.3 * cfg.phase_s, GaitMode::Walk, &cfg, &m);
        let e1 = ChannelId(ch(Part::ext(1)));
        let e4 = ChannelId(ch(Part::ext(4)));
        let b1 = ChannelId(ch(Part::bend(1)));
        f.override_extension(&m, &[(e1, 16.9), (e4, 16.9), (b1, 1.0)]);
        assert_eq!(f.commands[e1.0], ChannelCommand::pressurize(16.9));
        assert_eq!(f.commands[e4.0], ChannelCommand::depressurize(-20.0));
        assert_eq!(f.commands[b1.0], ChannelCommand::pressurize(30.0));
    }

    #[test]
    fn plan_rows() {
        let cfg = GaitConfig::default();
        let rows = plan_commands(&cycle_plan(GaitMode::Walk, &cfg, &map()), 10.0);
        assert_eq!(rows.len(), 6 * CHANNEL_COUNT);
        assert_eq!(rows[0].t_s, 10.0);
        assert!(rows.windows(2).all(|w| w[0].t_s <= w[1].t_s));
    }
}
