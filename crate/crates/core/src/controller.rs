//! Hysteresis (bang-bang with threshold) pressure feedback per channel.
//!
//! Each channel carries two valve/pump pairs: pair 1 pressurizes, pair 2
//! depressurizes. A pair opens once the reading leaves the band
//! `desired ± epsilon` on its side and closes as soon as the reading
//! reaches `desired`.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{Actuation, ChannelId, ChannelMap, CHANNEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pressurize,
    Depressurize,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pressurize => "pressurize",
            Mode::Depressurize => "depressurize",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCommand {
    pub mode: Mode,
    /// Desired steady-state gauge pressure, kPa.
    pub desired: f64,
}

impl ChannelCommand {
    pub fn pressurize(desired: f64) -> Self {
        ChannelCommand { mode: Mode::Pressurize, desired }
    }

    pub fn depressurize(desired: f64) -> Self {
        ChannelCommand { mode: Mode::Depressurize, desired }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("length mismatch: {commands} commands, {readings} readings, {states} states")]
    LengthMismatch { commands: usize, readings: usize, states: usize },
    #[error("command file line {line}: {msg}")]
    CommandFile { line: usize, msg: String },
}

/// Valve/pump state of one channel and its hysteresis threshold.
///
/// Valves and pumps of a pair always switch together, and the two pairs
/// are never open at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub valve1_open: bool,
    pub pump1_on: bool,
    pub valve2_open: bool,
    pub pump2_on: bool,
    epsilon: f64,
}

impl ChannelState {
    /// All valves closed and pumps off.
    pub fn new(epsilon: f64) -> Result<Self, ControllerError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ControllerError::BadEpsilon(epsilon));
        }
        Ok(ChannelState { valve1_open: false, pump1_on: false, valve2_open: false, pump2_on: false, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn set_pair1(&mut self, on: bool) {
        self.valve1_open = on;
        self.pump1_on = on;
    }

    fn set_pair2(&mut self, on: bool) {
        self.valve2_open = on;
        self.pump2_on = on;
    }

    /// One controller update for a measured gauge pressure.
    pub fn control_step(&self, cmd: ChannelCommand, measured: f64) -> ChannelState {
        let mut s = *self;
        let (desired, eps) = (cmd.desired, self.epsilon);
        match cmd.mode {
            Mode::Pressurize => {
                s.set_pair2(false);
                if measured < desired - eps && !s.valve1_open {
                    s.set_pair1(true);
                }
                if measured >= desired && s.valve1_open {
                    s.set_pair1(false);
                }
            }
            Mode::Depressurize => {
                s.set_pair1(false);
                if measured > desired + eps && !s.valve2_open {
                    s.set_pair2(true);
                }
                if measured <= desired && s.valve2_open {
                    s.set_pair2(false);
                }
            }
        }
        s
    }

    pub fn actuation(&self) -> Actuation {
        Actuation { valve1: self.valve1_open, pump1: self.pump1_on, valve2: self.valve2_open, pump2: self.pump2_on }
    }

    /// Number of valves whose position differs from `other`.
    pub fn valve_transitions(&self, other: &ChannelState) -> usize {
        usize::from(self.valve1_open != other.valve1_open) + usize::from(self.valve2_open != other.valve2_open)
    }
}

/// Applies [`ChannelState::control_step`] independently to every channel.
pub fn controller_tick(
    commands: &[ChannelCommand],
    readings: &[f64],
    states: &[ChannelState],
) -> Result<Vec<ChannelState>, ControllerError> {
    if commands.len() != readings.len() || readings.len() != states.len() {
        return Err(ControllerError::LengthMismatch {
            commands: commands.len(),
            readings: readings.len(),
            states: states.len(),
        });
    }
    Ok(states.iter().zip(commands.iter().zip(readings)).map(|(s, (c, m))| s.control_step(*c, *m)).collect())
}

/// Hysteresis thresholds, kPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub epsilon_extension_kpa: f64,
    pub epsilon_bending_kpa: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { epsilon_extension_kpa: 5.0, epsilon_bending_kpa: 10.0 }
    }
}

impl ControllerConfig {
    /// Initial per-channel states, picking epsilon by the part type each channel drives.
    pub fn initial_states(&self, map: &ChannelMap) -> Result<[ChannelState; CHANNEL_COUNT], ControllerError> {
        let mut out = [ChannelState::new(self.epsilon_extension_kpa)?; CHANNEL_COUNT];
        for (i, s) in out.iter_mut().enumerate() {
            if !map.is_extension(ChannelId(i)) {
                *s = ChannelState::new(self.epsilon_bending_kpa)?;
            }
        }
        Ok(out)
    }
}

/// Timestamped step command for one channel, as read from a desired-trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedCommand {
    pub t_s: f64,
    pub channel: ChannelId,
    pub command: ChannelCommand,
}

#[derive(Serialize, Deserialize)]
struct TimedCommandRow {
    t_s: f64,
    channel: usize,
    mode: Mode,
    desired_kpa: f64,
}

/// Parses `t_s,channel,mode,desired_kpa` rows; channels are one-based.
pub fn read_command_csv<R: io::Read>(reader: R) -> Result<Vec<TimedCommand>, ControllerError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TimedCommandRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ControllerError::CommandFile { line, msg: e.to_string() })?;
        if !(1..=CHANNEL_COUNT).contains(&row.channel) {
            return Err(ControllerError::CommandFile {
                line,
                msg: format!("channel {} not in 1..={CHANNEL_COUNT}", row.channel),
            });
        }
        if !(row.t_s.is_finite() && row.t_s >= 0.0 && row.desired_kpa.is_finite()) {
            return Err(ControllerError::CommandFile { line, msg: "non-finite or negative value".into() });
        }
        if out.last().is_some_and(|prev: &TimedCommand| prev.t_s > row.t_s) {
            return Err(ControllerError::CommandFile { line, msg: "timestamps must be non-decreasing".into() });
        }
        out.push(TimedCommand {
            t_s: row.t_s,
            channel: ChannelId(row.channel - 1),
            command: ChannelCommand { mode: row.mode, desired: row.desired_kpa },
        });
    }
    Ok(out)
}

pub fn write_command_csv<W: io::Write>(writer: W, commands: &[TimedCommand]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for c in commands {
        w.serialize(TimedCommandRow {
            t_s: c.t_s,
            channel: c.channel.0 + 1,
            mode: c.command.mode,
            desired_kpa: c.command.desired,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed() -> ChannelState {
        ChannelState::new(5.0).unwrap()
    }

    #[test]
    fn opens_below_band() {
        let s = closed().control_step(ChannelCommand::pressurize(20.0), 10.0);
        assert!(s.valve1_open && s.pump1_on);
        assert!(!s.valve2_open && !s.pump2_on);
    }

    #[test]
    fn closes_at_setpoint() {
        let open = closed().control_step(ChannelCommand::pressurize(20.0), 10.0);
        let s = open.control_step(ChannelCommand::pressurize(20.0), 21.0);
        assert_eq!(s, closed());
    }

    #[test]
    fn inside_band_is_unchanged() {
        let s = closed().control_step(ChannelCommand::pressurize(20.0), 17.0);
        assert_eq!(s, closed());
        // an open pair also stays open inside the band
        let open = closed().control_step(ChannelCommand::pressurize(20.0), 10.0);
        assert_eq!(open.control_step(ChannelCommand::pressurize(20.0), 17.0), open);
    }

    #[test]
    fn depressurize_rules() {
        let cmd = ChannelCommand::depressurize(-10.0);
        let s = closed().control_step(cmd, 0.0);
        assert!(s.valve2_open && s.pump2_on && !s.valve1_open);
        assert_eq!(s.control_step(cmd, -7.0), s);
        assert_eq!(s.control_step(cmd, -10.0), closed());
        // -6 is within epsilon of -10: stays closed
        assert_eq!(closed().control_step(cmd, -6.0), closed());
    }

    #[test]
    fn mode_switch_closes_other_pair() {
        let open = closed().control_step(ChannelCommand::pressurize(20.0), 10.0);
        let s = open.control_step(ChannelCommand::depressurize(20.0), 22.0);
        assert!(!s.valve1_open && !s.pump1_on);
        assert!(!s.valve2_open, "22 is inside the band above 20");
        let s = open.control_step(ChannelCommand::depressurize(0.0), 22.0);
        assert!(!s.valve1_open && s.valve2_open);
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert_eq!(ChannelState::new(0.0), Err(ControllerError::BadEpsilon(0.0)));
        assert!(ChannelState::new(f64::NAN).is_err());
    }

    #[test]
    fn tick_independence() {
        let cmds = [ChannelCommand::pressurize(20.0); CHANNEL_COUNT];
        let mut readings = [20.0; CHANNEL_COUNT];
        let states = [closed(); CHANNEL_COUNT];
        let out = controller_tick(&cmds, &readings, &states).unwrap();
        assert!(out.iter().all(|s| s.actuation() == Actuation::default()));

        readings[2] = 5.0;
        let out = controller_tick(&cmds, &readings, &states).unwrap();
        for (i, s) in out.iter().enumerate() {
            assert_eq!(s.valve1_open, i == 2, "channel {i}");
        }
        assert!(matches!(controller_tick(&cmds[..3], &readings, &states), Err(ControllerError::LengthMismatch { .. })));
    }

    #[test]
    fn epsilons_follow_channel_kind() {
        let states = ControllerConfig::default().initial_states(&ChannelMap::default()).unwrap();
        let eps: Vec<f64> = states.iter().map(|s| s.epsilon()).collect();
        assert_eq!(eps, [5.0, 10.0, 5.0, 10.0, 5.0, 10.0, 5.0, 10.0]);
    }

    #[test]
    fn command_csv_roundtrip_and_errors() {
        let text = "t_s,channel,mode,desired_kpa\n0,1,pressurize,30\n5.5,1,depressurize,-10\n";
        let cmds = read_command_csv(text.as_bytes()).unwrap();
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[1].channel, ChannelId(0));
        assert_eq!(cmds[1].command, ChannelCommand::depressurize(-10.0));
        let mut buf = Vec::new();
        write_command_csv(&mut buf, &cmds).unwrap();
        assert_eq!(read_command_csv(&buf[..]).unwrap(), cmds);

        assert!(read_command_csv("t_s,channel,mode,desired_kpa\n0,9,pressurize,1\n".as_bytes()).is_err());
        assert!(read_command_csv("t_s,channel,mode,desired_kpa\n0,1,vent,1\n".as_bytes()).is_err());
        assert!(
            read_command_csv("t_s,channel,mode,desired_kpa\n2,1,pressurize,1\n1,1,pressurize,1\n".as_bytes()).is_err()
        );
    }
}
