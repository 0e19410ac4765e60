//! Fixed-step closed-loop simulation for every experiment kind except the fit.
//!
//! Each tick reads the sensors, updates the controllers, advances the
//! chambers and moves the body by the tick's share of a clock phase.
//! Height and roll follow the live pressures of the supporting tripod.

use std::fs::File;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logs::{fmt_b, fmt_f, Table};
use super::scenario::{ExperimentKind, PoseControlConfig, Scenario, StepConfig, TrackingConfig, TurnCalConfig};
use super::stats::local_maxima;
use super::{CycleRecord, DecisionRecord, Episode, ErrorStats, HarnessError, HeightPeak, StepSegment, Trial};
use crate::controller::{read_command_csv, ChannelCommand, ChannelState, Mode, TimedCommand};
use crate::gait::{schedule, GaitMode};
use crate::kinematics::{body_height, lengths_to_pressures, BodyPose, RobotGeometry, Tripod, TripodLengths};
use crate::locomotion::{advance_pose, support_pose, tripod_lengths, CycleResult};
use crate::models::ModelSet;
use crate::plant::{ChannelId, ChannelMap, ChannelPlant, Part, CHANNEL_COUNT};
use crate::tracker::{decide_offset, height_command, lateral_offset, map_to_trajectory, HeightCommand, TrackerState};

/// Minimum prominence of a height maximum, mm.
pub const PEAK_PROMINENCE_MM: f64 = 0.5;

/// Resolved configuration shared by every trial of a run.
struct Env<'a> {
    s: &'a Scenario,
    models: ModelSet,
    map: ChannelMap,
    geom: RobotGeometry,
    dt: f64,
    decision_ticks: u64,
    max_ticks: u64,
}

impl<'a> Env<'a> {
    fn new(s: &'a Scenario) -> Result<Self, HarnessError> {
        let models = match &s.models_file {
            Some(path) => ModelSet::load(path)?,
            None => ModelSet::default(),
        };
        let map = match &s.channel_map_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                ChannelMap::from_toml_str(&text)?
            }
            None => ChannelMap::default(),
        };
        s.geometry.validate()?;
        s.gait.validate()?;
        s.locomotion.validate()?;
        s.plant.validate()?;
        for o in &s.channel_plants {
            if !(1..=CHANNEL_COUNT).contains(&o.id) {
                return Err(HarnessError::Config(format!("channel_plant id {} not in 1..={CHANNEL_COUNT}", o.id)));
            }
            o.params.validate()?;
        }
        if !(s.max_duration_s > 0.0 && s.max_duration_s.is_finite()) {
            return Err(HarnessError::Config(format!("max_duration_s {} must be positive", s.max_duration_s)));
        }
        let dt = s.clock.tick_s;
        let decision_ticks = s.clock.ticks(s.clock.decision_period_s, "decision period")?;
        let max_ticks = (s.max_duration_s / dt).round() as u64;
        Ok(Env { s, models, map, geom: s.geometry, dt, decision_ticks, max_ticks })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.s.seed);
        rng.set_stream(stream);
        rng
    }

    fn rig(&self) -> Result<Rig, HarnessError> {
        let states = self.s.controller.initial_states(&self.map)?;
        let mut plants = [ChannelPlant::new(self.s.plant, 0.0)?; CHANNEL_COUNT];
        for o in &self.s.channel_plants {
            plants[o.id - 1] = ChannelPlant::new(o.params, 0.0)?;
        }
        Ok(Rig { plants, states, dt: self.dt })
    }

    fn channel(&self, part: Part) -> ChannelId {
        self.map.channel_of(part).expect("channel map covers every part")
    }
}

/// The eight chambers with their controllers.
struct Rig {
    plants: [ChannelPlant; CHANNEL_COUNT],
    states: [ChannelState; CHANNEL_COUNT],
    dt: f64,
}

impl Rig {
    fn pressures(&self) -> [f64; CHANNEL_COUNT] {
        self.plants.map(|p| p.pressure)
    }

    /// One board cycle. Channels without a command keep their valves as
    /// they are. Returns the sensor readings and per-channel valve transitions.
    fn tick(
        &mut self,
        cmds: &[Option<ChannelCommand>; CHANNEL_COUNT],
        rng: &mut ChaCha8Rng,
    ) -> Result<([f64; CHANNEL_COUNT], [usize; CHANNEL_COUNT]), HarnessError> {
        let mut measured = [0.0; CHANNEL_COUNT];
        let mut transitions = [0; CHANNEL_COUNT];
        for i in 0..CHANNEL_COUNT {
            let plant = &self.plants[i];
            measured[i] = plant.read_sensor(plant.params.noise_std_kpa, rng);
            if let Some(cmd) = cmds[i] {
                let next = self.states[i].control_step(cmd, measured[i]);
                transitions[i] = next.valve_transitions(&self.states[i]);
                self.states[i] = next;
            }
            self.plants[i] = plant.step(self.dt, self.states[i].actuation())?;
        }
        Ok((measured, transitions))
    }
}

fn controller_table(name: String) -> Table {
    Table::new(name, &["t_s", "channel", "desired_kpa", "measured_kpa", "valve1", "valve2"])
}

fn pose_table(name: String) -> Table {
    Table::new(name, &["t_s", "x_m", "y_m", "z_mm", "heading_rad", "roll_rad", "mode"])
}

fn log_controller(table: &mut Table, t: f64, cmds: &[Option<ChannelCommand>], measured: &[f64], rig: &Rig) {
    for (i, cmd) in cmds.iter().enumerate() {
        if let Some(c) = cmd {
            let st = &rig.states[i];
            table.push(vec![
                fmt_f(t),
                ChannelId(i).to_string(),
                fmt_f(c.desired),
                fmt_f(measured[i]),
                fmt_b(st.valve1_open),
                fmt_b(st.valve2_open),
            ]);
        }
    }
}

fn log_pose(table: &mut Table, t: f64, pose: &BodyPose, mode: &str) {
    table.push(vec![
        fmt_f(t),
        fmt_f(pose.x_m),
        fmt_f(pose.y_m),
        fmt_f(pose.z_mm),
        fmt_f(pose.heading_rad),
        fmt_f(pose.roll_rad),
        mode.to_string(),
    ]);
}

fn table_name(base: &str, trial: usize, trials: usize) -> String {
    if trials > 1 {
        format!("{base}_trial{}", trial + 1)
    } else {
        base.to_string()
    }
}

/// Sensor noise and locomotion noise draw from separate streams so that
/// changing one does not shift the other.
fn sensor_stream(trial: usize) -> u64 {
    1 + 2 * trial as u64
}

fn locomotion_stream(trial: usize) -> u64 {
    2 + 2 * trial as u64
}

pub(super) fn run_sim(s: &Scenario) -> Result<Episode, HarnessError> {
    let env = Env::new(s)?;
    match s.kind {
        ExperimentKind::StepResponse => run_step(&env, s.step.as_ref().cloned().unwrap_or_default()),
        ExperimentKind::HeightControl | ExperimentKind::RollControl => {
            run_pose_control(&env, &s.pose_control.clone().unwrap_or_default())
        }
        ExperimentKind::TrackLine | ExperimentKind::TrackCircle | ExperimentKind::TrackVarheight => {
            let t = s
                .tracking
                .as_ref()
                .ok_or_else(|| HarnessError::Config(format!("{} needs a [tracking] section", s.kind)))?;
            run_tracking(&env, t)
        }
        ExperimentKind::TurnCalibration => run_turn_cal(&env, &s.turn.unwrap_or_default()),
        ExperimentKind::Fit => Err(HarnessError::Config("fit is not a simulated experiment".into())),
    }
}

fn step_commands(cfg: &StepConfig) -> Result<Vec<TimedCommand>, HarnessError> {
    if let Some(path) = &cfg.commands_file {
        return Ok(read_command_csv(File::open(path).map_err(|e| HarnessError::io(path, e))?)?);
    }
    if !(1..=CHANNEL_COUNT).contains(&cfg.channel) {
        return Err(HarnessError::Config(format!("step channel {} not in 1..={CHANNEL_COUNT}", cfg.channel)));
    }
    let mut out = Vec::with_capacity(cfg.commands.len());
    for row in &cfg.commands {
        if out.last().is_some_and(|p: &TimedCommand| p.t_s > row.t_s) {
            return Err(HarnessError::Config("step commands must be in time order".into()));
        }
        out.push(TimedCommand {
            t_s: row.t_s,
            channel: ChannelId(cfg.channel - 1),
            command: ChannelCommand { mode: row.mode, desired: row.desired_kpa },
        });
    }
    Ok(out)
}

fn run_step(env: &Env, cfg: StepConfig) -> Result<Episode, HarnessError> {
    let commands = step_commands(&cfg)?;
    let Some(last) = commands.last() else {
        return Err(HarnessError::Config("step response needs at least one command".into()));
    };
    if !(cfg.hold_s > 0.0) {
        return Err(HarnessError::Config("hold_s must be positive".into()));
    }
    let dt = env.dt;
    let n_ticks = (((last.t_s + cfg.hold_s) / dt).round() as u64).min(env.max_ticks);
    let mut rig = env.rig()?;
    let mut rng = env.rng(sensor_stream(0));
    let mut table = controller_table("controller".into());
    let mut cmds: [Option<ChannelCommand>; CHANNEL_COUNT] = [None; CHANNEL_COUNT];
    let mut open: [Option<StepSegment>; CHANNEL_COUNT] = [None; CHANNEL_COUNT];
    let mut segments = Vec::new();
    let mut errors = Vec::new();
    let mut next = 0;

    for k in 0..n_ticks {
        let t = k as f64 * dt;
        while next < commands.len() && commands[next].t_s <= t + 1e-9 {
            let c = commands[next];
            let ch = c.channel.0;
            if let Some(mut seg) = open[ch].take() {
                seg.t_end_s = t;
                seg.final_kpa = rig.plants[ch].pressure;
                segments.push(seg);
            }
            let eps = rig.states[ch].epsilon();
            open[ch] = Some(StepSegment {
                channel: c.channel,
                command: c.command,
                epsilon_kpa: eps,
                t_start_s: t,
                t_end_s: t,
                final_kpa: f64::NAN,
                valve_transitions: 0,
                one_tick_rise_kpa: rig.plants[ch].max_rise(c.command.desired - eps, dt),
            });
            cmds[ch] = Some(c.command);
            next += 1;
        }
        let (measured, transitions) = rig.tick(&cmds, &mut rng)?;
        for (seg, n) in open.iter_mut().zip(transitions) {
            if let Some(seg) = seg {
                seg.valve_transitions += n;
            }
        }
        log_controller(&mut table, t, &cmds, &measured, &rig);
        if k.is_multiple_of(env.decision_ticks) {
            for (i, c) in cmds.iter().enumerate() {
                if let Some(c) = c {
                    errors.push(measured[i] - c.desired);
                }
            }
        }
    }
    let t_end = n_ticks as f64 * dt;
    for (ch, seg) in open.iter_mut().enumerate() {
        if let Some(mut seg) = seg.take() {
            seg.t_end_s = t_end;
            seg.final_kpa = rig.plants[ch].pressure;
            segments.push(seg);
        }
    }
    segments.sort_by(|a, b| a.t_start_s.total_cmp(&b.t_start_s).then(a.channel.cmp(&b.channel)));

    let mut ep = Episode::default();
    ep.stats.push(ErrorStats::from_samples("p", "kPa", &errors));
    ep.tables.push(table);
    ep.trials.push(Trial {
        label: "step".into(),
        sim_time_s: t_end,
        stop_reached: true,
        steps: segments,
        ..Default::default()
    });
    Ok(ep)
}

fn run_pose_control(env: &Env, cfg: &PoseControlConfig) -> Result<Episode, HarnessError> {
    if cfg.targets.is_empty() || cfg.repeats == 0 {
        return Err(HarnessError::Config("pose control needs targets".into()));
    }
    let interval_ticks = env.s.clock.ticks(cfg.interval_s, "pose control interval")?;
    let total = (interval_ticks * (cfg.targets.len() * cfg.repeats) as u64).min(env.max_ticks);
    let geom = &env.geom;
    let active = Tripod::A;
    let ch_double = env.channel(Part::ext(active.double_legs()[0]));
    let ch_single = env.channel(Part::ext(active.single_leg()));
    let rest = ChannelCommand::depressurize(env.s.gait.depressurize_kpa);

    let mut rig = env.rig()?;
    let mut rng = env.rng(sensor_stream(0));
    let mut ctl = controller_table("controller".into());
    let mut pose_log = pose_table("pose".into());
    let mut track = Table::new("pose_control", &["t_s", "target_z_mm", "z_mm", "target_roll_rad", "roll_rad"]);
    let mut cmds = [Some(rest); CHANNEL_COUNT];
    let (mut h_err, mut phi_err) = (Vec::new(), Vec::new());
    let mut target = TripodLengths { double_mm: 0.0, single_mm: 0.0 };

    for k in 0..total {
        let t = k as f64 * env.dt;
        if k % interval_ticks == 0 {
            let idx = (k / interval_ticks) as usize % cfg.targets.len();
            let tg = cfg.targets[idx];
            target = TripodLengths { double_mm: tg.double_mm, single_mm: tg.single_mm };
            let p = lengths_to_pressures(tg.single_mm, tg.double_mm, &env.models)?;
            for (ch, desired) in [(ch_double, p.double_kpa), (ch_single, p.single_kpa)] {
                // approach the new setpoint from whichever side the chamber is on
                let mode = if rig.plants[ch.0].pressure > desired { Mode::Depressurize } else { Mode::Pressurize };
                cmds[ch.0] = Some(ChannelCommand { mode, desired });
            }
        }
        let lengths = tripod_lengths(active, &rig.pressures(), &env.map, &env.models);
        let pose = BodyPose {
            z_mm: body_height(lengths.double_mm, lengths.single_mm, geom),
            roll_rad: active.roll(lengths, geom),
            ..Default::default()
        };
        let target_z = body_height(target.double_mm, target.single_mm, geom);
        let target_roll = active.roll(target, geom);
        log_pose(&mut pose_log, t, &pose, "stand");
        if k.is_multiple_of(env.decision_ticks) {
            h_err.push(pose.z_mm - target_z);
            phi_err.push(pose.roll_rad - target_roll);
            track.push(vec![fmt_f(t), fmt_f(target_z), fmt_f(pose.z_mm), fmt_f(target_roll), fmt_f(pose.roll_rad)]);
        }
        let (measured, _) = rig.tick(&cmds, &mut rng)?;
        log_controller(&mut ctl, t, &cmds, &measured, &rig);
    }

    let mut ep = Episode::default();
    ep.stats.push(match env.s.kind {
        ExperimentKind::RollControl => ErrorStats::from_samples("phi", "rad", &phi_err),
        _ => ErrorStats::from_samples("h1", "mm", &h_err),
    });
    ep.tables.extend([ctl, pose_log, track]);
    ep.trials.push(Trial {
        label: "stand".into(),
        sim_time_s: total as f64 * env.dt,
        stop_reached: true,
        ..Default::default()
    });
    Ok(ep)
}

/// How a gait trial chooses its mode and when it ends.
enum Driver<'a> {
    Track(&'a TrackingConfig),
    /// Fixed mode per clock phase.
    Script(Vec<GaitMode>),
}

struct GaitRun {
    trial: Trial,
    tables: Vec<Table>,
    /// |offset| at every decision tick, m.
    offsets: Vec<f64>,
}

fn gait_trial(
    env: &Env,
    driver: &Driver,
    start: BodyPose,
    index: usize,
    trials: usize,
) -> Result<GaitRun, HarnessError> {
    let s = env.s;
    let dt = env.dt;
    let cycle_ticks = s.clock.ticks(s.gait.phase_s, "gait phase")?;
    let half_ticks = s.clock.ticks(s.gait.half_phase_s(), "gait half-phase")?;
    let mut rig = env.rig()?;
    let mut sensor_rng = env.rng(sensor_stream(index));
    let mut loco_rng = env.rng(locomotion_stream(index));
    let mut ctl = controller_table(table_name("controller", index, trials));
    let mut pose_log = pose_table(table_name("pose", index, trials));
    let mut tracker_log = Table::new(table_name("tracker", index, trials), &["t_s", "offset_m", "command", "latched"]);

    let bending: Vec<usize> = (0..CHANNEL_COUNT).filter(|&i| !env.map.is_extension(ChannelId(i))).collect();
    let datum_mm = match driver {
        Driver::Track(t) => t.trajectory.height_datum_mm,
        Driver::Script(_) => 0.0,
    };

    let label = if trials > 1 { format!("trial{}", index + 1) } else { "trial".to_string() };
    let mut trial = Trial { label, ..Default::default() };
    let mut offsets = Vec::new();
    let mut pose = start;
    let mut cycle_start = start;
    let mut cycle_mode = GaitMode::Walk;
    let mut state = TrackerState::default();
    let mut height: Option<HeightCommand> = None;
    let mut commanded_z: Option<f64> = None;
    let mut mode = GaitMode::Walk;
    // peak bend of the half-phase in progress and of the last finished one
    let mut window_bend: Option<f64> = None;
    let mut last_bend: Option<f64> = None;
    // (t, x, y, datum-adjusted z in m, commanded z)
    let mut trace: Vec<(f64, f64, f64, f64, Option<f64>)> = Vec::new();

    let mut k: u64 = 0;
    loop {
        let t = k as f64 * dt;
        let mut done = false;
        if k > 0 && k.is_multiple_of(cycle_ticks) {
            trial.cycles.push(CycleRecord {
                mode: cycle_mode,
                t_end_s: t,
                start: cycle_start,
                end: pose,
                bend_rad: last_bend,
            });
            cycle_start = pose;
            if let Driver::Script(modes) = driver {
                done = trial.cycles.len() >= modes.len();
            }
        }
        if k > 0 && k.is_multiple_of(half_ticks) {
            last_bend = window_bend.or(last_bend);
            window_bend = None;
        }
        if let Driver::Track(tr) = driver {
            done |= tr.stop.reached(&pose);
        }
        log_pose(&mut pose_log, t, &pose, mode.as_str());
        if done || k >= env.max_ticks {
            trial.stop_reached = done;
            trial.sim_time_s = t;
            break;
        }

        if let Driver::Track(tr) = driver {
            if k.is_multiple_of(env.decision_ticks) {
                let offset = lateral_offset(&pose, &tr.trajectory)?;
                state = decide_offset(offset, &tr.corridor, state);
                let mapped = map_to_trajectory(&pose, &tr.trajectory)?;
                if let Some(zc) = mapped.z_m {
                    if commanded_z != Some(zc) {
                        height = Some(height_command(zc, datum_mm, &env.geom, &env.models, &env.map)?);
                        commanded_z = Some(zc);
                    }
                }
                offsets.push(offset.abs());
                tracker_log.push(vec![fmt_f(t), fmt_f(offset), state.command.as_str().into(), fmt_b(state.latched)]);
                trial.decisions.push(DecisionRecord {
                    t_s: t,
                    pose,
                    offset_m: offset,
                    state,
                    mapped,
                    commanded_z_m: commanded_z,
                });
                mode = state.command;
            }
        }
        if k.is_multiple_of(cycle_ticks) {
            if let Driver::Script(modes) = driver {
                mode = modes[trial.cycles.len()];
            }
            cycle_mode = mode;
        }

        let mut frame = schedule((k % cycle_ticks) as f64 * dt, mode, &s.gait, &env.map);
        if let Some(h) = &height {
            frame.override_extension(&env.map, &h.setpoints());
        }
        let cmds = frame.commands.map(Some);
        let (measured, _) = rig.tick(&cmds, &mut sensor_rng)?;
        log_controller(&mut ctl, t, &cmds, &measured, &rig);
        for &i in &bending {
            if frame.commands[i].mode == Mode::Pressurize {
                let theta = env.models.theta.eval_clamped(rig.plants[i].pressure);
                window_bend = Some(window_bend.map_or(theta, |b| b.max(theta)));
            }
        }

        let pressures = rig.pressures();
        let (_, _, support) = support_pose(&pressures, &env.map, &env.models, &env.geom);
        let step = CycleResult {
            mode,
            active: support,
            lengths: tripod_lengths(support, &pressures, &env.map, &env.models),
            bend_rad: last_bend,
            duration_s: dt,
            phase_fraction: dt / s.gait.phase_s,
        };
        pose = advance_pose(&pose, &step, &s.locomotion, &env.geom, &mut loco_rng);
        trace.push((t + dt, pose.x_m, pose.y_m, (pose.z_mm + datum_mm) / 1000.0, commanded_z));
        k += 1;
    }

    let z_mm: Vec<f64> = trace.iter().map(|r| r.3 * 1000.0).collect();
    for i in local_maxima(&z_mm, PEAK_PROMINENCE_MM) {
        let (t, x, y, z, cmd) = trace[i];
        if let Some(c) = cmd {
            trial.peaks.push(HeightPeak { t_s: t, x_m: x, y_m: y, z_m: z, commanded_z_m: c });
        }
    }
    trial.final_pose = pose;
    let mut tables = vec![ctl, pose_log];
    if matches!(driver, Driver::Track(_)) {
        tables.push(tracker_log);
    }
    Ok(GaitRun { trial, tables, offsets })
}

fn run_tracking(env: &Env, cfg: &TrackingConfig) -> Result<Episode, HarnessError> {
    cfg.trajectory.validate()?;
    cfg.corridor.validate()?;
    if cfg.start_angles_deg.is_empty() {
        return Err(HarnessError::Config("tracking needs at least one start angle".into()));
    }
    let trials = cfg.start_angles_deg.len();
    let mut ep = Episode::default();
    let mut offsets = Vec::new();
    let mut peak_errors = Vec::new();
    for (i, &angle) in cfg.start_angles_deg.iter().enumerate() {
        let start = BodyPose {
            x_m: cfg.start.x_m,
            y_m: cfg.start.y_m,
            heading_rad: (cfg.start.heading_deg + angle).to_radians(),
            ..Default::default()
        };
        let mut run = gait_trial(env, &Driver::Track(cfg), start, i, trials)?;
        run.trial.start_angle_deg = angle;
        offsets.extend(run.offsets);
        peak_errors.extend(run.trial.peaks.iter().map(HeightPeak::error_mm));
        ep.tables.extend(run.tables);
        ep.trials.push(run.trial);
    }
    let d = match env.s.kind {
        ExperimentKind::TrackCircle => "d2",
        ExperimentKind::TrackVarheight => "d3",
        _ => "d1",
    };
    ep.stats.push(ErrorStats::from_samples(d, "m", &offsets));
    if !cfg.trajectory.heights.is_empty() {
        ep.stats.push(ErrorStats::from_samples("h2", "mm", &peak_errors));
    }
    Ok(ep)
}

fn run_turn_cal(env: &Env, cfg: &TurnCalConfig) -> Result<Episode, HarnessError> {
    if !cfg.direction.is_turn() {
        return Err(HarnessError::Config("turn calibration direction must be a turn".into()));
    }
    let mut modes = vec![cfg.direction; cfg.turn_sequences];
    modes.extend(std::iter::repeat_n(GaitMode::Walk, cfg.walk_sequences));
    if modes.is_empty() {
        return Err(HarnessError::Config("turn calibration needs at least one sequence".into()));
    }
    let run = gait_trial(env, &Driver::Script(modes), BodyPose::default(), 0, 1)?;
    let mut turns = Vec::new();
    let mut speeds = Vec::new();
    for c in &run.trial.cycles {
        let dur = env.s.gait.phase_s;
        match c.mode {
            GaitMode::Walk => {
                let d = (c.end.x_m - c.start.x_m).hypot(c.end.y_m - c.start.y_m);
                speeds.push(d * 1000.0 / dur);
            }
            _ => turns.push((c.end.heading_rad - c.start.heading_rad).to_degrees()),
        }
    }
    let mut ep = Episode::default();
    ep.stats.push(ErrorStats::from_samples("turn_per_sequence", "deg", &turns));
    ep.stats.push(ErrorStats::from_samples("walk_speed", "mm/s", &speeds));
    ep.tables.extend(run.tables);
    ep.trials.push(run.trial);
    Ok(ep)
}
