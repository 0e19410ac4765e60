//! First-order surrogate for one pneumatic output channel, plus the
//! eight-channel to twelve-part tubing map.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNEL_COUNT: usize = 8;
pub const PART_COUNT: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("pressurize and vent pairs active at the same time")]
    BothPairsActive,
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("invalid channel map: {0}")]
    InvalidMap(String),
}

/// Valve and pump outputs for one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Actuation {
    pub valve1: bool,
    pub pump1: bool,
    pub valve2: bool,
    pub pump2: bool,
}

impl Actuation {
    pub fn pressurizing(&self) -> bool {
        self.valve1 && self.pump1
    }

    pub fn venting(&self) -> bool {
        self.valve2 && self.pump2
    }
}

/// Below `threshold_kpa` the vent rate is multiplied by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseMode {
    pub threshold_kpa: f64,
    pub factor: f64,
}

/// Per-channel plant configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Fill rate toward `supply_kpa`, 1/s.
    pub k_in: f64,
    /// Vent rate toward `vent_kpa`, 1/s.
    pub k_out: f64,
    /// Passive leak toward atmosphere when idle, 1/s.
    pub leak_rate: f64,
    pub supply_kpa: f64,
    pub vent_kpa: f64,
    pub bounds_kpa: [f64; 2],
    pub noise_std_kpa: f64,
    pub collapse: Option<CollapseMode>,
}

impl Default for PlantParams {
    // 0 -> 30 kPa in about one second: ln(60 / 30) / 0.7 = 0.99 s.
    fn default() -> Self {
        PlantParams {
            k_in: 0.7,
            k_out: 0.8,
            leak_rate: 0.02,
            supply_kpa: 60.0,
            vent_kpa: -30.0,
            bounds_kpa: [-20.0, 50.0],
            noise_std_kpa: 0.0,
            collapse: None,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::InvalidParams(msg));
        for (name, v) in [("k_in", self.k_in), ("k_out", self.k_out), ("leak_rate", self.leak_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.supply_kpa > 0.0 && self.vent_kpa < 0.0) {
            return bad(format!("need supply > 0 > vent, got supply {} vent {}", self.supply_kpa, self.vent_kpa));
        }
        let [lo, hi] = self.bounds_kpa;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("bounds [{lo}, {hi}] must be finite with min < max"));
        }
        if !(self.noise_std_kpa.is_finite() && self.noise_std_kpa >= 0.0) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std_kpa));
        }
        if let Some(c) = self.collapse {
            if !(c.factor.is_finite() && c.factor >= 1.0 && c.threshold_kpa > self.vent_kpa) {
                return bad("collapse factor must be >= 1 with threshold above vent pressure".into());
            }
        }
        Ok(())
    }
}

/// One channel's chamber pressure and its dynamics parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPlant {
    pub pressure: f64,
    pub params: PlantParams,
}

impl ChannelPlant {
    pub fn new(params: PlantParams, pressure: f64) -> Result<Self, PlantError> {
        params.validate()?;
        let [lo, hi] = params.bounds_kpa;
        Ok(ChannelPlant { pressure: pressure.clamp(lo, hi), params })
    }

    /// Advances the chamber by `dt` seconds using the exact exponential solution.
    pub fn step(&self, dt: f64, act: Actuation) -> Result<ChannelPlant, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::NonPositiveStep(dt));
        }
        let pr = &self.params;
        let p = match (act.pressurizing(), act.venting()) {
            (true, true) => return Err(PlantError::BothPairsActive),
            (true, false) => relax(self.pressure, pr.supply_kpa, pr.k_in, dt),
            (false, true) => self.vent(dt),
            (false, false) => relax(self.pressure, 0.0, pr.leak_rate, dt),
        };
        let [lo, hi] = pr.bounds_kpa;
        Ok(ChannelPlant { pressure: p.clamp(lo, hi), params: self.params })
    }

    fn vent(&self, dt: f64) -> f64 {
        let pr = &self.params;
        let Some(c) = pr.collapse else {
            return relax(self.pressure, pr.vent_kpa, pr.k_out, dt);
        };
        let fast = pr.k_out * c.factor;
        if self.pressure <= c.threshold_kpa {
            return relax(self.pressure, pr.vent_kpa, fast, dt);
        }
        if pr.k_out == 0.0 {
            return self.pressure;
        }
        // Time to fall from the current pressure to the threshold at the slow rate.
        let t_cross = ((self.pressure - pr.vent_kpa) / (c.threshold_kpa - pr.vent_kpa)).ln() / pr.k_out;
        if t_cross >= dt {
            relax(self.pressure, pr.vent_kpa, pr.k_out, dt)
        } else {
            relax(c.threshold_kpa, pr.vent_kpa, fast, dt - t_cross)
        }
    }

    /// Largest one-step rise while pressurizing from `from_kpa`.
    pub fn max_rise(&self, from_kpa: f64, dt: f64) -> f64 {
        (self.params.supply_kpa - from_kpa) * (1.0 - (-self.params.k_in * dt).exp())
    }

    /// Gauge reading with zero-mean Gaussian noise from `rng`.
    pub fn read_sensor<R: Rng + ?Sized>(&self, noise_std: f64, rng: &mut R) -> f64 {
        if noise_std <= 0.0 {
            return self.pressure;
        }
        // noise_std > 0 and finite, so the distribution is valid
        let n = Normal::new(0.0, noise_std).expect("finite positive std");
        self.pressure + n.sample(rng)
    }
}

/// `p(dt)` for `dp/dt = -k (p - target)`.
fn relax(p0: f64, target: f64, k: f64, dt: f64) -> f64 {
    target + (p0 - target) * (-k * dt).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Extension,
    Bending,
}

/// One actuated segment: `(leg 1..=6, extension|bending)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Part {
    pub leg: u8,
    pub kind: PartKind,
}

impl Part {
    pub const fn ext(leg: u8) -> Self {
        Part { leg, kind: PartKind::Extension }
    }

    pub const fn bend(leg: u8) -> Self {
        Part { leg, kind: PartKind::Bending }
    }

    /// Index into a 12-element part array: legs in order, extension before bending.
    pub fn index(&self) -> usize {
        (self.leg as usize - 1) * 2 + usize::from(self.kind == PartKind::Bending)
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            PartKind::Extension => "E",
            PartKind::Bending => "B",
        };
        write!(f, "{k}{}", self.leg)
    }
}

/// Zero-based channel index. Displayed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

/// Which parts each of the eight channels drives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMap {
    assignments: [Vec<Part>; CHANNEL_COUNT],
}

#[derive(Serialize, Deserialize)]
struct ChannelMapFile {
    channel: Vec<ChannelEntry>,
}

#[derive(Serialize, Deserialize)]
struct ChannelEntry {
    id: usize,
    parts: Vec<Part>,
}

impl Default for ChannelMap {
    /// Channel 1 drives the extension parts of legs 4 and 6; the rest
    /// complete the pairing of the outer legs and give the middle legs
    /// their own channels.
    fn default() -> Self {
        ChannelMap {
            assignments: [
                vec![Part::ext(4), Part::ext(6)],
                vec![Part::bend(4), Part::bend(6)],
                vec![Part::ext(1), Part::ext(3)],
                vec![Part::bend(1), Part::bend(3)],
                vec![Part::ext(2)],
                vec![Part::bend(2)],
                vec![Part::ext(5)],
                vec![Part::bend(5)],
            ],
        }
    }
}

impl ChannelMap {
    pub fn new(assignments: [Vec<Part>; CHANNEL_COUNT]) -> Result<Self, PlantError> {
        let map = ChannelMap { assignments };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: String| Err(PlantError::InvalidMap(m));
        let mut seen = BTreeSet::new();
        for parts in &self.assignments {
            for p in parts {
                if !(1..=6).contains(&p.leg) {
                    return bad(format!("leg {} out of range 1..=6", p.leg));
                }
                if !seen.insert(*p) {
                    return bad(format!("part {p} assigned twice"));
                }
            }
        }
        if seen.len() != PART_COUNT {
            return bad(format!("{} of {PART_COUNT} parts assigned", seen.len()));
        }
        let expect_group = |parts: &[Part]| -> Result<(), PlantError> {
            let ch = self.channel_of(parts[0]).expect("all parts assigned");
            let mut want: Vec<Part> = parts.to_vec();
            let mut got = self.assignments[ch.0].clone();
            want.sort();
            got.sort();
            if want != got {
                return Err(PlantError::InvalidMap(format!(
                    "channel {ch} must drive exactly {}",
                    parts.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("+")
                )));
            }
            Ok(())
        };
        for group in [
            [Part::ext(1), Part::ext(3)].as_slice(),
            &[Part::bend(1), Part::bend(3)],
            &[Part::ext(4), Part::ext(6)],
            &[Part::bend(4), Part::bend(6)],
            &[Part::ext(2)],
            &[Part::bend(2)],
            &[Part::ext(5)],
            &[Part::bend(5)],
        ] {
            expect_group(group)?;
        }
        Ok(())
    }

    pub fn parts(&self, ch: ChannelId) -> &[Part] {
        &self.assignments[ch.0]
    }

    pub fn channel_of(&self, part: Part) -> Option<ChannelId> {
        self.assignments.iter().position(|parts| parts.contains(&part)).map(ChannelId)
    }

    /// Whether the channel drives extension parts.
    pub fn is_extension(&self, ch: ChannelId) -> bool {
        self.assignments[ch.0].iter().all(|p| p.kind == PartKind::Extension)
    }

    /// Per-part pressure, indexed by [`Part::index`].
    pub fn fanout(&self, channel_pressures: &[f64; CHANNEL_COUNT]) -> [f64; PART_COUNT] {
        let mut out = [0.0; PART_COUNT];
        for (parts, p) in self.assignments.iter().zip(channel_pressures) {
            for part in parts {
                out[part.index()] = *p;
            }
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PlantError> {
        let file: ChannelMapFile = toml::from_str(text).map_err(|e| PlantError::InvalidMap(e.to_string()))?;
        let mut assignments: [Vec<Part>; CHANNEL_COUNT] = Default::default();
        let mut ids = BTreeSet::new();
        for entry in file.channel {
            if !(1..=CHANNEL_COUNT).contains(&entry.id) || !ids.insert(entry.id) {
                return Err(PlantError::InvalidMap(format!("bad or repeated channel id {}", entry.id)));
            }
            assignments[entry.id - 1] = entry.parts;
        }
        ChannelMap::new(assignments)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ChannelMapFile {
            channel: self
                .assignments
                .iter()
                .enumerate()
                .map(|(i, parts)| ChannelEntry { id: i + 1, parts: parts.clone() })
                .collect(),
        };
        toml::to_string(&file).expect("channel map serializes")
    }
}
