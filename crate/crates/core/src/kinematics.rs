//! Quasi-static body pose from leg lengths.
//!
//! Each leg is a revolute joint (bending, `theta`) followed by a prismatic
//! joint (extension, `L`). The active tripod stands on one leg on one side
//! and two legs on the other; the paired outer legs always share a length.
//! Height and roll of the body center follow from the two side lengths.
//! Pitch is not modeled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, ModelSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotGeometry {
    pub body_length_mm: f64,
    pub body_width_mm: f64,
    /// Distance from the body frame to the start of the bending part.
    pub frame_offset_mm: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        RobotGeometry { body_length_mm: 230.0, body_width_mm: 140.0, frame_offset_mm: 65.0 }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let all = [self.body_length_mm, self.body_width_mm, self.frame_offset_mm];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(KinematicsError::InvalidGeometry(*self))
        }
    }
}

/// Joint values of one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegState {
    pub leg_id: u8,
    pub theta_rad: f64,
    /// Extension including the distance to the cut of the bending part.
    pub length_mm: f64,
}

/// Planar position (m) and height (mm) of the body center, with heading
/// measured counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyPose {
    pub x_m: f64,
    pub y_m: f64,
    pub z_mm: f64,
    pub heading_rad: f64,
    pub roll_rad: f64,
}

/// Lengths of the two sides of the active tripod.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripodLengths {
    /// Shared length of the two paired outer legs (L1 = L3 or L4 = L6).
    pub double_mm: f64,
    /// Length of the lone middle leg (L5 or L2).
    pub single_mm: f64,
}

/// Gauge pressures for the two sides of a tripod.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidePressures {
    pub single_kpa: f64,
    pub double_kpa: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("geometry dimensions must be positive: {0:?}")]
    InvalidGeometry(RobotGeometry),
    #[error("roll {0} rad outside (-pi/2, pi/2)")]
    RollOutOfRange(f64),
    #[error("{side} length {length:.3} mm outside reachable [{min:.3}, {max:.3}] mm")]
    Infeasible { side: &'static str, length: f64, min: f64, max: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The two alternating leg sets. Legs 1-3 are on the right, 4-6 on the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tripod {
    /// Legs 1, 3 (right, paired) and 5 (left).
    A,
    /// Legs 4, 6 (left, paired) and 2 (right).
    B,
}

impl Tripod {
    pub fn legs(self) -> [u8; 3] {
        match self {
            Tripod::A => [1, 3, 5],
            Tripod::B => [2, 4, 6],
        }
    }

    pub fn double_legs(self) -> [u8; 2] {
        match self {
            Tripod::A => [1, 3],
            Tripod::B => [4, 6],
        }
    }

    pub fn single_leg(self) -> u8 {
        match self {
            Tripod::A => 5,
            Tripod::B => 2,
        }
    }

    pub fn other(self) -> Tripod {
        match self {
            Tripod::A => Tripod::B,
            Tripod::B => Tripod::A,
        }
    }

    pub fn contains(self, leg: u8) -> bool {
        self.legs().contains(&leg)
    }

    /// Roll with the sign convention that positive lifts the left side.
    pub fn roll(self, lengths: TripodLengths, geom: &RobotGeometry) -> f64 {
        match self {
            Tripod::A => body_roll(lengths.double_mm, lengths.single_mm, geom),
            Tripod::B => body_roll(lengths.single_mm, lengths.double_mm, geom),
        }
    }
}

pub fn is_left(leg: u8) -> bool {
    (4..=6).contains(&leg)
}

/// Height of the body center, mm.
pub fn body_height(l_double: f64, l_single: f64, geom: &RobotGeometry) -> f64 {
    geom.frame_offset_mm + (l_double + l_single) / 2.0
}

/// Roll about the body x axis, rad.
pub fn body_roll(l_double: f64, l_single: f64, geom: &RobotGeometry) -> f64 {
    (l_single - l_double).atan2(geom.body_width_mm / 2.0)
}

/// Reachable length interval per tripod side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthLimits {
    pub single: (f64, f64),
    pub double: (f64, f64),
}

impl LengthLimits {
    pub fn from_models(models: &ModelSet) -> Self {
        LengthLimits { single: models.one_w.output_bounds(), double: models.two_w.output_bounds() }
    }

    pub fn unbounded() -> Self {
        LengthLimits { single: (f64::NEG_INFINITY, f64::INFINITY), double: (f64::NEG_INFINITY, f64::INFINITY) }
    }
}

/// Side lengths producing height `h_mm` and roll `phi_rad`.
pub fn inverse_pose(
    h_mm: f64,
    phi_rad: f64,
    geom: &RobotGeometry,
    limits: &LengthLimits,
) -> Result<TripodLengths, KinematicsError> {
    geom.validate()?;
    if !(phi_rad.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(KinematicsError::RollOutOfRange(phi_rad));
    }
    let sum = 2.0 * (h_mm - geom.frame_offset_mm);
    let diff = geom.body_width_mm / 2.0 * phi_rad.tan();
    let lengths = TripodLengths { double_mm: (sum - diff) / 2.0, single_mm: (sum + diff) / 2.0 };
    for (side, length, (min, max)) in
        [("single-side", lengths.single_mm, limits.single), ("double-side", lengths.double_mm, limits.double)]
    {
        if !(length >= min && length <= max) {
            return Err(KinematicsError::Infeasible { side, length, min, max });
        }
    }
    Ok(lengths)
}

/// Pressures that realize the given side lengths under the extension models.
pub fn lengths_to_pressures(l_single: f64, l_double: f64, models: &ModelSet) -> Result<SidePressures, KinematicsError> {
    Ok(SidePressures {
        single_kpa: models.one_w.invert_length(l_single)?,
        double_kpa: models.two_w.invert_length(l_double)?,
    })
}

/// Side lengths produced by the given pressures, clamped into model range.
pub fn pressures_to_lengths(p: SidePressures, models: &ModelSet) -> TripodLengths {
    TripodLengths {
        single_mm: models.one_w.eval_clamped(p.single_kpa),
        double_mm: models.two_w.eval_clamped(p.double_kpa),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g() -> RobotGeometry {
        RobotGeometry::default()
    }

    #[test]
    fn height_examples() {
        assert_abs_diff_eq!(body_height(67.0, 67.0, &g()), 132.0);
        assert_abs_diff_eq!(body_height(53.801, 56.821, &g()), 120.311, epsilon = 1e-9);
        assert_abs_diff_eq!(body_height(0.0, 0.0, &g()), 65.0);
    }

    #[test]
    fn roll_examples() {
        assert_abs_diff_eq!(body_roll(55.0, 67.0, &g()), 0.1697, epsilon = 1e-4);
        assert_abs_diff_eq!(body_roll(55.0, 67.0, &g()), 0.17, epsilon = 1e-3);
        assert_eq!(body_roll(60.0, 60.0, &g()), 0.0);
        assert_abs_diff_eq!(body_roll(67.0, 55.0, &g()), -0.1697, epsilon = 1e-4);
        // agrees with arctan(2 (L5 - L1) / W_B)
        assert_abs_diff_eq!(body_roll(55.0, 67.0, &g()), (24.0f64 / 140.0).atan(), epsilon = 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let free = LengthLimits::unbounded();
        let l = inverse_pose(132.0, 0.0, &g(), &free).unwrap();
        assert_abs_diff_eq!(l.double_mm, 67.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.single_mm, 67.0, epsilon = 1e-12);

        let phi = body_roll(55.0, 67.0, &g());
        let l = inverse_pose(126.0, phi, &g(), &free).unwrap();
        assert_abs_diff_eq!(l.double_mm, 55.0, epsilon = 1e-9);
        assert_abs_diff_eq!(l.single_mm, 67.0, epsilon = 1e-9);

        let phi = body_roll(53.801, 56.821, &g());
        let h = body_height(53.801, 56.821, &g());
        let l = inverse_pose(h, phi, &g(), &free).unwrap();
        assert_abs_diff_eq!(l.double_mm, 53.801, epsilon = 1e-9);
        assert_abs_diff_eq!(l.single_mm, 56.821, epsilon = 1e-9);
    }

    #[test]
    fn inverse_reports_violated_bound() {
        let limits = LengthLimits::from_models(&ModelSet::default());
        match inverse_pose(200.0, 0.0, &g(), &limits).unwrap_err() {
            KinematicsError::Infeasible { side, length, max, .. } => {
                assert_eq!(side, "single-side");
                assert_abs_diff_eq!(length, 135.0);
                assert!(max < 135.0);
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(inverse_pose(130.0, 1.6, &g(), &limits), Err(KinematicsError::RollOutOfRange(_))));
    }

    #[test]
    fn pressures_for_extreme_heights() {
        let m = ModelSet::default();
        let high = lengths_to_pressures(67.0, 67.0, &m).unwrap();
        assert_abs_diff_eq!(high.single_kpa, 16.93, epsilon = 0.05);
        assert_abs_diff_eq!(high.double_kpa, 20.00, epsilon = 0.05);
        let low = lengths_to_pressures(55.0, 55.0, &m).unwrap();
        assert_abs_diff_eq!(low.single_kpa, 2.26, epsilon = 0.05);
        let zero = lengths_to_pressures(53.801, 56.821, &m).unwrap();
        assert_abs_diff_eq!(zero.single_kpa, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(zero.double_kpa, 0.0, epsilon = 1e-6);
        assert!(lengths_to_pressures(120.0, 60.0, &m).is_err());
    }

    #[test]
    fn tripod_roll_mirrors() {
        let l = TripodLengths { double_mm: 55.0, single_mm: 67.0 };
        // A: the single leg (5) is on the left, so a longer single side rolls left-up.
        assert!(Tripod::A.roll(l, &g()) > 0.0);
        assert!(Tripod::B.roll(l, &g()) < 0.0);
        assert_eq!(Tripod::A.other(), Tripod::B);
        assert!(Tripod::B.contains(4) && !Tripod::B.contains(5));
    }

    #[test]
    fn geometry_validation() {
        let bad = RobotGeometry { body_width_mm: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(inverse_pose(120.0, 0.0, &bad, &LengthLimits::unbounded()).is_err());
    }
}
