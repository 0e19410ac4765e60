//! Pressure-to-deformation models.
//!
//! Each leg part responds to gauge pressure with a low-order polynomial:
//! extension parts elongate quadratically, bending parts curl linearly.
//! The shipped defaults are the identified coefficients; re-fitted models
//! can be loaded from a model file and slot in unchanged.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Calibration / model case.
///
/// `OneW` / `TwoW` are the single- and double-leg tripod sides measured
/// with the opposite side held at 30 kPa; the `*Wo` variants are the same
/// sides with the opposite side unactuated. `Theta` is the bending model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    OneW,
    TwoW,
    OneWo,
    TwoWo,
    Theta,
}

impl CaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::OneW => "one_w",
            CaseLabel::TwoW => "two_w",
            CaseLabel::OneWo => "one_wo",
            CaseLabel::TwoWo => "two_wo",
            CaseLabel::Theta => "theta",
        }
    }

    /// Unit of the measured response for this case.
    pub fn unit(self) -> OutputUnit {
        match self {
            CaseLabel::Theta => OutputUnit::Radian,
            _ => OutputUnit::Millimeter,
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputUnit {
    #[serde(rename = "mm")]
    Millimeter,
    #[serde(rename = "rad")]
    Radian,
}

impl OutputUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputUnit::Millimeter => "mm",
            OutputUnit::Radian => "rad",
        }
    }
}

/// Closed gauge-pressure interval in kPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PressureRange {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for PressureRange {
    fn from(v: [f64; 2]) -> Self {
        PressureRange { min: v[0], max: v[1] }
    }
}

impl From<PressureRange> for [f64; 2] {
    fn from(r: PressureRange) -> Self {
        [r.min, r.max]
    }
}

impl PressureRange {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        let r = PressureRange { min, max };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min >= self.max {
            return Err(ModelError::InvalidModel(format!(
                "pressure range [{}, {}] must be finite and non-empty",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.min && p <= self.max
    }

    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("pressure {pressure} kPa outside {case} range: {bound}")]
    OutOfRange { case: CaseLabel, pressure: f64, bound: RangeBound },
    #[error("{case}: target {target} {unit} not reachable, achievable range [{min}, {max}]")]
    InfeasibleTarget { case: CaseLabel, target: f64, min: f64, max: f64, unit: &'static str },
    #[error("{case} model outputs {actual}, expected {expected}")]
    WrongUnit { case: CaseLabel, expected: &'static str, actual: &'static str },
}

/// Which side of a [`PressureRange`] was violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeBound {
    Below(f64),
    Above(f64),
}

impl fmt::Display for RangeBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeBound::Below(b) => write!(f, "below minimum {b} kPa"),
            RangeBound::Above(b) => write!(f, "above maximum {b} kPa"),
        }
    }
}

/// Polynomial pressure model, coefficients highest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct PolyModel {
    coeffs: Vec<f64>,
    range: PressureRange,
    unit: OutputUnit,
    case: CaseLabel,
}

impl PolyModel {
    pub fn new(case: CaseLabel, coeffs: Vec<f64>, range: PressureRange, unit: OutputUnit) -> Result<Self, ModelError> {
        if coeffs.is_empty() || coeffs.len() > 3 {
            return Err(ModelError::InvalidModel(format!(
                "{case}: expected 1 to 3 coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidModel(format!("{case}: non-finite coefficient")));
        }
        range.validate()?;
        Ok(PolyModel { coeffs, range, unit, case })
    }

    /// Extension model for the single-leg tripod side: `0.017p² + 0.492p + 53.801` mm.
    pub fn one_w() -> Self {
        PolyModel {
            coeffs: vec![0.017, 0.492, 53.801],
            range: PressureRange { min: -20.0, max: 36.0 },
            unit: OutputUnit::Millimeter,
            case: CaseLabel::OneW,
        }
    }

    /// Extension model for the double-leg tripod side: `0.010p² + 0.309p + 56.821` mm.
    pub fn two_w() -> Self {
        PolyModel {
            coeffs: vec![0.010, 0.309, 56.821],
            range: PressureRange { min: -20.0, max: 36.0 },
            unit: OutputUnit::Millimeter,
            case: CaseLabel::TwoW,
        }
    }

    /// Bending angle model: `0.010p + 0.0153` rad.
    pub fn theta() -> Self {
        PolyModel {
            coeffs: vec![0.010, 0.0153],
            range: PressureRange { min: -20.0, max: 50.0 },
            unit: OutputUnit::Radian,
            case: CaseLabel::Theta,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn range(&self) -> PressureRange {
        self.range
    }

    pub fn unit(&self) -> OutputUnit {
        self.unit
    }

    pub fn case(&self) -> CaseLabel {
        self.case
    }

    /// Evaluates the model at `p`, which must lie within the model range.
    pub fn eval(&self, p: f64) -> Result<f64, ModelError> {
        if p < self.range.min || p.is_nan() {
            return Err(ModelError::OutOfRange {
                case: self.case,
                pressure: p,
                bound: RangeBound::Below(self.range.min),
            });
        }
        if p > self.range.max {
            return Err(ModelError::OutOfRange {
                case: self.case,
                pressure: p,
                bound: RangeBound::Above(self.range.max),
            });
        }
        Ok(self.horner(p))
    }

    /// Evaluates at `p` clamped into the model range.
    pub fn eval_clamped(&self, p: f64) -> f64 {
        self.horner(self.range.clamp(p))
    }

    fn horner(&self, p: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc * p + c)
    }

    /// Minimum and maximum output over the model range.
    pub fn output_bounds(&self) -> (f64, f64) {
        let mut candidates = vec![self.horner(self.range.min), self.horner(self.range.max)];
        if let [a, b, _] = self.coeffs[..] {
            if a != 0.0 {
                let vertex = -b / (2.0 * a);
                if self.range.contains(vertex) {
                    candidates.push(self.horner(vertex));
                }
            }
        }
        let min = candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let max = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Pressure producing `target` mm on an extension model.
    ///
    /// Returns the root inside the model range; the larger root if both are.
    pub fn invert_length(&self, target: f64) -> Result<f64, ModelError> {
        if self.unit != OutputUnit::Millimeter {
            return Err(ModelError::WrongUnit {
                case: self.case,
                expected: OutputUnit::Millimeter.as_str(),
                actual: self.unit.as_str(),
            });
        }
        self.invert(target)
    }

    /// Pressure producing `target` in the model's own unit.
    pub fn invert(&self, target: f64) -> Result<f64, ModelError> {
        let infeasible = || {
            let (min, max) = self.output_bounds();
            ModelError::InfeasibleTarget { case: self.case, target, min, max, unit: self.unit.as_str() }
        };
        if !target.is_finite() {
            return Err(infeasible());
        }
        let roots = match self.coeffs[..] {
            [a, b, c] if a != 0.0 => quadratic_roots(a, b, c - target),
            [_, b, c] | [b, c] => {
                if b == 0.0 {
                    vec![]
                } else {
                    vec![(target - c) / b]
                }
            }
            _ => vec![],
        };
        // Tolerate round-off right at the range edges.
        let slack = 1e-9 * (1.0 + self.range.max.abs().max(self.range.min.abs()));
        roots
            .into_iter()
            .filter(|r| *r >= self.range.min - slack && *r <= self.range.max + slack)
            .map(|r| self.range.clamp(r))
            .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
            .ok_or_else(infeasible)
    }
}

/// Real roots of `a x² + b x + c`, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        // b == 0 and c == 0
        return vec![0.0];
    }
    vec![q / a, c / q]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelRecord {
    case: CaseLabel,
    degree: usize,
    coeffs: Vec<f64>,
    range_kpa: PressureRange,
    unit: OutputUnit,
}

impl TryFrom<ModelRecord> for PolyModel {
    type Error = ModelError;

    fn try_from(r: ModelRecord) -> Result<Self, Self::Error> {
        if r.coeffs.len() != r.degree + 1 {
            return Err(ModelError::InvalidModel(format!(
                "{}: degree {} needs {} coefficients, got {}",
                r.case,
                r.degree,
                r.degree + 1,
                r.coeffs.len()
            )));
        }
        PolyModel::new(r.case, r.coeffs, r.range_kpa, r.unit)
    }
}

impl From<PolyModel> for ModelRecord {
    fn from(m: PolyModel) -> Self {
        ModelRecord { case: m.case, degree: m.degree(), coeffs: m.coeffs, range_kpa: m.range, unit: m.unit }
    }
}

/// The three models the controller stack needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub one_w: PolyModel,
    pub two_w: PolyModel,
    pub theta: PolyModel,
}

impl Default for ModelSet {
    fn default() -> Self {
        ModelSet { one_w: PolyModel::one_w(), two_w: PolyModel::two_w(), theta: PolyModel::theta() }
    }
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("reading model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing model file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serializing model file: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("model file has no {0} model")]
    Missing(CaseLabel),
    #[error("model file lists {0} twice")]
    Duplicate(CaseLabel),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    model: Vec<PolyModel>,
}

impl ModelSet {
    /// Parses a model file. Cases not listed fall back to the defaults;
    /// unused cases (`one_wo`, `two_wo`) are accepted and ignored.
    pub fn from_toml_str(text: &str) -> Result<Self, ModelFileError> {
        let file: ModelFile = toml::from_str(text)?;
        let mut set = ModelSet::default();
        let mut seen = Vec::new();
        for m in file.model {
            if seen.contains(&m.case) {
                return Err(ModelFileError::Duplicate(m.case));
            }
            seen.push(m.case);
            match m.case {
                CaseLabel::OneW => set.one_w = m,
                CaseLabel::TwoW => set.two_w = m,
                CaseLabel::Theta => set.theta = m,
                CaseLabel::OneWo | CaseLabel::TwoWo => {}
            }
        }
        set.check_units()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ModelFileError> {
        models_to_toml(&[self.one_w.clone(), self.two_w.clone(), self.theta.clone()])
    }

    fn check_units(&self) -> Result<(), ModelError> {
        for (m, unit) in [
            (&self.one_w, OutputUnit::Millimeter),
            (&self.two_w, OutputUnit::Millimeter),
            (&self.theta, OutputUnit::Radian),
        ] {
            if m.unit != unit {
                return Err(ModelError::WrongUnit { case: m.case, expected: unit.as_str(), actual: m.unit.as_str() });
            }
        }
        Ok(())
    }
}

/// Serializes an arbitrary list of models in model-file format.
pub fn models_to_toml(models: &[PolyModel]) -> Result<String, ModelFileError> {
    Ok(toml::to_string(&ModelFile { model: models.to_vec() })?)
}

/// One steady-state calibration measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    #[serde(rename = "case")]
    pub case: CaseLabel,
    pub pressure_kpa: f64,
    pub response: f64,
    pub unit: OutputUnit,
}

impl CalibrationSample {
    pub fn new(case: CaseLabel, pressure_kpa: f64, response: f64) -> Self {
        CalibrationSample { case, pressure_kpa, response, unit: case.unit() }
    }
}

/// Pressures swept during extension calibration: -20 to 36 kPa every 4 kPa.
pub fn extension_sweep() -> Vec<f64> {
    (0..15).map(|i| -20.0 + 4.0 * i as f64).collect()
}

#[derive(Debug, Error)]
pub enum CalibrationFileError {
    #[error("calibration csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("calibration csv: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_calibration_csv<R: std::io::Read>(reader: R) -> Result<Vec<CalibrationSample>, CalibrationFileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(CalibrationFileError::from)).collect()
}

pub fn write_calibration_csv<W: std::io::Write>(
    writer: W,
    samples: &[CalibrationSample],
) -> Result<(), CalibrationFileError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degree must be 1 or 2, got {0}")]
    UnsupportedDegree(usize),
    #[error("degenerate data: {distinct} distinct pressures, degree {degree} needs {needed}")]
    Degenerate { distinct: usize, degree: usize, needed: usize },
    #[error("samples mix cases {0} and {1}")]
    MixedCases(CaseLabel, CaseLabel),
    #[error("non-finite sample value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: PolyModel,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least-squares polynomial fit of degree 1 or 2.
pub fn fit_polynomial(samples: &[CalibrationSample], degree: usize) -> Result<FitResult, FitError> {
    if !(1..=2).contains(&degree) {
        return Err(FitError::UnsupportedDegree(degree));
    }
    let needed = degree + 1;
    let Some(first) = samples.first() else {
        return Err(FitError::Degenerate { distinct: 0, degree, needed });
    };
    if let Some(other) = samples.iter().find(|s| s.case != first.case) {
        return Err(FitError::MixedCases(first.case, other.case));
    }
    if samples.iter().any(|s| !s.pressure_kpa.is_finite() || !s.response.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let mut pressures: Vec<f64> = samples.iter().map(|s| s.pressure_kpa).collect();
    pressures.sort_by(f64::total_cmp);
    pressures.dedup();
    if pressures.len() < needed {
        return Err(FitError::Degenerate { distinct: pressures.len(), degree, needed });
    }
    let p_min = pressures[0];
    let p_max = pressures[pressures.len() - 1];

    // Columns p^degree .. p^0 so the solution comes out highest degree first.
    let design = DMatrix::from_fn(samples.len(), needed, |i, j| samples[i].pressure_kpa.powi((degree - j) as i32));
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.response));
    let qr = design.clone().qr();
    let qt_b = qr.q().transpose() * &rhs;
    let coeffs = qr.r().solve_upper_triangular(&qt_b).ok_or(FitError::Degenerate {
        distinct: pressures.len(),
        degree,
        needed,
    })?;

    let fitted = &design * &coeffs;
    let residuals: Vec<f64> = rhs.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let r_squared = r_squared(rhs.as_slice(), &residuals);

    let model = PolyModel::new(
        first.case,
        coeffs.iter().copied().collect(),
        PressureRange { min: p_min, max: p_max },
        first.unit,
    )
    .map_err(|_| FitError::NonFinite)?;
    Ok(FitResult { model, r_squared, residuals })
}

/// Coefficient of determination `1 - SS_res / SS_tot`, floored at 0.
pub fn r_squared(observed: &[f64], residuals: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}
