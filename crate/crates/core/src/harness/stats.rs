//! Error statistics and reference comparison.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Mean and population standard deviation of an error signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub unit: String,
    #[serde(default)]
    pub count: usize,
}

impl ErrorStats {
    /// Statistics over `samples`. Empty input yields NaN mean and std.
    pub fn from_samples(name: &str, unit: &str, samples: &[f64]) -> Self {
        let n = samples.len();
        let (mean, std) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        ErrorStats { name: name.into(), mean, std, unit: unit.into(), count: n }
    }
}

impl fmt::Display for ErrorStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<22} {:>12.6} ± {:<10.6} {} (n={})", self.name, self.mean, self.std, self.unit, self.count)
    }
}

/// Indices of local maxima whose prominence is at least `min_prominence`.
///
/// A flat top counts once, at its first sample. The first and last
/// samples are never maxima.
pub fn local_maxima(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.retain(|&p| prominence(values, p) >= min_prominence);
    peaks
}

fn prominence(values: &[f64], peak: usize) -> f64 {
    let v = values[peak];
    let mut left_min = v;
    for &x in values[..peak].iter().rev() {
        if x > v {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = v;
    for &x in &values[peak + 1..] {
        if x > v {
            break;
        }
        right_min = right_min.min(x);
    }
    v - left_min.max(right_min)
}

/// Expected statistics for one variable with its acceptance band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub name: String,
    pub unit: String,
    pub mean: f64,
    pub std: f64,
    pub mean_tol: f64,
    pub std_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    #[serde(rename = "variable")]
    pub entries: Vec<ReferenceEntry>,
}

impl Reference {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Reference that reproduces `stats` exactly with the given bands.
    pub fn from_stats(stats: &[ErrorStats], mean_tol: f64, std_tol: f64) -> Self {
        Reference {
            entries: stats
                .iter()
                .map(|s| ReferenceEntry {
                    name: s.name.clone(),
                    unit: s.unit.clone(),
                    mean: s.mean,
                    std: s.std,
                    mean_tol,
                    std_tol,
                    note: None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for ComparisonLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub lines: Vec<ComparisonLine>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Checks every reference variable: passes iff `|mean - ref.mean| <= mean_tol`
/// and `|std - ref.std| <= std_tol`. Variables missing from `stats` fail.
pub fn compare_to_reference(stats: &[ErrorStats], reference: &Reference) -> ComparisonReport {
    let lines = reference
        .entries
        .iter()
        .map(|r| match stats.iter().find(|s| s.name == r.name) {
            None => ComparisonLine { name: r.name.clone(), pass: false, detail: format!("{} absent", r.name) },
            Some(s) => {
                let dm = (s.mean - r.mean).abs();
                let ds = (s.std - r.std).abs();
                ComparisonLine {
                    name: r.name.clone(),
                    pass: dm <= r.mean_tol && ds <= r.std_tol,
                    detail: format!(
                        "mean {:.6} vs {:.6} (|Δ| {:.6} <= {}), std {:.6} vs {:.6} (|Δ| {:.6} <= {}) {}",
                        s.mean, r.mean, dm, r.mean_tol, s.std, r.std, ds, r.std_tol, s.unit
                    ),
                }
            }
        })
        .collect();
    ComparisonReport { lines }
}
