//! Fixtures shared by the benchmarks.

use pneuhex_core::harness::fit::synthetic_samples;
use pneuhex_core::harness::scenario::FitConfig;
use pneuhex_core::models::{CalibrationSample, CaseLabel};
use pneuhex_core::{ExperimentKind, ModelSet, Scenario};

/// Noisy single-side extension samples, four repeats per sweep pressure.
pub fn one_w_samples() -> Vec<CalibrationSample> {
    synthetic_samples(&ModelSet::default(), &FitConfig::default(), 7)
        .expect("default fit config is valid")
        .into_iter()
        .filter(|s| s.case == CaseLabel::OneW)
        .collect()
}

/// Line tracking from a single start angle, cut to `seconds` of simulated time.
pub fn short_line_run(seconds: f64) -> Scenario {
    let mut s = Scenario::preset(ExperimentKind::TrackLine);
    s.max_duration_s = seconds;
    if let Some(t) = s.tracking.as_mut() {
        t.start_angles_deg = vec![15.0];
    }
    s
}
