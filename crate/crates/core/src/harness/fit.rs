//! Calibration fit experiment.

use std::fs::File;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::logs::{fmt_f, Table};
use super::scenario::{FitConfig, Scenario};
use super::{Episode, ErrorStats, HarnessError};
use crate::models::{
    extension_sweep, fit_polynomial, models_to_toml, read_calibration_csv, CalibrationSample, CaseLabel, ModelSet,
    PolyModel,
};

/// Pressures swept during bending calibration, kPa.
pub fn bending_sweep() -> Vec<f64> {
    (0..15).map(|i| -20.0 + 5.0 * i as f64).collect()
}

/// Noisy samples of `models` at the calibration sweeps.
pub fn synthetic_samples(
    models: &ModelSet,
    cfg: &FitConfig,
    seed: u64,
) -> Result<Vec<CalibrationSample>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bad = |e| HarnessError::Config(format!("fit noise: {e}"));
    let ext = Normal::new(0.0, cfg.extension_noise_mm).map_err(bad)?;
    let bend = Normal::new(0.0, cfg.theta_noise_rad).map_err(bad)?;
    let mut out = Vec::new();
    let cases: [(&PolyModel, Vec<f64>, &Normal<f64>); 3] = [
        (&models.one_w, extension_sweep(), &ext),
        (&models.two_w, extension_sweep(), &ext),
        (&models.theta, bending_sweep(), &bend),
    ];
    for (model, sweep, noise) in cases {
        for &p in &sweep {
            for _ in 0..cfg.repeats {
                let clean = model.eval(p)?;
                out.push(CalibrationSample::new(model.case(), p, clean + noise.sample(&mut rng)));
            }
        }
    }
    Ok(out)
}

fn degree_for(case: CaseLabel) -> usize {
    match case {
        CaseLabel::Theta => 1,
        _ => 2,
    }
}

pub(super) fn run_fit(scenario: &Scenario) -> Result<Episode, HarnessError> {
    let cfg = scenario.fit.clone().unwrap_or_default();
    let samples = match &cfg.calibration_file {
        Some(path) => read_calibration_csv(File::open(path).map_err(|e| HarnessError::io(path, e))?)?,
        None => {
            let models = match &scenario.models_file {
                Some(path) => ModelSet::load(path)?,
                None => ModelSet::default(),
            };
            synthetic_samples(&models, &cfg, scenario.seed)?
        }
    };

    let mut cases: Vec<CaseLabel> = Vec::new();
    for s in &samples {
        if !cases.contains(&s.case) {
            cases.push(s.case);
        }
    }
    if cases.is_empty() {
        return Err(HarnessError::Config("no calibration samples".into()));
    }

    let mut ep = Episode::default();
    let mut table = Table::new("fit_residuals", &["case", "pressure_kpa", "response", "fitted", "residual", "unit"]);
    let mut coeffs = Table::new("fit_coefficients", &["case", "degree", "c0", "c1", "c2", "r_squared"]);
    for case in cases {
        let group: Vec<CalibrationSample> = samples.iter().copied().filter(|s| s.case == case).collect();
        let fit = fit_polynomial(&group, degree_for(case))?;
        for (s, r) in group.iter().zip(&fit.residuals) {
            table.push(vec![
                case.as_str().into(),
                fmt_f(s.pressure_kpa),
                fmt_f(s.response),
                fmt_f(s.response - r),
                fmt_f(*r),
                s.unit.as_str().into(),
            ]);
        }
        let c = fit.model.coeffs();
        let mut row = vec![case.as_str().to_string(), fit.model.degree().to_string()];
        // highest degree first, padded to three columns
        for i in 0..3 {
            row.push(c.len().checked_sub(3 - i).map_or(String::new(), |j| fmt_f(c[j])));
        }
        row.push(fmt_f(fit.r_squared));
        coeffs.push(row);

        let unit = fit.model.unit().as_str();
        ep.stats.push(ErrorStats::from_samples(&format!("residual_{}", case.as_str()), unit, &fit.residuals));
        ep.stats.push(ErrorStats::from_samples(&format!("r_squared_{}", case.as_str()), "1", &[fit.r_squared]));
        ep.fits.push(fit);
    }
    let models: Vec<PolyModel> = ep.fits.iter().map(|f| f.model.clone()).collect();
    ep.files.push(("fitted_models.toml".into(), models_to_toml(&models)?));
    ep.tables.push(table);
    ep.tables.push(coeffs);
    Ok(ep)
}
