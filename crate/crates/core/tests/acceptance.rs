//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pneuhex_core::controller::Mode;
use pneuhex_core::harness::scenario::{StepConfig, StepRow};
use pneuhex_core::harness::{run, Episode, ExperimentKind, Scenario};
use pneuhex_core::kinematics::{body_height, body_roll, lengths_to_pressures, RobotGeometry};
use pneuhex_core::models::{fit_polynomial, CalibrationSample, CaseLabel, ModelSet, PolyModel};

struct Gate {
    results: Vec<(String, bool)>,
}

impl Gate {
    fn check(&mut self, id: &str, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {title}: {detail}");
        self.results.push((id.to_string(), pass));
    }
}

/// Published model coefficients, written out independently of the library.
const ONE_W: [f64; 3] = [0.017, 0.492, 53.801];
const TWO_W: [f64; 3] = [0.010, 0.309, 56.821];
const THETA: [f64; 2] = [0.010, 0.0153];

fn quad(c: [f64; 3], p: f64) -> f64 {
    c[0] * p * p + c[1] * p + c[2]
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed())
}

fn c1_inversion(g: &mut Gate) {
    let models = ModelSet::default();
    let (hi, dt_hi) = timed(|| lengths_to_pressures(67.0, 67.0, &models).unwrap());
    let (lo, dt_lo) = timed(|| lengths_to_pressures(55.0, 55.0, &models).unwrap());
    let worst = dt_hi.max(dt_lo);
    let pass = (hi.single_kpa - 16.93).abs() <= 0.05
        && (lo.single_kpa - 2.26).abs() <= 0.05
        && worst < Duration::from_millis(1);
    g.check(
        "1",
        "pressure inversion",
        pass,
        format!(
            "single side {:.4} kPa (want 16.93 ± 0.05), {:.4} kPa (want 2.26 ± 0.05); slowest call {:?} (< 1 ms)",
            hi.single_kpa, lo.single_kpa, worst
        ),
    );
}

fn c2_height(g: &mut Gate) {
    let geom = RobotGeometry::default();
    let models = ModelSet::default();
    let floor = body_height(TWO_W[2], ONE_W[2], &geom);
    // oracle for the floor: 65 + (53.801 + 56.821) / 2
    let oracle = 65.0 + (53.801 + 56.821) / 2.0;
    let p_double = models.two_w.invert_length(67.0).unwrap();
    let top = body_height(quad(TWO_W, p_double), quad(ONE_W, 16.93), &geom);
    let pass = (floor - oracle).abs() < 1e-12 && (floor - 120.0).abs() <= 0.5 && (top - 132.0).abs() <= 0.1;
    g.check(
        "2",
        "height model",
        pass,
        format!("floor {floor:.3} mm (120 ± 0.5); 16.93 kPa / {p_double:.3} kPa give {top:.3} mm (132.0 ± 0.1)"),
    );
}

fn c3_roll(g: &mut Gate) {
    let geom = RobotGeometry::default();
    let phi = body_roll(55.0, 67.0, &geom);
    let oracle = (12.0f64 / 70.0).atan();
    let pass = (phi - oracle).abs() < 1e-12 && (phi - 0.17).abs() <= 0.001;
    g.check("3", "roll model", pass, format!("L5 - L1 = 12 mm gives {phi:.4} rad (0.17 ± 0.001)"));
}

fn c4_step_response(g: &mut Gate) {
    let mut lines = Vec::new();
    let mut pass = true;
    for desired in [10.0, 20.0, 30.0] {
        let mut s = Scenario::preset(ExperimentKind::StepResponse);
        s.plant = Default::default();
        s.step = Some(StepConfig {
            commands: vec![StepRow { t_s: 0.0, mode: Mode::Pressurize, desired_kpa: desired }],
            hold_s: 4.0,
            ..Default::default()
        });
        let (ep, wall) = timed(|| run(&s).unwrap());
        let seg = ep.trials[0].steps[0];
        let ctl = &ep.tables[0];
        let measured: f64 = ctl.rows.last().unwrap()[3].parse().unwrap();
        let lo = desired - seg.epsilon_kpa;
        let hi = desired + seg.one_tick_rise_kpa;
        let ok = measured >= lo
            && measured <= hi
            && seg.valve_transitions <= 2
            && ep.trials[0].sim_time_s < 5.0
            && wall < Duration::from_millis(100);
        pass &= ok;
        lines.push(format!(
            "{desired} kPa -> {measured:.3} in [{lo}, {hi:.3}], {} transitions, {} s sim, {:?} wall",
            seg.valve_transitions, ep.trials[0].sim_time_s, wall
        ));
    }
    g.check("4", "controller step response", pass, lines.join("; "));
}

/// Least squares through the normal equations, solved by Cramer's rule.
fn normal_equations(p: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (&pi, &yi) in p.iter().zip(y) {
        let row: Vec<f64> = (0..n).map(|j| pi.powi((degree - j) as i32)).collect();
        for r in 0..n {
            b[r] += row[r] * yi;
            for c in 0..n {
                a[r][c] += row[r] * row[c];
            }
        }
    }
    let det = |m: &Vec<Vec<f64>>| -> f64 {
        match n {
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    };
    let d = det(&a);
    (0..n)
        .map(|col| {
            let mut m = a.clone();
            for r in 0..n {
                m[r][col] = b[r];
            }
            det(&m) / d
        })
        .collect()
}

fn r2_oracle(p: &[f64], y: &[f64], coeffs: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let deg = coeffs.len() - 1;
    let ss_res: f64 = p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let f: f64 = coeffs.iter().enumerate().map(|(j, c)| c * pi.powi((deg - j) as i32)).sum();
            (yi - f).powi(2)
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn c5_fit(g: &mut Gate) {
    let mut pass = true;
    let mut worst_coeff = 0.0f64;
    let mut worst_r2 = 0.0f64;
    let sweeps: [(CaseLabel, Vec<f64>, Vec<f64>); 3] = [
        (CaseLabel::OneW, (0..15).map(|i| -20.0 + 4.0 * i as f64).collect(), ONE_W.to_vec()),
        (CaseLabel::TwoW, (0..15).map(|i| -20.0 + 4.0 * i as f64).collect(), TWO_W.to_vec()),
        (CaseLabel::Theta, (0..15).map(|i| -20.0 + 5.0 * i as f64).collect(), THETA.to_vec()),
    ];
    for (case, ps, want) in &sweeps {
        let samples: Vec<CalibrationSample> = ps
            .iter()
            .map(|&p| {
                let deg = want.len() - 1;
                let y: f64 = want.iter().enumerate().map(|(j, c)| c * p.powi((deg - j) as i32)).sum();
                CalibrationSample::new(*case, p, y)
            })
            .collect();
        let fit = fit_polynomial(&samples, want.len() - 1).unwrap();
        for (a, b) in fit.model.coeffs().iter().zip(want) {
            worst_coeff = worst_coeff.max((a - b).abs());
        }
        worst_r2 = worst_r2.max((fit.r_squared - 1.0).abs());
    }
    pass &= worst_coeff <= 1e-9 && worst_r2 <= 1e-12;

    let s = Scenario::preset(ExperimentKind::Fit);
    let ep = run(&s).unwrap();
    let samples = read_residual_table(&ep);
    let mut noisy = Vec::new();
    for fit in &ep.fits {
        let case = fit.model.case();
        let (p, y): (Vec<f64>, Vec<f64>) = samples.iter().filter(|r| r.0 == case.as_str()).map(|r| (r.1, r.2)).unzip();
        let oracle_coeffs = normal_equations(&p, &y, fit.model.degree());
        let oracle_r2 = r2_oracle(&p, &y, &oracle_coeffs);
        let agree = (oracle_r2 - fit.r_squared).abs() < 1e-9;
        pass &= fit.r_squared >= 0.96 && agree;
        noisy.push(format!("{} R² {:.4} (oracle {:.4})", case.as_str(), fit.r_squared, oracle_r2));
    }
    pass &= ep.fits.len() == 3;
    g.check(
        "5",
        "fit recovery",
        pass,
        format!(
            "noiseless max coeff error {worst_coeff:.1e} (<= 1e-9), |R² - 1| {worst_r2:.1e} (<= 1e-12); noisy {} (>= 0.96)",
            noisy.join(", ")
        ),
    );
}

fn read_residual_table(ep: &Episode) -> Vec<(String, f64, f64)> {
    let t = ep.tables.iter().find(|t| t.name == "fit_residuals").unwrap();
    t.rows.iter().map(|r| (r[0].clone(), r[1].parse().unwrap(), r[2].parse().unwrap())).collect()
}

fn c6_turn_cal(g: &mut Gate) {
    let s = Scenario::preset(ExperimentKind::TurnCalibration);
    let turn = s.turn.unwrap();
    let ep = run(&s).unwrap();
    let cycles = &ep.trials[0].cycles;
    let n_turn = turn.turn_sequences;
    let heading = (cycles[n_turn - 1].end.heading_rad - cycles[0].start.heading_rad).to_degrees();
    let walk = &cycles[n_turn..];
    let first = walk.first().unwrap();
    let last = walk.last().unwrap();
    let dist_mm = (last.end.x_m - first.start.x_m).hypot(last.end.y_m - first.start.y_m) * 1000.0;
    let speed = dist_mm / (last.t_end_s - (first.t_end_s - s.gait.phase_s));
    let noise_free = s.locomotion.heading_drift_std_rad == 0.0 && s.locomotion.lateral_noise_std_mm == 0.0;
    let pass =
        noise_free && n_turn == 9 && walk.len() == 10 && (heading - 90.0).abs() <= 1e-6 && (speed - 24.5).abs() <= 1e-9;
    g.check(
        "6",
        "turn calibration",
        pass,
        format!(
            "{n_turn} left turns -> {heading:.9}° (90 ± 1e-6); {} walk cycles -> {speed:.12} mm/s (24.5 ± 1e-9)",
            walk.len()
        ),
    );
}

fn c7_line(g: &mut Gate) {
    let s = Scenario::preset(ExperimentKind::TrackLine);
    let tracking = s.tracking.clone().unwrap();
    let noisy = s.locomotion.heading_drift_std_rad > 0.0;
    let (ep, wall) = timed(|| run(&s).unwrap());
    let d1 = ep.stat("d1").unwrap();
    let mut pass = noisy && d1.mean <= 0.08;
    let mut per = Vec::new();
    for t in &ep.trials {
        let reached = t.stop_reached && t.final_pose.y_m >= tracking.stop.value_m;
        let turned = t.start_angle_deg == 0.0 || t.turns_fired() >= 1;
        pass &= reached && turned;
        let mean = t.decisions.iter().map(|d| d.offset_m.abs()).sum::<f64>() / t.decisions.len() as f64;
        per.push(format!(
            "{:+}°: y {:.3}, {} turns, mean |x| {:.3}",
            t.start_angle_deg,
            t.final_pose.y_m,
            t.turns_fired(),
            mean
        ));
    }
    let per_run = wall / ep.trials.len() as u32;
    pass &= per_run < Duration::from_secs(5);
    g.check(
        "7",
        "line tracking",
        pass,
        format!("d1 {:.4} ± {:.4} m (<= 0.08); {}; {:?} per run (< 5 s)", d1.mean, d1.std, per.join("; "), per_run),
    );
}

fn c8_circle(g: &mut Gate) {
    let s = Scenario::preset(ExperimentKind::TrackCircle);
    let ep = run(&s).unwrap();
    let d2 = ep.stat("d2").unwrap();
    // radial error recomputed from the logged decision poses
    let mut radial = Vec::new();
    for t in &ep.trials {
        for d in &t.decisions {
            radial.push(((d.pose.x_m + 1.0).hypot(d.pose.y_m) - 1.0).abs());
        }
    }
    let radial_mean = radial.iter().sum::<f64>() / radial.len() as f64;
    let reached = ep.trials.iter().all(|t| t.stop_reached && t.final_pose.x_m <= -1.0);
    let pass = reached && d2.mean <= 0.09 && radial_mean <= 0.09;
    g.check(
        "8",
        "quarter-circle tracking",
        pass,
        format!(
            "all {} runs reach x = -1: {reached}; d2 {:.4} ± {:.4} m, radial {:.4} m (<= 0.09)",
            ep.trials.len(),
            d2.mean,
            d2.std,
            radial_mean
        ),
    );
}

fn c9_varheight(g: &mut Gate) {
    let s = Scenario::preset(ExperimentKind::TrackVarheight);
    let ep = run(&s).unwrap();
    let t = &ep.trials[0];
    let (before, after): (Vec<_>, Vec<_>) = t.peaks.iter().partition(|p| p.y_m < 0.5);
    let classified = |peaks: &[&pneuhex_core::harness::HeightPeak], want: f64, other: f64| {
        peaks.iter().all(|p| p.commanded_z_m == want && (p.z_m - want).abs() < (p.z_m - other).abs())
    };
    let ok_before = !before.is_empty() && classified(&before, 0.135, 0.140);
    let ok_after = !after.is_empty() && classified(&after, 0.140, 0.135);
    let mean_err = t.peaks.iter().map(|p| p.error_mm().abs()).sum::<f64>() / t.peaks.len() as f64;

    let first_after = t.decisions.iter().position(|d| d.pose.y_m >= 0.5);
    let switch_ok = match first_after {
        Some(i) if i > 0 => {
            t.decisions[i].commanded_z_m == Some(0.140)
                && t.decisions[..i].iter().all(|d| d.commanded_z_m == Some(0.135))
        }
        _ => false,
    };
    let switch_t = first_after.map(|i| t.decisions[i].t_s).unwrap_or(f64::NAN);
    let pass = ok_before && ok_after && mean_err <= 5.0 && switch_ok && t.stop_reached;
    g.check(
        "9",
        "variable-height tracking",
        pass,
        format!(
            "{} maxima before y = 0.5 at 0.135 m: {ok_before}, {} after at 0.140 m: {ok_after}; mean |error| {mean_err:.3} mm (<= 5); switch at first decision after crossing (t = {switch_t} s): {switch_ok}",
            before.len(),
            after.len()
        ),
    );
}

fn scenario_files() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "toml")).collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn c10_determinism(g: &mut Gate) {
    let mut scenarios: Vec<(String, Scenario)> =
        ExperimentKind::ALL.iter().map(|k| (format!("preset {k}"), Scenario::preset(*k))).collect();
    for path in scenario_files() {
        let s = Scenario::load(&path).unwrap();
        scenarios.push((path.file_name().unwrap().to_string_lossy().into_owned(), s));
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let mut files = 0;
    for (i, (name, s)) in scenarios.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        let wa = run(s).unwrap().write(&a).unwrap();
        let wb = run(s).unwrap().write(&b).unwrap();
        let same = wa.len() == wb.len()
            && wa.iter().zip(&wb).all(|(x, y)| std::fs::read(x).unwrap() == std::fs::read(y).unwrap());
        files += wa.len();
        if !same {
            failures.push(name.clone());
        }
    }
    g.check(
        "10",
        "determinism",
        failures.is_empty() && scenarios.len() > ExperimentKind::ALL.len(),
        format!("{} scenarios, {files} files byte-identical on rerun; differing: {:?}", scenarios.len(), failures),
    );
}

fn main() -> ExitCode {
    // keep the library's default models honest against the literal table
    assert_eq!(PolyModel::one_w().coeffs(), ONE_W);
    assert_eq!(PolyModel::two_w().coeffs(), TWO_W);
    assert_eq!(PolyModel::theta().coeffs(), THETA);

    let mut g = Gate { results: Vec::new() };
    c1_inversion(&mut g);
    c2_height(&mut g);
    c3_roll(&mut g);
    c4_step_response(&mut g);
    c5_fit(&mut g);
    c6_turn_cal(&mut g);
    c7_line(&mut g);
    c8_circle(&mut g);
    c9_varheight(&mut g);
    c10_determinism(&mut g);
    let failed: Vec<&str> = g.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("acceptance: {} of {} criteria passed", g.results.len() - failed.len(), g.results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
