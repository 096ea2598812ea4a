//! Acceptance suite: one test per verification criterion, each printing
//! a pass/fail line with its runtime. Tests serialize on a lock so the
//! per-criterion time budgets are measured honestly.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lwr_filter::filter::{
    FilterConfig, InitialEnsembleSpec, JitterSpec, ObservationModel, ParamPrior, Particle,
    PosteriorSummary, kalman_gain, kalman_posterior, predictive_variance, run_filter,
    run_filter_observed, sample_initial_ensemble,
};
use lwr_filter::kde::kde_modes;
use lwr_filter::scenarios::{
    AccidentSpec, CalibrationSpec, TruncatedNormalSpec, generate_accident_scenario,
    generate_calibration_scenario, mixture_experiment, shock_passage_frames,
};
use lwr_filter::{
    BoundarySeries, CflPolicy, DensityState, FundamentalDiagram, RoadGrid, check_cfl, evolve,
    step, total_vehicles,
};

static BUDGET_LOCK: Mutex<()> = Mutex::new(());

fn fd_star() -> FundamentalDiagram {
    FundamentalDiagram::from_vph(1600.0, 0.025, 0.2).unwrap()
}

/// Hold the lock, run the criterion, enforce its wall-clock budget.
fn criterion<F: FnOnce() -> Result<String, String>>(id: &str, budget: Duration, body: F) {
    let _guard = BUDGET_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("[PASS] {id}: {detail} ({elapsed:.2?} < {budget:.0?})");
            assert!(
                elapsed <= budget,
                "{id} exceeded its time budget: {elapsed:?} > {budget:?}"
            );
        }
        Err(detail) => {
            println!("[FAIL] {id}: {detail} ({elapsed:.2?})");
            panic!("{id} failed: {detail}");
        }
    }
}

// ---------------------------------------------------------------------------
// c01: closed-form Kalman quantities for the two-sensor five-cell setup
// ---------------------------------------------------------------------------

mod dense {
    pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for l in 0..k {
                    out[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        out
    }

    pub fn identity(n: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        out
    }

    pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut aug: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot);
            let p = aug[col][col];
            for x in &mut aug[col] {
                *x /= p;
            }
            for row in 0..n {
                if row != col {
                    let f = aug[row][col];
                    for j in 0..2 * n {
                        aug[row][j] -= f * aug[col][j];
                    }
                }
            }
        }
        aug.into_iter().map(|r| r[n..].to_vec()).collect()
    }
}

#[test]
fn c01_kalman_closed_forms() {
    criterion("c01 Kalman closed forms", Duration::from_secs(1), || {
        let model = ObservationModel::new(vec![1, 5], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut max_err = 0.0f64;
        for _ in 0..1000 {
            let v: f64 = rng.random_range(1e-6..1.0);
            let w: f64 = rng.random_range(1e-6..1.0);
            let mu_f: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..0.2)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..0.2)).collect();

            // Implementation path (diagonal closed form).
            let gain = kalman_gain(v, w);
            let (mean, var) = kalman_posterior(&mu_f, &model, v, w, &y);

            // Printed closed forms.
            max_err = max_err.max((gain - w / (v + w)).abs());
            max_err = max_err.max((predictive_variance(v, w) - (v + w)).abs());
            for i in 0..5 {
                let expected_var = if i == 0 || i == 4 { w * (1.0 - w / (v + w)) } else { w };
                max_err = max_err.max((var[i] - expected_var).abs());
            }
            max_err = max_err.max((mean[0] - (mu_f[0] + gain * (y[0] - mu_f[0]))).abs());
            max_err = max_err.max((mean[4] - (mu_f[4] + gain * (y[1] - mu_f[4]))).abs());
            for i in 1..4 {
                max_err = max_err.max((mean[i] - mu_f[i]).abs());
            }

            // Independent general-matrix route:
            // K = C_f H^T (H C_f H^T + V)^{-1}; C = (I - K H) C_f.
            let mut h = vec![vec![0.0; 5]; 2];
            h[0][0] = 1.0;
            h[1][4] = 1.0;
            let ht: Vec<Vec<f64>> = (0..5).map(|i| (0..2).map(|j| h[j][i]).collect()).collect();
            let c_f: Vec<Vec<f64>> = dense::identity(5)
                .into_iter()
                .map(|r| r.into_iter().map(|x| x * w).collect())
                .collect();
            let mut s = dense::matmul(&dense::matmul(&h, &c_f), &ht);
            for (j, row) in s.iter_mut().enumerate() {
                row[j] += v;
            }
            for i in 0..2 {
                for j in 0..2 {
                    let expected = if i == j { v + w } else { 0.0 };
                    max_err = max_err.max((s[i][j] - expected).abs());
                }
            }
            let k_mat = dense::matmul(&dense::matmul(&c_f, &ht), &dense::invert(&s));
            max_err = max_err.max((k_mat[0][0] - gain).abs());
            max_err = max_err.max((k_mat[4][1] - gain).abs());
            let kh = dense::matmul(&k_mat, &h);
            for i in 0..5 {
                for j in 0..5 {
                    let c_ij = (if i == j { 1.0 } else { 0.0 } - kh[i][j]) * w;
                    let expected = if i == j { var[i] } else { 0.0 };
                    max_err = max_err.max((c_ij - expected).abs());
                }
            }
        }
        if max_err <= 1e-12 {
            Ok(format!("1000 random trials, max abs error {max_err:.2e} <= 1e-12"))
        } else {
            Err(format!("max abs error {max_err:.2e} > 1e-12"))
        }
    });
}

// ---------------------------------------------------------------------------
// c02: exact mass balance of the solver step
// ---------------------------------------------------------------------------

fn random_fd(rng: &mut ChaCha8Rng) -> FundamentalDiagram {
    let qc_vph = rng.random_range(800.0..2400.0);
    let rho_c = rng.random_range(0.015..0.05);
    let jam = rho_c + rng.random_range(0.05..0.25);
    FundamentalDiagram::from_vph(qc_vph, rho_c, jam).unwrap()
}

#[test]
fn c02_godunov_conservation() {
    criterion("c02 Godunov conservation", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut clamp_events = 0u64;
        let mut max_rel = 0.0f64;
        for _ in 0..10_000 {
            let fd = random_fd(&mut rng);
            let jam = fd.jam_density();
            let cells = rng.random_range(1..30usize);
            let h = rng.random_range(50.0..500.0);
            let dt = rng.random_range(0.05..1.0) * h / fd.max_wave_speed();
            let grid = RoadGrid::new(cells, h, dt, 1).unwrap();
            let densities: Vec<f64> = (0..cells).map(|_| rng.random_range(0.0..=jam)).collect();
            let left = rng.random_range(0.0..=jam);
            let right = rng.random_range(0.0..=jam);
            let state = DensityState::new(densities, 0.0);
            let out = step(&state, left, right, &fd, &grid, CflPolicy::Strict)
                .map_err(|e| e.to_string())?;
            clamp_events += out.clamped_cells;

            let inflow = fd.godunov_flux(left, state.densities[0]).unwrap();
            let outflow = fd.godunov_flux(state.densities[cells - 1], right).unwrap();
            let change = total_vehicles(&out.state, &grid) - total_vehicles(&state, &grid);
            let expected = grid.dt_s * (inflow - outflow);
            let scale = total_vehicles(&state, &grid).max(expected.abs()).max(1e-6);
            max_rel = max_rel.max((change - expected).abs() / scale);
        }
        if clamp_events == 0 && max_rel <= 1e-12 {
            Ok(format!(
                "10000 random CFL-satisfying steps, max relative error {max_rel:.2e}, zero clamps"
            ))
        } else {
            Err(format!("max relative error {max_rel:.2e}, {clamp_events} clamp events"))
        }
    });
}

// ---------------------------------------------------------------------------
// c03: interface flux against the brute-force min/max oracle
// ---------------------------------------------------------------------------

/// Min or max of the flow over the density interval, scanned at 1e-4
/// veh/m plus the endpoints and the kink.
fn flux_oracle(fd: &FundamentalDiagram, rho_l: f64, rho_r: f64) -> f64 {
    let (lo, hi) = if rho_l <= rho_r { (rho_l, rho_r) } else { (rho_r, rho_l) };
    let minimize = rho_l <= rho_r;
    let mut best = if minimize { f64::INFINITY } else { f64::NEG_INFINITY };
    let mut consider = |q: f64| {
        best = if minimize { best.min(q) } else { best.max(q) };
    };
    consider(fd.flow(lo).unwrap());
    consider(fd.flow(hi).unwrap());
    let rho_c = fd.critical_density();
    if rho_c > lo && rho_c < hi {
        consider(fd.flow(rho_c).unwrap());
    }
    let mut x = lo + 1e-4;
    while x < hi {
        consider(fd.flow(x).unwrap());
        x += 1e-4;
    }
    best
}

#[test]
fn c03_godunov_flux_oracle() {
    criterion("c03 Godunov flux oracle", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut max_err = 0.0f64;
        for _ in 0..20 {
            let fd = random_fd(&mut rng);
            let jam = fd.jam_density();
            let tol = 1e-6 * fd.capacity();
            for i in 0..200 {
                let rho_l = (jam * i as f64 / 199.0).min(jam);
                for j in 0..200 {
                    let rho_r = (jam * j as f64 / 199.0).min(jam);
                    let got = fd.godunov_flux(rho_l, rho_r).unwrap();
                    let want = flux_oracle(&fd, rho_l, rho_r);
                    let err = (got - want).abs();
                    max_err = max_err.max(err / fd.capacity());
                    if err > tol {
                        return Err(format!(
                            "flux mismatch at ({rho_l}, {rho_r}): {got} vs oracle {want}"
                        ));
                    }
                }
            }
        }
        Ok(format!(
            "20 diagrams x 200x200 grid, max relative error {max_err:.2e} <= 1e-6"
        ))
    });
}

// ---------------------------------------------------------------------------
// c04: simulated shock front against the Rankine-Hugoniot speed
// ---------------------------------------------------------------------------

#[test]
fn c04_shock_speed_reproduction() {
    criterion("c04 shock-speed reproduction", Duration::from_secs(1), || {
        // Densities 0.05 and 0.01 from the statement, arranged as the
        // entropy-admissible shock: free flow upstream running into
        // congestion downstream. The reverse arrangement is a
        // rarefaction fan, which has no single front to compare.
        let fd = fd_star();
        let cells = 20usize;
        let grid = RoadGrid::new(cells, 300.0, 5.0, 1).unwrap();
        let (upstream, downstream) = (0.01, 0.05);
        let mut densities = vec![upstream; cells];
        for rho in densities.iter_mut().skip(cells / 2) {
            *rho = downstream;
        }
        let state = DensityState::new(densities, 0.0);
        let boundaries = BoundarySeries::constant(upstream, downstream);
        let out = evolve(&state, &boundaries, &fd, &grid, 100, CflPolicy::Strict)
            .map_err(|e| e.to_string())?;

        let shock = fd.shock_speed(upstream, downstream).unwrap();
        let expected = cells as f64 / 2.0 * grid.cell_length_m + shock * 500.0;
        let level = 0.5 * (upstream + downstream);
        let mut front = f64::NAN;
        for i in 0..cells - 1 {
            let (a, b) = (out.state.densities[i], out.state.densities[i + 1]);
            if (a - level) * (b - level) <= 0.0 && a != b {
                front = (i as f64 + 0.5) * grid.cell_length_m
                    + (level - a) / (b - a) * grid.cell_length_m;
                break;
            }
        }
        let err = (front - expected).abs();
        if err <= grid.cell_length_m {
            Ok(format!(
                "front at {front:.0} m vs predicted {expected:.0} m after 500 s (|err| {err:.0} m <= h)"
            ))
        } else {
            Err(format!("front at {front:.0} m vs predicted {expected:.0} m, error {err:.0} m > h"))
        }
    });
}

// ---------------------------------------------------------------------------
// c05: shock-speed mixture experiment is multimodal
// ---------------------------------------------------------------------------

#[test]
fn c05_mixture_experiment_modes() {
    criterion("c05 mixture experiment", Duration::from_secs(5), || {
        let fd = fd_star();
        let left = TruncatedNormalSpec::new(0.02, 0.01, 0.0, 0.2).unwrap();
        let right = TruncatedNormalSpec::new(0.03, 0.01, 0.0, 0.2).unwrap();
        let mut passes = 0;
        let mut counts = Vec::new();
        for seed in 0..10u64 {
            let speeds =
                mixture_experiment(&fd, &left, &right, 1000, seed).map_err(|e| e.to_string())?;
            let report = kde_modes(&speeds, None, 0.10);
            counts.push(report.mode_count());
            if report.mode_count() >= 2 {
                passes += 1;
            }
        }
        if passes >= 9 {
            Ok(format!(
                "mode counts {counts:?}; >=2 modes with >=10% mass in {passes}/10 seeds"
            ))
        } else {
            Err(format!("only {passes}/10 seeds multimodal: {counts:?}"))
        }
    });
}

// ---------------------------------------------------------------------------
// Calibration-run machinery shared by c06, c07, c09
// ---------------------------------------------------------------------------

fn calibration_jitter() -> JitterSpec {
    JitterSpec {
        capacity_vph: 50.0,
        critical_density: 0.0005,
        jam_density: 0.0,
    }
}

fn run_calibration_filter(
    scenario: &lwr_filter::scenarios::SyntheticScenario,
    n: usize,
    filter_seed: u64,
    capacity_prior: ParamPrior,
    jitter: JitterSpec,
) -> Vec<PosteriorSummary> {
    let noise = scenario.definition.noise;
    let mut cfg = FilterConfig::new(noise, filter_seed);
    cfg.jitter = jitter;
    let init = InitialEnsembleSpec {
        initial_density: scenario.definition.initial_density.clone(),
        capacity_vph: capacity_prior,
        critical_density: ParamPrior::Point(0.025),
        jam_density: ParamPrior::Point(0.2),
        start_time_s: 0.0,
    };
    let particles = sample_initial_ensemble(n, &init, &noise, cfg.seed).unwrap();
    run_filter(
        particles,
        &scenario.frames,
        &scenario.model,
        &scenario.definition.grid,
        &cfg,
    )
    .unwrap()
    .summaries
}

fn cell3_rmse(summaries: &[PosteriorSummary], truth: &[DensityState]) -> f64 {
    let acc: f64 = summaries
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let d = s.cell_mean[2] - t.densities[2];
            d * d
        })
        .sum();
    (acc / summaries.len() as f64).sqrt()
}

#[test]
fn c06_learning_beats_fixed_parameters() {
    criterion("c06 learning beats fixed +20%", Duration::from_secs(60), || {
        let mut wins = 0;
        let mut detail = Vec::new();
        for seed in 0..10u64 {
            let spec = CalibrationSpec { seed, ..CalibrationSpec::default() };
            let scenario = generate_calibration_scenario(&spec).map_err(|e| e.to_string())?;
            let learning = run_calibration_filter(
                &scenario,
                1000,
                seed + 1000,
                ParamPrior::Uniform { lo: 1440.0, hi: 1560.0 },
                calibration_jitter(),
            );
            let fixed = run_calibration_filter(
                &scenario,
                1000,
                seed + 1000,
                ParamPrior::Point(1.2 * 1500.0),
                JitterSpec::default(),
            );
            let rmse_learning = cell3_rmse(&learning, &scenario.truth);
            let rmse_fixed = cell3_rmse(&fixed, &scenario.truth);
            if rmse_learning < rmse_fixed {
                wins += 1;
            }
            detail.push(format!("{rmse_learning:.4}<{rmse_fixed:.4}"));
        }
        if wins >= 8 {
            Ok(format!("learning RMSE lower in {wins}/10 seeds [{}]", detail.join(" ")))
        } else {
            Err(format!("learning RMSE lower only in {wins}/10 seeds [{}]", detail.join(" ")))
        }
    });
}

#[test]
fn c07_capacity_tracking_coverage() {
    criterion("c07 capacity tracking coverage", Duration::from_secs(60), || {
        let mut passes = 0;
        let mut rates = Vec::new();
        for seed in 0..10u64 {
            let spec = CalibrationSpec { seed, ..CalibrationSpec::default() };
            let scenario = generate_calibration_scenario(&spec).map_err(|e| e.to_string())?;
            let summaries = run_calibration_filter(
                &scenario,
                1000,
                seed + 1000,
                ParamPrior::Uniform { lo: 1440.0, hi: 1560.0 },
                calibration_jitter(),
            );
            let mut covered = 0usize;
            let mut total = 0usize;
            for s in &summaries {
                if s.time_s <= 60.0 {
                    continue; // burn-in
                }
                let true_qc = scenario.definition.fd_schedule.at(s.time_s).capacity_vph();
                total += 1;
                if s.capacity_vph.lo <= true_qc && true_qc <= s.capacity_vph.hi {
                    covered += 1;
                }
            }
            let rate = covered as f64 / total as f64;
            rates.push(format!("{:.0}%", rate * 100.0));
            if rate >= 0.8 {
                passes += 1;
            }
        }
        if passes >= 8 {
            Ok(format!("95% band covers true capacity in {passes}/10 seeds [{}]", rates.join(" ")))
        } else {
            Err(format!("coverage passes only {passes}/10 seeds [{}]", rates.join(" ")))
        }
    });
}

// ---------------------------------------------------------------------------
// c08: capacity-drop detection and recovery
// ---------------------------------------------------------------------------

#[test]
fn c08_capacity_drop_detection() {
    criterion("c08 capacity-drop detection", Duration::from_secs(120), || {
        let spec = AccidentSpec { seed: 0, ..AccidentSpec::default() };
        assert!((spec.drop_fraction - 0.66).abs() < 1e-12);
        let scenario = generate_accident_scenario(&spec).map_err(|e| e.to_string())?;
        let interval = scenario.definition.grid.observation_interval_s();
        let onset = (spec.drop_start_s / interval) as usize;
        let end = (spec.drop_end_s / interval) as usize;

        let noise = scenario.definition.noise;
        let mut cfg = FilterConfig::new(noise, 500);
        cfg.jitter = JitterSpec { capacity_vph: 50.0, ..JitterSpec::default() };
        let init = InitialEnsembleSpec {
            initial_density: scenario.definition.initial_density.clone(),
            capacity_vph: ParamPrior::Uniform { lo: 1440.0, hi: 1560.0 },
            critical_density: ParamPrior::Point(0.025),
            jam_density: ParamPrior::Point(0.2),
            start_time_s: 0.0,
        };
        let particles = sample_initial_ensemble(5000, &init, &noise, cfg.seed).unwrap();
        let out = run_filter(
            particles,
            &scenario.frames,
            &scenario.model,
            &scenario.definition.grid,
            &cfg,
        )
        .map_err(|e| e.to_string())?;

        let qc: Vec<f64> = out.summaries.iter().map(|s| s.capacity_vph.mean).collect();
        let baseline = qc[onset - 5..onset].iter().sum::<f64>() / 5.0;
        let detect = qc[onset..=onset + 5].iter().position(|&q| q < 0.6 * baseline);
        let recover = qc[end..=end + 5]
            .iter()
            .position(|&q| (q - baseline).abs() <= 0.1 * baseline);
        match (detect, recover) {
            (Some(d), Some(r)) => Ok(format!(
                "baseline {baseline:.0} vph; mean below 60% {d} frames after onset, \
                 back within 10% {r} frames after the window (both <= 5)"
            )),
            (d, r) => Err(format!("detect {d:?}, recover {r:?} (baseline {baseline:.0})")),
        }
    });
}

// ---------------------------------------------------------------------------
// c09: mixture posterior at the shock front
// ---------------------------------------------------------------------------

#[test]
fn c09_mixture_posterior_at_shock() {
    criterion("c09 mixture posterior at shock", Duration::from_secs(60), || {
        let spec = CalibrationSpec { seed: 0, ..CalibrationSpec::default() };
        let scenario = generate_calibration_scenario(&spec).map_err(|e| e.to_string())?;
        let passage = shock_passage_frames(&scenario.truth, 3)
            .ok_or("no shock passage found at cell 3")?;

        let before_frames: Vec<usize> = vec![
            passage.before.saturating_sub(4),
            passage.before.saturating_sub(2),
            passage.before,
        ];
        let after_frames: Vec<usize> = (0..5)
            .map(|k| (passage.after + 5 * k).min(scenario.frames.len() - 1))
            .collect();
        let mut want: Vec<usize> = before_frames.clone();
        want.extend(&passage.during);
        want.extend(&after_frames);

        let noise = scenario.definition.noise;
        let mut cfg = FilterConfig::new(noise, 1000);
        cfg.jitter = calibration_jitter();
        let init = InitialEnsembleSpec::defaults(scenario.definition.initial_density.clone());
        let particles = sample_initial_ensemble(1000, &init, &noise, cfg.seed).unwrap();
        let mut snapshots: Vec<(usize, usize)> = Vec::new(); // (frame, mode count)
        run_filter_observed(
            particles,
            &scenario.frames,
            &scenario.model,
            &scenario.definition.grid,
            &cfg,
            |k, ens: &[Particle]| {
                if want.contains(&k) {
                    let sample: Vec<f64> = ens.iter().map(|p| p.state.densities[2]).collect();
                    snapshots.push((k, kde_modes(&sample, None, 0.10).mode_count()));
                }
            },
        )
        .map_err(|e| e.to_string())?;

        let count_at = |frame: usize| {
            snapshots
                .iter()
                .find(|(k, _)| *k == frame)
                .map(|(_, c)| *c)
                .unwrap_or(0)
        };
        let before_ok = before_frames.iter().all(|&k| count_at(k) == 1);
        let during_multi = passage.during.iter().filter(|&&k| count_at(k) >= 2).count();
        let during_ok = during_multi * 5 >= passage.during.len() * 4; // >= 80%
        let after_uni = after_frames.iter().filter(|&&k| count_at(k) == 1).count();
        let after_ok = after_uni >= 3;
        let detail = format!(
            "before {:?} unimodal; during >=2 modes in {din}/{dn} frames; after unimodal in {after_uni}/5",
            before_frames.iter().map(|&k| count_at(k)).collect::<Vec<_>>(),
            din = during_multi,
            dn = passage.during.len(),
        );
        if before_ok && during_ok && after_ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
}

// ---------------------------------------------------------------------------
// c10: sequential Bayes factor prefers the data-generating model
// ---------------------------------------------------------------------------

#[test]
fn c10_bayes_factor_prefers_true_model() {
    criterion("c10 Bayes factor", Duration::from_secs(60), || {
        let mut positives = 0;
        let mut finals = Vec::new();
        for seed in 0..20u64 {
            let spec = CalibrationSpec {
                horizon_s: 600.0,
                seed,
                ..CalibrationSpec::default()
            };
            let scenario = generate_calibration_scenario(&spec).map_err(|e| e.to_string())?;
            let score = |capacity_vph: f64, filter_seed: u64| {
                let summaries = run_calibration_filter(
                    &scenario,
                    300,
                    filter_seed,
                    ParamPrior::Point(capacity_vph),
                    JitterSpec::default(),
                );
                summaries.iter().map(|s| s.log_evidence).sum::<f64>()
            };
            // M1: the data-generating capacity. M0: halved.
            let log_b = score(1500.0, seed + 21) - score(750.0, seed + 20);
            finals.push(format!("{log_b:.0}"));
            if log_b > 0.0 {
                positives += 1;
            }
        }
        if positives >= 18 {
            Ok(format!("final log B > 0 in {positives}/20 seeded runs [{}]", finals.join(" ")))
        } else {
            Err(format!("final log B > 0 only in {positives}/20 runs [{}]", finals.join(" ")))
        }
    });
}

// ---------------------------------------------------------------------------
// c11: CFL guard on the study grids
// ---------------------------------------------------------------------------

#[test]
fn c11_cfl_guard() {
    criterion("c11 CFL guard", Duration::from_secs(1), || {
        let fd = fd_star(); // free-flow speed 17.78 m/s
        let accident_grid = RoadGrid::new(4, 211.0, 300.0, 1).unwrap();
        let report = check_cfl(&fd, &accident_grid);
        if report.satisfied {
            return Err("211 m / 300 s grid unexpectedly satisfies the CFL bound".into());
        }
        let calibration_grid = RoadGrid::new(5, 300.0, 5.0, 1).unwrap();
        let report2 = check_cfl(&fd, &calibration_grid);
        if !report2.satisfied {
            return Err("300 m / 5 s grid unexpectedly violates the CFL bound".into());
        }
        Ok(format!(
            "accident grid violates (limit {:.1} s < 300 s), calibration grid satisfies (limit {:.1} s >= 5 s)",
            report.limit_dt_s, report2.limit_dt_s
        ))
    });
}

// ---------------------------------------------------------------------------
// c12: byte-identical re-runs from manifests, across thread counts
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    let exe = env!("CARGO_BIN_EXE_lwr-filter");
    std::process::Command::new(exe)
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn dir_bytes(dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|entry| {
            let entry = entry.map_err(|e| e.to_string())?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
            Ok((name, bytes))
        })
        .collect::<Result<_, String>>()?;
    entries.sort();
    Ok(entries)
}

#[test]
fn c12_manifest_reproducibility() {
    criterion("c12 manifest reproducibility", Duration::from_secs(60), || {
        let base = tempfile::tempdir().map_err(|e| e.to_string())?;
        let sim_config = base.path().join("simulate.json");
        std::fs::write(
            &sim_config,
            r#"{"scenario": {"calibration": {"horizon_s": 250.0}}}"#,
        )
        .map_err(|e| e.to_string())?;
        let config_path = base.path().join("filter.json");
        std::fs::write(
            &config_path,
            r#"{
  "source": {"synthetic": {"calibration": {"horizon_s": 250.0}}},
  "filter": {"particles": 150}
}"#,
        )
        .map_err(|e| e.to_string())?;
        let mix_config = base.path().join("mixture.json");
        std::fs::write(&mix_config, r#"{"samples": 500}"#).map_err(|e| e.to_string())?;
        let cmp_config = base.path().join("compare.json");
        std::fs::write(
            &cmp_config,
            r#"{
  "data": {"synthetic": {"calibration": {"horizon_s": 200.0}}},
  "m1": {"particles": 100, "prior": {"capacity_vph": {"point": 1500.0},
         "critical_density": {"point": 0.025}, "jam_density": {"point": 0.2}},
         "jitter": {"capacity_vph": 0.0, "critical_density": 0.0, "jam_density": 0.0}},
  "m0": {"particles": 100, "prior": {"capacity_vph": {"point": 750.0},
         "critical_density": {"point": 0.025}, "jam_density": {"point": 0.2}},
         "jitter": {"capacity_vph": 0.0, "critical_density": 0.0, "jam_density": 0.0}}
}"#,
        )
        .map_err(|e| e.to_string())?;

        let runs: Vec<(&str, Vec<&str>)> = vec![
            ("simulate", vec!["simulate"]),
            ("filter", vec!["filter"]),
            ("mixture", vec!["experiment", "mixture"]),
            ("compare-models", vec!["compare-models"]),
        ];
        for (name, command) in runs {
            let out_a = base.path().join(format!("{name}-a"));
            let out_b = base.path().join(format!("{name}-b"));
            let config = match name {
                "simulate" => &sim_config,
                "mixture" => &mix_config,
                "compare-models" => &cmp_config,
                _ => &config_path,
            };
            let first = run_cli(
                &[
                    command.clone(),
                    vec![
                        "--config",
                        config.to_str().unwrap(),
                        "--seed",
                        "5",
                        "--threads",
                        "1",
                        "--out",
                        out_a.to_str().unwrap(),
                    ],
                ]
                .concat(),
            )?;
            if !first.status.success() {
                return Err(format!(
                    "{name} first run failed: {}",
                    String::from_utf8_lossy(&first.stderr)
                ));
            }
            // Re-run purely from the manifest, with a different thread
            // count and no explicit seed.
            let manifest = out_a.join("manifest.json");
            let second = run_cli(
                &[
                    command,
                    vec![
                        "--config",
                        manifest.to_str().unwrap(),
                        "--threads",
                        "4",
                        "--out",
                        out_b.to_str().unwrap(),
                    ],
                ]
                .concat(),
            )?;
            if !second.status.success() {
                return Err(format!(
                    "{name} re-run failed: {}",
                    String::from_utf8_lossy(&second.stderr)
                ));
            }
            let a = dir_bytes(&out_a)?;
            let b = dir_bytes(&out_b)?;
            if a.len() != b.len() {
                return Err(format!("{name}: file sets differ"));
            }
            for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
                if name_a != name_b || bytes_a != bytes_b {
                    return Err(format!("{name}: {name_a} differs between runs"));
                }
            }
        }
        Ok("simulate, filter, experiment mixture, compare-models all byte-identical from their manifests across --threads 1 vs 4".into())
    });
}
