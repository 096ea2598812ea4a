//! Full filtering run on the synthetic rush-hour calibration scenario:
//! estimate cell densities and learn the fundamental-diagram parameters
//! online from two noisy sensors.
//!
//! Run with: cargo run --release --example calibration_run

use lwr_filter::filter::{
    FilterConfig, InitialEnsembleSpec, JitterSpec, run_filter, sample_initial_ensemble,
};
use lwr_filter::scenarios::{CalibrationSpec, generate_calibration_scenario};

fn main() {
    let spec = CalibrationSpec::default();
    let scenario = generate_calibration_scenario(&spec).expect("scenario");
    println!(
        "scenario: {} cells x {} m, {} frames every {} s, sensors at {:?}",
        scenario.definition.grid.cells,
        scenario.definition.grid.cell_length_m,
        scenario.frames.len(),
        scenario.definition.grid.observation_interval_s(),
        scenario.model.sensor_cells(),
    );

    let noise = scenario.definition.noise;
    let mut cfg = FilterConfig::new(noise, 2024);
    cfg.jitter = JitterSpec {
        capacity_vph: 50.0,
        critical_density: 0.0005,
        jam_density: 0.0,
    };
    let init = InitialEnsembleSpec::defaults(scenario.definition.initial_density.clone());
    let particles = sample_initial_ensemble(1000, &init, &noise, cfg.seed).expect("ensemble");

    let out = run_filter(
        particles,
        &scenario.frames,
        &scenario.model,
        &scenario.definition.grid,
        &cfg,
    )
    .expect("filter run");

    println!("total log-evidence: {:.1}", out.total_log_evidence);
    println!();
    println!(
        "{:>6} {:>9} {:>9} {:>10} {:>22} {:>9}",
        "t [s]", "true rho3", "est rho3", "err", "qc mean [lo, hi] vph", "true qc"
    );
    for (k, summary) in out.summaries.iter().enumerate() {
        if k % 32 != 15 {
            continue;
        }
        let truth = &scenario.truth[k];
        let true_qc = scenario
            .definition
            .fd_schedule
            .at(summary.time_s)
            .capacity_vph();
        println!(
            "{:>6.0} {:>9.4} {:>9.4} {:>10.5} {:>7.0} [{:>4.0}, {:>4.0}] {:>9.0}",
            summary.time_s,
            truth.densities[2],
            summary.cell_mean[2],
            summary.cell_mean[2] - truth.densities[2],
            summary.capacity_vph.mean,
            summary.capacity_vph.lo,
            summary.capacity_vph.hi,
            true_qc,
        );
    }

    // How often the 95% band covers the true capacity after a short
    // burn-in.
    let mut covered = 0;
    let mut total = 0;
    for s in &out.summaries {
        if s.time_s <= 60.0 {
            continue;
        }
        let true_qc = scenario.definition.fd_schedule.at(s.time_s).capacity_vph();
        total += 1;
        if s.capacity_vph.lo <= true_qc && true_qc <= s.capacity_vph.hi {
            covered += 1;
        }
    }
    println!();
    println!(
        "capacity coverage after burn-in: {covered}/{total} frames ({:.0}%)",
        100.0 * covered as f64 / total as f64
    );
}
