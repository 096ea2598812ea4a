//! Sequential Bayes factor between two fundamental-diagram hypotheses
//! scored against the same observation stream: the data-generating
//! diagram (M1) against one with half the capacity (M0).
//!
//! Run with: cargo run --release --example model_comparison

use lwr_filter::FundamentalDiagram;
use lwr_filter::filter::{
    FilterConfig, InitialEnsembleSpec, ParamPrior, bayes_factor_update, run_filter,
    sample_initial_ensemble,
};
use lwr_filter::scenarios::{CalibrationSpec, generate_calibration_scenario};

fn main() {
    let spec = CalibrationSpec {
        horizon_s: 600.0,
        ..CalibrationSpec::default()
    };
    let scenario = generate_calibration_scenario(&spec).expect("scenario");
    let true_fd = scenario.definition.fd_schedule.at(0.0);
    let halved = FundamentalDiagram::new(
        true_fd.capacity() / 2.0,
        true_fd.critical_density(),
        true_fd.jam_density(),
    )
    .expect("valid diagram");

    let noise = scenario.definition.noise;
    let run_model = |fd: &FundamentalDiagram, seed: u64| {
        let cfg = FilterConfig::new(noise, seed); // zero jitter: fixed parameters
        let init = InitialEnsembleSpec {
            initial_density: scenario.definition.initial_density.clone(),
            capacity_vph: ParamPrior::Point(fd.capacity_vph()),
            critical_density: ParamPrior::Point(fd.critical_density()),
            jam_density: ParamPrior::Point(fd.jam_density()),
            start_time_s: 0.0,
        };
        let particles = sample_initial_ensemble(300, &init, &noise, seed).expect("ensemble");
        run_filter(
            particles,
            &scenario.frames,
            &scenario.model,
            &scenario.definition.grid,
            &cfg,
        )
        .expect("filter run")
    };

    let m1 = run_model(true_fd, 11);
    let m0 = run_model(&halved, 10);

    println!("M1: data-generating diagram ({:.0} vph)", true_fd.capacity_vph());
    println!("M0: halved capacity ({:.0} vph)", halved.capacity_vph());
    println!();
    println!("{:>7} {:>14}", "t [s]", "log B(M1:M0)");
    let mut log_b = 0.0;
    for ((frame, s1), s0) in scenario
        .frames
        .iter()
        .zip(&m1.summaries)
        .zip(&m0.summaries)
    {
        log_b = bayes_factor_update(log_b, s1.log_evidence, s0.log_evidence);
        if (frame.time_s as u64) % 60 == 0 {
            println!("{:>7.0} {:>14.2}", frame.time_s, log_b);
        }
    }
    println!();
    println!(
        "final log Bayes factor {log_b:.2} ({})",
        if log_b > 0.0 { "evidence favors M1, as it should" } else { "evidence favors M0" }
    );
}
