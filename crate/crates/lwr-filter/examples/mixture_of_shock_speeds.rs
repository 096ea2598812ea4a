//! Monte Carlo experiment: when the densities on both sides of a cell
//! interface are uncertain, the shock-speed distribution splits into a
//! mixture — one cluster per flow-regime pairing.
//!
//! Run with: cargo run --example mixture_of_shock_speeds

use lwr_filter::FundamentalDiagram;
use lwr_filter::kde::kde_modes;
use lwr_filter::scenarios::{TruncatedNormalSpec, mixture_experiment};

fn main() {
    let fd = FundamentalDiagram::from_vph(1600.0, 0.025, 0.2).expect("valid diagram");
    let left = TruncatedNormalSpec::new(0.02, 0.01, 0.0, 0.2).expect("valid spec");
    let right = TruncatedNormalSpec::new(0.03, 0.01, 0.0, 0.2).expect("valid spec");

    let speeds = mixture_experiment(&fd, &left, &right, 1000, 42).expect("experiment");
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    println!("samples: {}, mean speed {:.3} m/s", speeds.len(), mean);
    println!(
        "point prediction at the means (0.02, 0.03): {:.3} m/s",
        fd.shock_speed(0.02, 0.03).unwrap()
    );

    let report = kde_modes(&speeds, None, 0.1);
    println!("\nKDE modes (bandwidth {:.3} m/s):", report.bandwidth);
    for mode in &report.modes {
        println!("  {:7.3} m/s carrying {:5.1}% of the sample", mode.location, 100.0 * mode.mass);
    }
    println!(
        "\nclusters near +v_f = {:.2} m/s (both sides free) and -w = {:.2} m/s (both congested)",
        fd.free_flow_speed(),
        -fd.backward_wave_speed()
    );

    // Coarse text histogram.
    let (lo, hi) = (-5.0, 20.0);
    let mut bins = [0usize; 25];
    for &s in &speeds {
        let k = (((s - lo) / (hi - lo) * bins.len() as f64) as usize).min(bins.len() - 1);
        bins[k] += 1;
    }
    println!();
    for (k, &count) in bins.iter().enumerate() {
        let x = lo + (k as f64 + 0.5) * (hi - lo) / bins.len() as f64;
        println!("{x:6.1} m/s | {}", "#".repeat(count / 4));
    }
}
