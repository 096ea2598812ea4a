//! Solve a Riemann problem with the Godunov scheme and compare the
//! simulated front position against the Rankine-Hugoniot prediction.
//!
//! Free-flowing traffic (0.01 veh/m) runs into a congested region
//! (0.05 veh/m); the resulting shock moves downstream at the chord speed
//! of the fundamental diagram between the two densities.
//!
//! Run with: cargo run --example shock_wave

use lwr_filter::{BoundarySeries, CflPolicy, DensityState, FundamentalDiagram, RoadGrid, evolve};

fn main() {
    let fd = FundamentalDiagram::from_vph(1600.0, 0.025, 0.2).expect("valid diagram");
    let cells = 20;
    let grid = RoadGrid::new(cells, 300.0, 5.0, 1).expect("valid grid");

    let upstream = 0.01;
    let downstream = 0.05;
    let mut densities = vec![upstream; cells];
    for rho in densities.iter_mut().skip(cells / 2) {
        *rho = downstream;
    }
    let state = DensityState::new(densities, 0.0);
    let boundaries = BoundarySeries::constant(upstream, downstream);

    let shock_speed = fd.shock_speed(upstream, downstream).expect("distinct states");
    println!("free-flow speed      : {:8.3} m/s", fd.free_flow_speed());
    println!("backward wave speed  : {:8.3} m/s", fd.backward_wave_speed());
    println!("Rankine-Hugoniot speed: {:7.3} m/s", shock_speed);
    println!();
    println!("{:>8} {:>12} {:>12} {:>8}", "t [s]", "front [m]", "theory [m]", "err [m]");

    let start = cells as f64 / 2.0 * grid.cell_length_m;
    let mut current = state;
    for _ in 0..5 {
        let out = evolve(&current, &boundaries, &fd, &grid, 20, CflPolicy::Strict)
            .expect("stable step");
        current = out.state;
        let t = current.time_s;
        let front = front_position(&current.densities, grid.cell_length_m, 0.03);
        let theory = start + shock_speed * t;
        println!("{t:8.0} {front:12.1} {theory:12.1} {:8.1}", front - theory);
    }
}

/// Where the profile crosses `level`, interpolated between cell centers.
fn front_position(densities: &[f64], h: f64, level: f64) -> f64 {
    for i in 0..densities.len() - 1 {
        let (a, b) = (densities[i], densities[i + 1]);
        if (a - level) * (b - level) <= 0.0 && a != b {
            return (i as f64 + 0.5) * h + (level - a) / (b - a) * h;
        }
    }
    f64::NAN
}
