//! First-order Godunov finite-volume solver for the LWR conservation law.
//!
//! The road segment is split into `M` uniform cells; each step solves a
//! Riemann problem at every interface and advances the cell averages by
//! the flux difference. Virtual cells on both ends carry the boundary
//! densities. This is the deterministic evolution map the filter wraps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fundamental_diagram::FundamentalDiagram;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid grid: cells={cells}, cell_length_m={cell_length_m}, dt_s={dt_s} (need cells >= 1, positive lengths and steps)")]
    InvalidGrid {
        cells: usize,
        cell_length_m: f64,
        dt_s: f64,
    },
    #[error("density {value} veh/m at {place} outside [0, {jam}] veh/m")]
    DensityOutOfRange {
        value: f64,
        jam: f64,
        place: String,
    },
    #[error("state has {got} cells, grid expects {expected}")]
    WrongStateLength { got: usize, expected: usize },
    #[error("CFL violated in strict mode: dt={dt_s} s exceeds {limit_s} s (max wave speed {max_wave_speed} m/s over {cell_length_m} m cells)")]
    CflViolation {
        dt_s: f64,
        limit_s: f64,
        max_wave_speed: f64,
        cell_length_m: f64,
    },
    #[error("boundary series does not cover t={0} s")]
    BoundaryNotCovered(f64),
}

/// Spatial and temporal discretization of one homogeneous road segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGrid {
    /// Number of interior cells (M).
    pub cells: usize,
    /// Cell length h in meters.
    pub cell_length_m: f64,
    /// Solver time step tau in seconds.
    pub dt_s: f64,
    /// Solver steps taken between consecutive observations.
    pub substeps_per_observation: usize,
}

impl RoadGrid {
    pub fn new(
        cells: usize,
        cell_length_m: f64,
        dt_s: f64,
        substeps_per_observation: usize,
    ) -> Result<Self, SolverError> {
        if cells == 0
            || !(cell_length_m > 0.0)
            || !(dt_s > 0.0)
            || substeps_per_observation == 0
        {
            return Err(SolverError::InvalidGrid {
                cells,
                cell_length_m,
                dt_s,
            });
        }
        Ok(Self {
            cells,
            cell_length_m,
            dt_s,
            substeps_per_observation,
        })
    }

    /// Seconds between consecutive observation frames.
    pub fn observation_interval_s(&self) -> f64 {
        self.dt_s * self.substeps_per_observation as f64
    }

    /// Total segment length in meters.
    pub fn length_m(&self) -> f64 {
        self.cells as f64 * self.cell_length_m
    }
}

/// Vector of cell densities at a point in simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub densities: Vec<f64>,
    pub time_s: f64,
}

impl DensityState {
    pub fn new(densities: Vec<f64>, time_s: f64) -> Self {
        Self { densities, time_s }
    }

    /// Every cell at the same density.
    pub fn uniform(cells: usize, density: f64, time_s: f64) -> Self {
        Self {
            densities: vec![density; cells],
            time_s,
        }
    }
}

/// Piecewise-constant function of time, used for boundary densities and
/// parameter schedules. Breakpoints are (from_s, value); the first must
/// cover t = 0 and times must be strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, SolverError> {
        if breakpoints.is_empty() || breakpoints[0].0 > 0.0 {
            return Err(SolverError::BoundaryNotCovered(0.0));
        }
        for pair in breakpoints.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(SolverError::BoundaryNotCovered(pair[1].0));
            }
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, value)],
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let mut value = self.breakpoints[0].1;
        for &(from, v) in &self.breakpoints {
            if from <= t {
                value = v;
            } else {
                break;
            }
        }
        value
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }
}

/// Upstream and downstream boundary densities over the solver horizon,
/// read as piecewise-constant per-substep values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySeries {
    pub left: PiecewiseConstant,
    pub right: PiecewiseConstant,
}

impl BoundarySeries {
    pub fn constant(left: f64, right: f64) -> Self {
        Self {
            left: PiecewiseConstant::constant(left),
            right: PiecewiseConstant::constant(right),
        }
    }
}

/// What to do when a step would violate the CFL stability bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CflPolicy {
    /// Refuse the step. The right choice when generating ground truth.
    Strict,
    /// Proceed anyway; callers surface the violation report. Needed for
    /// data replay on grids that do not satisfy the bound.
    #[default]
    Warn,
}

/// CFL stability report for a (diagram, grid) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub satisfied: bool,
    /// Fastest wave the diagram can produce, m/s.
    pub max_wave_speed: f64,
    /// Largest stable time step h / v_max, seconds.
    pub limit_dt_s: f64,
}

/// Check the stability bound dt <= h / v_max. Equality is allowed.
pub fn check_cfl(fd: &FundamentalDiagram, grid: &RoadGrid) -> CflReport {
    let max_wave_speed = fd.max_wave_speed();
    let limit_dt_s = grid.cell_length_m / max_wave_speed;
    CflReport {
        satisfied: grid.dt_s <= limit_dt_s,
        max_wave_speed,
        limit_dt_s,
    }
}

/// Result of one solver step (or a run of steps).
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: DensityState,
    /// Number of cell updates clamped back into [0, jam]. Always zero
    /// when inputs are in range and the CFL bound holds.
    pub clamped_cells: u64,
}

fn validate_density(value: f64, jam: f64, place: &str) -> Result<(), SolverError> {
    if !(0.0..=jam).contains(&value) || !value.is_finite() {
        return Err(SolverError::DensityOutOfRange {
            value,
            jam,
            place: place.to_string(),
        });
    }
    Ok(())
}

/// Advance one solver step with explicit boundary densities.
///
/// Update rule for interior cell i with virtual cells rho_0 = left and
/// rho_{M+1} = right:
///
/// rho_i' = rho_i + (tau/h) * (q_G(rho_{i-1}, rho_i) - q_G(rho_i, rho_{i+1}))
///
/// Results are clamped to [0, jam]; clamping is counted and reported.
pub fn step(
    state: &DensityState,
    rho_left: f64,
    rho_right: f64,
    fd: &FundamentalDiagram,
    grid: &RoadGrid,
    policy: CflPolicy,
) -> Result<StepResult, SolverError> {
    if state.densities.len() != grid.cells {
        return Err(SolverError::WrongStateLength {
            got: state.densities.len(),
            expected: grid.cells,
        });
    }
    let jam = fd.jam_density();
    validate_density(rho_left, jam, "left boundary")?;
    validate_density(rho_right, jam, "right boundary")?;
    for (i, &rho) in state.densities.iter().enumerate() {
        validate_density(rho, jam, &format!("cell {}", i + 1))?;
    }
    if policy == CflPolicy::Strict {
        let report = check_cfl(fd, grid);
        if !report.satisfied {
            return Err(SolverError::CflViolation {
                dt_s: grid.dt_s,
                limit_s: report.limit_dt_s,
                max_wave_speed: report.max_wave_speed,
                cell_length_m: grid.cell_length_m,
            });
        }
    }

    let m = grid.cells;
    let ratio = grid.dt_s / grid.cell_length_m;
    // Interface fluxes: flux[i] is the flux across the interface between
    // cell i and cell i+1, with cell 0 and cell M+1 the virtual cells.
    let mut flux = Vec::with_capacity(m + 1);
    let mut upstream = rho_left;
    for &rho in &state.densities {
        flux.push(fd.godunov_flux_unchecked(upstream, rho));
        upstream = rho;
    }
    flux.push(fd.godunov_flux_unchecked(upstream, rho_right));

    let mut clamped_cells = 0u64;
    let mut densities = Vec::with_capacity(m);
    for (i, &rho) in state.densities.iter().enumerate() {
        let raw = rho + ratio * (flux[i] - flux[i + 1]);
        let clamped = raw.clamp(0.0, jam);
        if clamped != raw {
            clamped_cells += 1;
        }
        densities.push(clamped);
    }

    Ok(StepResult {
        state: DensityState::new(densities, state.time_s + grid.dt_s),
        clamped_cells,
    })
}

/// Run `n_steps` solver steps, reading boundary values at the start of
/// each substep.
pub fn evolve(
    state: &DensityState,
    boundaries: &BoundarySeries,
    fd: &FundamentalDiagram,
    grid: &RoadGrid,
    n_steps: usize,
    policy: CflPolicy,
) -> Result<StepResult, SolverError> {
    let mut current = StepResult {
        state: state.clone(),
        clamped_cells: 0,
    };
    for _ in 0..n_steps {
        let t = current.state.time_s;
        let next = step(
            &current.state,
            boundaries.left.value_at(t),
            boundaries.right.value_at(t),
            fd,
            grid,
            policy,
        )?;
        current.state = next.state;
        current.clamped_cells += next.clamped_cells;
    }
    Ok(current)
}

/// Vehicles on the segment: h * sum of cell densities.
pub fn total_vehicles(state: &DensityState, grid: &RoadGrid) -> f64 {
    grid.cell_length_m * state.densities.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_star() -> FundamentalDiagram {
        FundamentalDiagram::from_vph(1600.0, 0.025, 0.2).unwrap()
    }

    fn grid_5() -> RoadGrid {
        RoadGrid::new(5, 300.0, 5.0, 1).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_parameters() {
        assert!(RoadGrid::new(0, 300.0, 5.0, 1).is_err());
        assert!(RoadGrid::new(5, 0.0, 5.0, 1).is_err());
        assert!(RoadGrid::new(5, 300.0, -1.0, 1).is_err());
        assert!(RoadGrid::new(5, 300.0, 5.0, 0).is_err());
    }

    #[test]
    fn cfl_examples() {
        let fd = fd_star();
        // Calibration grid: 300 m cells, 5 s steps. Limit is ~16.9 s.
        let report = check_cfl(&fd, &grid_5());
        assert!(report.satisfied);
        assert!((report.limit_dt_s - 300.0 / (64000.0 / 3600.0)).abs() < 1e-9);
        // Accident-study grid: 211 m cells with 5-minute steps violates it.
        let coarse = RoadGrid::new(4, 211.0, 300.0, 1).unwrap();
        let report = check_cfl(&fd, &coarse);
        assert!(!report.satisfied);
        assert!(report.limit_dt_s < 12.0);
        // Boundary equality is allowed.
        let v = fd.max_wave_speed();
        let exact = RoadGrid::new(4, v * 5.0, 5.0, 1).unwrap();
        assert!(check_cfl(&fd, &exact).satisfied);
    }

    #[test]
    fn uniform_state_is_a_fixed_point() {
        let fd = fd_star();
        let grid = grid_5();
        for c in [0.0, 0.01, 0.025, 0.13, 0.2] {
            let state = DensityState::uniform(5, c, 0.0);
            let out = step(&state, c, c, &fd, &grid, CflPolicy::Strict).unwrap();
            assert_eq!(out.state.densities, state.densities);
            assert_eq!(out.clamped_cells, 0);
            assert!((out.state.time_s - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_matches_hand_evaluation() {
        // Left boundary 0.05 against interior 0.01 pushes capacity flow
        // into cell 1: 0.01 + (5/300) * (1600 - 640)/3600 veh/m.
        let fd = fd_star();
        let grid = RoadGrid::new(3, 300.0, 5.0, 1).unwrap();
        let state = DensityState::uniform(3, 0.01, 0.0);
        let out = step(&state, 0.05, 0.01, &fd, &grid, CflPolicy::Strict).unwrap();
        let expected = 0.01 + 5.0 / 300.0 * (1600.0 - 640.0) / 3600.0;
        assert!((out.state.densities[0] - expected).abs() < 1e-15);
        assert_eq!(out.state.densities[1], 0.01);
        assert_eq!(out.state.densities[2], 0.01);
    }

    #[test]
    fn strict_mode_refuses_unstable_step() {
        let fd = fd_star();
        let coarse = RoadGrid::new(4, 211.0, 300.0, 1).unwrap();
        let state = DensityState::uniform(4, 0.01, 0.0);
        let err = step(&state, 0.01, 0.01, &fd, &coarse, CflPolicy::Strict).unwrap_err();
        assert!(matches!(err, SolverError::CflViolation { .. }));
        // Warn mode proceeds.
        assert!(step(&state, 0.01, 0.01, &fd, &coarse, CflPolicy::Warn).is_ok());
    }

    #[test]
    fn step_rejects_out_of_range_input() {
        let fd = fd_star();
        let grid = grid_5();
        let state = DensityState::new(vec![0.01, 0.3, 0.01, 0.01, 0.01], 0.0);
        let err = step(&state, 0.01, 0.01, &fd, &grid, CflPolicy::Warn).unwrap_err();
        assert!(matches!(err, SolverError::DensityOutOfRange { value, .. } if value == 0.3));
        let good = DensityState::uniform(5, 0.01, 0.0);
        assert!(step(&good, -0.1, 0.01, &fd, &grid, CflPolicy::Warn).is_err());
    }

    #[test]
    fn evolve_zero_steps_is_identity_and_one_step_matches_step() {
        let fd = fd_star();
        let grid = grid_5();
        let state = DensityState::new(vec![0.01, 0.02, 0.03, 0.04, 0.05], 0.0);
        let boundaries = BoundarySeries::constant(0.02, 0.05);
        let none = evolve(&state, &boundaries, &fd, &grid, 0, CflPolicy::Strict).unwrap();
        assert_eq!(none.state, state);
        let one = evolve(&state, &boundaries, &fd, &grid, 1, CflPolicy::Strict).unwrap();
        let manual = step(&state, 0.02, 0.05, &fd, &grid, CflPolicy::Strict).unwrap();
        assert_eq!(one.state, manual.state);
    }

    #[test]
    fn total_vehicles_examples() {
        let grid = grid_5();
        assert_eq!(total_vehicles(&DensityState::uniform(5, 0.0, 0.0), &grid), 0.0);
        let state = DensityState::uniform(5, 0.01, 0.0);
        assert!((total_vehicles(&state, &grid) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn riemann_front_tracks_rankine_hugoniot_speed() {
        // Admissible shock: free upstream density 0.01 running into
        // congested 0.05 downstream. The chord speed is
        // (q(0.01) - q(0.05)) / (0.01 - 0.05) = +5.079 m/s.
        let fd = fd_star();
        let cells = 20usize;
        let grid = RoadGrid::new(cells, 300.0, 5.0, 1).unwrap();
        let mut densities = vec![0.01; cells];
        for rho in densities.iter_mut().skip(cells / 2) {
            *rho = 0.05;
        }
        let state = DensityState::new(densities, 0.0);
        let boundaries = BoundarySeries::constant(0.01, 0.05);
        let n_steps = 100; // 500 s
        let out = evolve(&state, &boundaries, &fd, &grid, n_steps, CflPolicy::Strict).unwrap();

        let shock = fd.shock_speed(0.01, 0.05).unwrap();
        let expected = (cells / 2) as f64 * 300.0 + shock * 500.0;
        let front = front_position(&out.state.densities, 300.0, 0.03);
        assert!(
            (front - expected).abs() <= 300.0,
            "front at {front} m, Rankine-Hugoniot predicts {expected} m"
        );
    }

    /// Position where the density profile crosses `level`, linearly
    /// interpolated between cell centers.
    pub(crate) fn front_position(densities: &[f64], h: f64, level: f64) -> f64 {
        for i in 0..densities.len() - 1 {
            let (a, b) = (densities[i], densities[i + 1]);
            if (a - level) * (b - level) <= 0.0 && a != b {
                let frac = (level - a) / (b - a);
                return (i as f64 + 0.5) * h + frac * h;
            }
        }
        f64::NAN
    }

    fn arbitrary_fd() -> impl Strategy<Value = FundamentalDiagram> {
        (800.0..2400.0f64, 0.015..0.05f64, 0.06..0.3f64).prop_filter_map(
            "jam above critical",
            |(qc_vph, rho_c, jam)| {
                if jam > rho_c + 0.01 {
                    Some(FundamentalDiagram::from_vph(qc_vph, rho_c, jam).unwrap())
                } else {
                    None
                }
            },
        )
    }

    proptest! {
        /// Mass balance: the vehicle count changes by exactly the net
        /// boundary flux, and a CFL-satisfying step never clamps.
        #[test]
        fn conservation_and_invariant_region(
            fd in arbitrary_fd(),
            cells in 1usize..30,
            h in 50.0..500.0f64,
            dt_frac in 0.05..1.0f64,
            seed in any::<u64>(),
        ) {
            use rand::{RngExt, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let jam = fd.jam_density();
            let dt = dt_frac * h / fd.max_wave_speed();
            let grid = RoadGrid::new(cells, h, dt, 1).unwrap();
            let densities: Vec<f64> = (0..cells).map(|_| rng.random_range(0.0..=jam)).collect();
            let left = rng.random_range(0.0..=jam);
            let right = rng.random_range(0.0..=jam);
            let state = DensityState::new(densities, 0.0);
            let out = step(&state, left, right, &fd, &grid, CflPolicy::Strict).unwrap();

            prop_assert_eq!(out.clamped_cells, 0);
            for &rho in &out.state.densities {
                prop_assert!((0.0..=jam).contains(&rho));
            }

            let inflow = fd.godunov_flux(left, state.densities[0]).unwrap();
            let outflow = fd.godunov_flux(state.densities[cells - 1], right).unwrap();
            let change = total_vehicles(&out.state, &grid) - total_vehicles(&state, &grid);
            let expected = grid.dt_s * (inflow - outflow);
            let scale = total_vehicles(&state, &grid).max(1e-6);
            prop_assert!((change - expected).abs() <= 1e-12 * scale.max(expected.abs()));
        }

        /// The scheme is deterministic: same inputs, same bits.
        #[test]
        fn determinism(fd in arbitrary_fd(), left in 0.0..0.05f64, right in 0.0..0.05f64) {
            let grid = RoadGrid::new(8, 200.0, 2.0, 1).unwrap();
            let state = DensityState::uniform(8, 0.02_f64.min(fd.jam_density() / 2.0), 0.0);
            let a = step(&state, left, right, &fd, &grid, CflPolicy::Warn).unwrap();
            let b = step(&state, left, right, &fd, &grid, CflPolicy::Warn).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
