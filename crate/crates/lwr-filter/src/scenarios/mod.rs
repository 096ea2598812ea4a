//! Synthetic experiment generators and loop-detector data ingestion.
//!
//! The calibration scenario reproduces a rush-hour pattern on a short
//! segment: free flow, a breakdown forced from the downstream boundary,
//! then recovery. The accident scenario drives a capacity drop through a
//! time window. Inflow levels and the true parameter schedule are
//! stylized defaults chosen to produce a realistic pattern; they are
//! configuration, not measured ground truth, and every field can be
//! overridden.

pub mod ingest;
pub mod truncated_normal;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{
    FilterError, NoiseSpec, ObservationFrame, ObservationModel, Stream, derive_rng,
};
use crate::fundamental_diagram::{FdError, FundamentalDiagram};
use crate::godunov::{
    BoundarySeries, CflPolicy, DensityState, PiecewiseConstant, RoadGrid, SolverError, check_cfl,
    step,
};

pub use ingest::{IngestConfig, IngestError, IngestReport, SensorRecord, ingest_sensor_csv};
pub use truncated_normal::TruncatedNormalSpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario configuration violates the CFL bound: dt={dt_s} s > {limit_s} s for the diagram active at t={at_s} s")]
    CflViolation { dt_s: f64, limit_s: f64, at_s: f64 },
    #[error("invalid truncated normal (mean={mean}, sd={sd}, lower={lower}, upper={upper}): need sd > 0 and lower < upper")]
    InvalidTruncatedNormal {
        mean: f64,
        sd: f64,
        lower: f64,
        upper: f64,
    },
    #[error("truncated-normal rejection sampler exhausted {attempts} attempts")]
    TruncatedNormalRejection { attempts: usize },
    #[error("shock-speed pair degenerate after {attempts} redraw attempts (left and right densities keep coinciding)")]
    DegenerateShockPair { attempts: usize },
    #[error("occupancy {0}% outside [0, 100]")]
    OccupancyOutOfRange(f64),
    #[error("effective vehicle length {0} m must be positive")]
    InvalidVehicleLength(f64),
    #[error("accident window [{start_s}, {end_s}) s invalid or outside horizon {horizon_s} s")]
    WindowOutsideHorizon {
        start_s: f64,
        end_s: f64,
        horizon_s: f64,
    },
    #[error("drop fraction {0} outside [0, 1)")]
    InvalidDropFraction(f64),
    #[error("scenario schedule is empty or does not start at t=0")]
    InvalidSchedule,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Fd(#[from] FdError),
}

/// Piecewise-constant time schedule of true diagram parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSchedule {
    entries: Vec<(f64, FundamentalDiagram)>,
}

impl FdSchedule {
    pub fn new(entries: Vec<(f64, FundamentalDiagram)>) -> Result<Self, ScenarioError> {
        if entries.is_empty() || entries[0].0 > 0.0 {
            return Err(ScenarioError::InvalidSchedule);
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ScenarioError::InvalidSchedule);
        }
        Ok(Self { entries })
    }

    pub fn constant(fd: FundamentalDiagram) -> Self {
        Self {
            entries: vec![(0.0, fd)],
        }
    }

    pub fn at(&self, t: f64) -> &FundamentalDiagram {
        let mut current = &self.entries[0].1;
        for (from, fd) in &self.entries {
            if *from <= t {
                current = fd;
            } else {
                break;
            }
        }
        current
    }

    pub fn entries(&self) -> &[(f64, FundamentalDiagram)] {
        &self.entries
    }
}

/// Everything needed to simulate one synthetic experiment.
#[derive(Debug, Clone)]
pub struct ScenarioDefinition {
    pub grid: RoadGrid,
    pub fd_schedule: FdSchedule,
    pub boundaries: BoundarySeries,
    pub noise: NoiseSpec,
    pub sensor_cells: Vec<usize>,
    pub initial_density: Vec<f64>,
    pub horizon_s: f64,
    pub seed: u64,
}

/// A generated experiment: the deterministic true trajectory at frame
/// times plus the noisy observation stream.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub definition: ScenarioDefinition,
    pub model: ObservationModel,
    /// True state at each observation time (the solver solution; no
    /// evolution noise enters the truth).
    pub truth: Vec<DensityState>,
    pub frames: Vec<ObservationFrame>,
}

/// Simulate the definition: the truth comes from the Godunov solver under
/// the scheduled true diagram; observations add N(0, v) sensor noise.
pub fn generate(definition: ScenarioDefinition) -> Result<SyntheticScenario, ScenarioError> {
    for (from_s, fd) in definition.fd_schedule.entries() {
        let report = check_cfl(fd, &definition.grid);
        if !report.satisfied {
            return Err(ScenarioError::CflViolation {
                dt_s: definition.grid.dt_s,
                limit_s: report.limit_dt_s,
                at_s: *from_s,
            });
        }
    }
    let model = ObservationModel::new(definition.sensor_cells.clone(), definition.grid.cells)?;
    let interval = definition.grid.observation_interval_s();
    let n_frames = (definition.horizon_s / interval).round() as usize;

    let obs_sd = definition.noise.observation_variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut state = DensityState::new(definition.initial_density.clone(), 0.0);
    let mut truth = Vec::with_capacity(n_frames);
    let mut frames = Vec::with_capacity(n_frames);
    for frame_index in 0..n_frames {
        let frame_start = state.time_s;
        for _ in 0..definition.grid.substeps_per_observation {
            let t = state.time_s;
            let fd = definition.fd_schedule.at(t);
            let out = step(
                &state,
                definition.boundaries.left.value_at(t),
                definition.boundaries.right.value_at(t),
                fd,
                &definition.grid,
                CflPolicy::Strict,
            )?;
            state = out.state;
        }
        let mut rng = derive_rng(
            definition.seed,
            frame_index as u64,
            0,
            Stream::ObservationNoise,
        );
        let values = model
            .project(&state.densities)
            .into_iter()
            .map(|rho| (rho + obs_sd * normal.sample(&mut rng)).max(0.0))
            .collect();
        frames.push(ObservationFrame {
            time_s: state.time_s,
            values,
            boundary_left: definition.boundaries.left.value_at(frame_start),
            boundary_right: definition.boundaries.right.value_at(frame_start),
        });
        truth.push(state.clone());
    }
    Ok(SyntheticScenario {
        definition,
        model,
        truth,
        frames,
    })
}

// ---------------------------------------------------------------------------
// Calibration scenario
// ---------------------------------------------------------------------------

/// One entry of a parameter schedule, in ingestion units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdScheduleEntry {
    pub from_s: f64,
    pub capacity_vph: f64,
    pub critical_density: f64,
    pub jam_density: f64,
}

impl FdScheduleEntry {
    pub fn diagram(&self) -> Result<FundamentalDiagram, FdError> {
        FundamentalDiagram::from_vph(self.capacity_vph, self.critical_density, self.jam_density)
    }
}

fn schedule_from_entries(entries: &[FdScheduleEntry]) -> Result<FdSchedule, ScenarioError> {
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        out.push((e.from_s, e.diagram()?));
    }
    FdSchedule::new(out)
}

/// Rush-hour calibration experiment on a 1.5 km segment: five 300 m
/// cells, 5 s steps, a 1600 s horizon, sensors on the first and last
/// cells, breakdown forced from the downstream boundary at 180 s and
/// released at 600 s.
///
/// The inflow level, inflow cutoff and the true parameter schedule are
/// stylized defaults, exposed for override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSpec {
    pub cells: usize,
    pub cell_length_m: f64,
    pub dt_s: f64,
    pub substeps_per_observation: usize,
    pub horizon_s: f64,
    pub initial_density: f64,
    /// Observation noise standard deviation, veh/m.
    pub observation_sd: f64,
    /// Evolution noise standard deviation, veh/m.
    pub evolution_sd: f64,
    pub sensor_cells: Vec<usize>,
    /// Constant upstream inflow density until `inflow_stop_s`.
    pub inflow_density: f64,
    pub inflow_stop_s: f64,
    /// Downstream density before the breakdown.
    pub outflow_density: f64,
    /// Forced downstream density during the breakdown window.
    pub congestion_density: f64,
    pub breakdown_start_s: f64,
    pub recovery_start_s: f64,
    pub fd_schedule: Vec<FdScheduleEntry>,
    pub seed: u64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            cells: 5,
            cell_length_m: 300.0,
            dt_s: 5.0,
            substeps_per_observation: 1,
            horizon_s: 1600.0,
            initial_density: 0.01,
            observation_sd: 0.8e-2,
            evolution_sd: 0.1e-2,
            sensor_cells: vec![1, 5],
            inflow_density: 0.02,
            inflow_stop_s: 1000.0,
            outflow_density: 0.01,
            congestion_density: 0.145,
            breakdown_start_s: 180.0,
            recovery_start_s: 600.0,
            fd_schedule: vec![
                FdScheduleEntry {
                    from_s: 0.0,
                    capacity_vph: 1500.0,
                    critical_density: 0.025,
                    jam_density: 0.2,
                },
                FdScheduleEntry {
                    from_s: 800.0,
                    capacity_vph: 1400.0,
                    critical_density: 0.025,
                    jam_density: 0.2,
                },
            ],
            seed: 0,
        }
    }
}

impl CalibrationSpec {
    pub fn definition(&self) -> Result<ScenarioDefinition, ScenarioError> {
        let grid = RoadGrid::new(
            self.cells,
            self.cell_length_m,
            self.dt_s,
            self.substeps_per_observation,
        )?;
        let left = PiecewiseConstant::new(vec![
            (0.0, self.inflow_density),
            (self.inflow_stop_s, 0.0),
        ])?;
        let right = PiecewiseConstant::new(vec![
            (0.0, self.outflow_density),
            (self.breakdown_start_s, self.congestion_density),
            (self.recovery_start_s, 0.0),
        ])?;
        Ok(ScenarioDefinition {
            grid,
            fd_schedule: schedule_from_entries(&self.fd_schedule)?,
            boundaries: BoundarySeries { left, right },
            noise: NoiseSpec::from_std_devs(self.observation_sd, self.evolution_sd)?,
            sensor_cells: self.sensor_cells.clone(),
            initial_density: vec![self.initial_density; self.cells],
            horizon_s: self.horizon_s,
            seed: self.seed,
        })
    }
}

pub fn generate_calibration_scenario(
    spec: &CalibrationSpec,
) -> Result<SyntheticScenario, ScenarioError> {
    generate(spec.definition()?)
}

// ---------------------------------------------------------------------------
// Accident scenario
// ---------------------------------------------------------------------------

/// Synthetic capacity-drop experiment: a steady segment whose true
/// capacity is multiplied by (1 - drop_fraction) inside a time window
/// while congestion is forced from the downstream boundary. The filter
/// under test is never told the schedule.
///
/// Defaults mirror the accident-study segment: 845 m in four cells,
/// five-minute observations (solver substepping keeps the dynamics
/// stable), and measurement noise of 0.2e-2 veh/m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccidentSpec {
    pub baseline_capacity_vph: f64,
    pub critical_density: f64,
    pub jam_density: f64,
    pub drop_fraction: f64,
    pub drop_start_s: f64,
    pub drop_end_s: f64,
    pub cells: usize,
    pub cell_length_m: f64,
    pub dt_s: f64,
    pub substeps_per_observation: usize,
    pub horizon_s: f64,
    /// Steady ambient density outside the window.
    pub ambient_density: f64,
    /// Downstream forcing density inside the window.
    pub forcing_density: f64,
    /// Residual demand pulse after the incident clears: rush-hour
    /// congestion resumes at the downstream boundary once the blockage
    /// discharges. Zero density disables the pulse.
    pub demand_pulse_density: f64,
    pub demand_pulse_start_s: f64,
    pub demand_pulse_end_s: f64,
    pub observation_sd: f64,
    pub evolution_sd: f64,
    pub seed: u64,
}

impl Default for AccidentSpec {
    fn default() -> Self {
        Self {
            baseline_capacity_vph: 1500.0,
            critical_density: 0.025,
            jam_density: 0.2,
            drop_fraction: 0.66,
            drop_start_s: 9000.0,
            drop_end_s: 19200.0,
            cells: 4,
            cell_length_m: 845.0 / 4.0,
            dt_s: 2.5,
            substeps_per_observation: 120,
            horizon_s: 25_500.0,
            ambient_density: 0.02,
            forcing_density: 0.165,
            demand_pulse_density: 0.10,
            demand_pulse_start_s: 19_500.0,
            demand_pulse_end_s: 20_100.0,
            observation_sd: 0.2e-2,
            evolution_sd: 0.1e-2,
            seed: 0,
        }
    }
}

impl AccidentSpec {
    pub fn definition(&self) -> Result<ScenarioDefinition, ScenarioError> {
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return Err(ScenarioError::InvalidDropFraction(self.drop_fraction));
        }
        if !(self.drop_start_s < self.drop_end_s
            && self.drop_start_s >= 0.0
            && self.drop_end_s <= self.horizon_s)
        {
            return Err(ScenarioError::WindowOutsideHorizon {
                start_s: self.drop_start_s,
                end_s: self.drop_end_s,
                horizon_s: self.horizon_s,
            });
        }
        let pulse_active = self.drop_fraction > 0.0 && self.demand_pulse_density > 0.0;
        if pulse_active
            && !(self.drop_end_s < self.demand_pulse_start_s
                && self.demand_pulse_start_s < self.demand_pulse_end_s
                && self.demand_pulse_end_s <= self.horizon_s)
        {
            return Err(ScenarioError::WindowOutsideHorizon {
                start_s: self.demand_pulse_start_s,
                end_s: self.demand_pulse_end_s,
                horizon_s: self.horizon_s,
            });
        }
        let grid = RoadGrid::new(
            self.cells,
            self.cell_length_m,
            self.dt_s,
            self.substeps_per_observation,
        )?;
        let baseline = FundamentalDiagram::from_vph(
            self.baseline_capacity_vph,
            self.critical_density,
            self.jam_density,
        )?;
        let (schedule, right) = if self.drop_fraction > 0.0 {
            let dropped = FundamentalDiagram::from_vph(
                self.baseline_capacity_vph * (1.0 - self.drop_fraction),
                self.critical_density,
                self.jam_density,
            )?;
            let mut right_points = vec![
                (0.0, self.ambient_density),
                (self.drop_start_s, self.forcing_density),
                (self.drop_end_s, self.ambient_density),
            ];
            if pulse_active {
                right_points.push((self.demand_pulse_start_s, self.demand_pulse_density));
                right_points.push((self.demand_pulse_end_s, self.ambient_density));
            }
            (
                FdSchedule::new(vec![
                    (0.0, baseline),
                    (self.drop_start_s, dropped),
                    (self.drop_end_s, baseline),
                ])?,
                PiecewiseConstant::new(right_points)?,
            )
        } else {
            // No drop, no incident: the quiescent stream.
            (
                FdSchedule::constant(baseline),
                PiecewiseConstant::constant(self.ambient_density),
            )
        };
        Ok(ScenarioDefinition {
            grid,
            fd_schedule: schedule,
            boundaries: BoundarySeries {
                left: PiecewiseConstant::constant(self.ambient_density),
                right,
            },
            noise: NoiseSpec::from_std_devs(self.observation_sd, self.evolution_sd)?,
            sensor_cells: vec![1, self.cells],
            initial_density: vec![self.ambient_density; self.cells],
            horizon_s: self.horizon_s,
            seed: self.seed,
        })
    }
}

pub fn generate_accident_scenario(spec: &AccidentSpec) -> Result<SyntheticScenario, ScenarioError> {
    generate(spec.definition()?)
}

// ---------------------------------------------------------------------------
// Shock-speed mixture experiment
// ---------------------------------------------------------------------------

/// Monte Carlo distribution of the Rankine-Hugoniot shock speed when the
/// densities on both sides of an interface are uncertain. Pairs that
/// coincide exactly (undefined shock) are redrawn.
pub fn mixture_experiment(
    fd: &FundamentalDiagram,
    left: &TruncatedNormalSpec,
    right: &TruncatedNormalSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>, ScenarioError> {
    const MAX_REDRAWS: usize = 1000;
    let mut rng = derive_rng(seed, 0, 0, Stream::Mixture);
    let mut speeds = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut attempts = 0;
        let speed = loop {
            let rho_l = left.sample(&mut rng)?;
            let rho_r = right.sample(&mut rng)?;
            if rho_l != rho_r {
                break fd.shock_speed(rho_l, rho_r)?;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(ScenarioError::DegenerateShockPair {
                    attempts: MAX_REDRAWS,
                });
            }
        };
        speeds.push(speed);
    }
    Ok(speeds)
}

// ---------------------------------------------------------------------------
// Occupancy conversion
// ---------------------------------------------------------------------------

/// Convert loop-detector occupancy (percent of time covered) to density,
/// assuming a fixed effective vehicle length.
pub fn occupancy_to_density(
    occupancy_pct: f64,
    effective_vehicle_length_m: f64,
) -> Result<f64, ScenarioError> {
    if !(0.0..=100.0).contains(&occupancy_pct) {
        return Err(ScenarioError::OccupancyOutOfRange(occupancy_pct));
    }
    if !(effective_vehicle_length_m > 0.0) {
        return Err(ScenarioError::InvalidVehicleLength(
            effective_vehicle_length_m,
        ));
    }
    Ok(occupancy_pct / 100.0 / effective_vehicle_length_m)
}

/// Inverse of `occupancy_to_density`, used when exporting synthetic runs.
pub fn density_to_occupancy(density: f64, effective_vehicle_length_m: f64) -> f64 {
    (density * effective_vehicle_length_m * 100.0).clamp(0.0, 100.0)
}

// ---------------------------------------------------------------------------
// Front-passage analysis
// ---------------------------------------------------------------------------

/// Frame indices bracketing a shock front crossing one cell of the true
/// trajectory: a frame well before the rise, the frames in the middle of
/// the ramp, and a frame on the post-passage plateau.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockPassage {
    pub before: usize,
    pub during: Vec<usize>,
    pub after: usize,
}

pub fn shock_passage_frames(truth: &[DensityState], cell: usize) -> Option<ShockPassage> {
    let series: Vec<f64> = truth.iter().map(|s| s.densities[cell - 1]).collect();
    let peak_idx = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?
        .0;
    if peak_idx == 0 {
        return None;
    }
    let lo = series[..peak_idx].iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series[peak_idx];
    let delta = hi - lo;
    if delta < 0.02 {
        return None; // no meaningful passage
    }
    let level = |f: f64| lo + f * delta;
    // Last departure from the low plateau, so an initial fill-in
    // transient does not masquerade as the front.
    let rise_start = (0..peak_idx).rev().find(|&k| series[k] <= level(0.15))?;
    let rise_end = (rise_start..=peak_idx).find(|&k| series[k] >= level(0.85))?;
    let ramp = (rise_end - rise_start).max(2);
    // Ensemble front positions spread around the true front; the before
    // and after probes sit half a ramp away so stragglers on either side
    // have cleared.
    let margin = (ramp / 2).max(3);

    let before = rise_start.saturating_sub(margin);
    let during: Vec<usize> = (rise_start..rise_end)
        .filter(|&k| series[k] >= level(0.35) && series[k] <= level(0.65))
        .collect();
    // Stay on the plateau: step past the ramp while the density holds.
    let mut after = rise_end;
    let plateau_limit = (rise_end + margin).min(series.len() - 1);
    while after < plateau_limit && series[after + 1] >= level(0.8) {
        after += 1;
    }
    if during.is_empty() {
        return None;
    }
    Some(ShockPassage {
        before,
        during,
        after,
    })
}
