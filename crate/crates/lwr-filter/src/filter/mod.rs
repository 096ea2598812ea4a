//! Fully adapted particle filter with online parameter learning.
//!
//! The hidden state is the vector of cell densities; the static
//! parameters are the fundamental-diagram triple carried by each
//! particle. Each frame runs three steps: resample on the Gaussian
//! predictive likelihood, propagate from the exact Kalman conditional
//! posterior, and replenish the parameters with a uniform jitter kernel.
//!
//! With diagonal observation and evolution covariances (v I, w I) and a
//! cell-selection observation operator, the Kalman algebra collapses to
//! per-cell scalars; `kalman_posterior` implements that closed form.

pub mod resample;
pub mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fundamental_diagram::FundamentalDiagram;
use crate::godunov::{
    BoundarySeries, CflPolicy, DensityState, RoadGrid, SolverError, check_cfl, evolve,
};

pub use resample::{ResamplingScheme, multinomial, resample_indices, systematic};
pub use rng::{Stream, derive_rng};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid noise spec: observation variance {v} (need > 0), evolution variance {w} (need >= 0)")]
    InvalidNoise { v: f64, w: f64 },
    #[error("invalid sensor cells {cells:?}: need strictly increasing indices in 1..={max}")]
    InvalidSensorCells { cells: Vec<usize>, max: usize },
    #[error("frame at t={time_s} s has {got} readings, observation model has {expected} sensors")]
    FrameLengthMismatch { time_s: f64, got: usize, expected: usize },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("frame {index} at t={time_s} s is out of order or leaves a gap (expected t={expected_s} s)")]
    FrameTiming { index: usize, time_s: f64, expected_s: f64 },
    #[error("CFL violated for a particle diagram in strict mode at frame t={time_s} s: {source}")]
    CflRefused { time_s: f64, source: SolverError },
    #[error("solver failure: {0}")]
    Solver(#[from] SolverError),
    #[error("invalid jitter spec: all perturbation half-widths must be >= 0")]
    InvalidJitter,
    #[error("invalid regularization spec: sd must be > 0 when enabled")]
    InvalidRegularization,
    #[error("invalid parameter prior: {0}")]
    InvalidPrior(String),
}

/// Homoscedastic diagonal noise: V = v I on sensors, W = w I on cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Observation noise variance v, (veh/m)^2 per sensor.
    pub observation_variance: f64,
    /// Evolution noise variance w, (veh/m)^2 per cell per frame.
    pub evolution_variance: f64,
}

impl NoiseSpec {
    pub fn new(observation_variance: f64, evolution_variance: f64) -> Result<Self, FilterError> {
        if !(observation_variance > 0.0) || !(evolution_variance >= 0.0) {
            return Err(FilterError::InvalidNoise {
                v: observation_variance,
                w: evolution_variance,
            });
        }
        Ok(Self {
            observation_variance,
            evolution_variance,
        })
    }

    /// Construct from standard deviations, the unit quoted in sensor specs.
    pub fn from_std_devs(observation_sd: f64, evolution_sd: f64) -> Result<Self, FilterError> {
        Self::new(observation_sd * observation_sd, evolution_sd * evolution_sd)
    }
}

/// Which cells carry sensors. Defines the observation operator H as the
/// row-selection matrix picking the listed cells (1-based, increasing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    sensor_cells: Vec<usize>,
}

impl ObservationModel {
    pub fn new(sensor_cells: Vec<usize>, cells: usize) -> Result<Self, FilterError> {
        let increasing = sensor_cells.windows(2).all(|w| w[0] < w[1]);
        let in_range = sensor_cells.iter().all(|&c| c >= 1 && c <= cells);
        if !increasing || !in_range {
            return Err(FilterError::InvalidSensorCells {
                cells: sensor_cells,
                max: cells,
            });
        }
        Ok(Self { sensor_cells })
    }

    pub fn sensor_cells(&self) -> &[usize] {
        &self.sensor_cells
    }

    pub fn len(&self) -> usize {
        self.sensor_cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensor_cells.is_empty()
    }

    /// Apply H: extract the sensed cells from a full state vector.
    pub fn project(&self, state: &[f64]) -> Vec<f64> {
        self.sensor_cells.iter().map(|&c| state[c - 1]).collect()
    }
}

/// One sensor snapshot plus the boundary densities that drive the
/// evolution over the preceding inter-observation interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub time_s: f64,
    /// Measured densities, one per sensor cell, veh/m.
    pub values: Vec<f64>,
    pub boundary_left: f64,
    pub boundary_right: f64,
}

/// One particle: a density state paired with a diagram hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub state: DensityState,
    pub fd: FundamentalDiagram,
}

/// Half-widths of the uniform replenishment kernel. Zero means the
/// corresponding parameter is not learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct JitterSpec {
    pub capacity_vph: f64,
    pub critical_density: f64,
    pub jam_density: f64,
}

impl JitterSpec {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.capacity_vph >= 0.0 && self.critical_density >= 0.0 && self.jam_density >= 0.0 {
            Ok(())
        } else {
            Err(FilterError::InvalidJitter)
        }
    }
}

/// Optional weight regularization toward a free-flow speed estimate:
/// weights are multiplied by a normal density in q_c/rho_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSpec {
    pub enabled: bool,
    /// Target free-flow speed, m/s.
    pub free_flow_speed_mps: f64,
    /// Prior standard deviation, m/s.
    pub sd_mps: f64,
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            free_flow_speed_mps: 17.0,
            sd_mps: 5.0,
        }
    }
}

/// Per-frame posterior report computed from the equally weighted
/// post-resampling ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub time_s: f64,
    pub cell_mean: Vec<f64>,
    pub cell_lo: Vec<f64>,
    pub cell_hi: Vec<f64>,
    pub capacity_vph: ParamSummary,
    pub critical_density: ParamSummary,
    pub jam_density: ParamSummary,
    /// Log of the frame marginal predictive density estimate.
    pub log_evidence: f64,
    pub degenerate: bool,
    pub uninformative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub noise: NoiseSpec,
    pub jitter: JitterSpec,
    pub regularization: RegularizationSpec,
    pub resampling: ResamplingScheme,
    pub cfl_policy: CflPolicy,
    /// Credible-interval quantile levels for summaries.
    pub credible_levels: (f64, f64),
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(noise: NoiseSpec, seed: u64) -> Self {
        Self {
            noise,
            jitter: JitterSpec::default(),
            regularization: RegularizationSpec::default(),
            resampling: ResamplingScheme::default(),
            cfl_policy: CflPolicy::Warn,
            credible_levels: (0.025, 0.975),
            seed,
        }
    }
}

/// Run-level counters surfaced for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RunDiagnostics {
    pub clamped_cells: u64,
    pub cfl_violations: u64,
    pub degenerate_frames: u64,
    pub uninformative_frames: u64,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub summaries: Vec<PosteriorSummary>,
    /// Sum of per-frame log evidences: the run's log marginal likelihood.
    pub total_log_evidence: f64,
    pub diagnostics: RunDiagnostics,
}

// ---------------------------------------------------------------------------
// Kalman algebra (diagonal closed form)
// ---------------------------------------------------------------------------

/// Kalman gain entry for a sensed cell: w / (v + w).
pub fn kalman_gain(v: f64, w: f64) -> f64 {
    w / (v + w)
}

/// Variance of the predictive likelihood per sensor: v + w.
pub fn predictive_variance(v: f64, w: f64) -> f64 {
    v + w
}

/// Conditional posterior of the next state given the forecast mean
/// (covariance w I) and the observation (noise v I at the sensor cells).
/// Returns the per-cell posterior mean and variance: sensed cell j gets
/// mean `mu_f[j] + gain * (y_j - mu_f[j])` and variance `w * (1 - gain)`;
/// unsensed cells keep mean mu_f and variance w.
pub fn kalman_posterior(
    forecast_mean: &[f64],
    model: &ObservationModel,
    v: f64,
    w: f64,
    y: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let gain = kalman_gain(v, w);
    let mut mean = forecast_mean.to_vec();
    let mut var = vec![w; forecast_mean.len()];
    for (j, &cell) in model.sensor_cells().iter().enumerate() {
        let i = cell - 1;
        mean[i] += gain * (y[j] - forecast_mean[i]);
        var[i] = w * (1.0 - gain);
    }
    (mean, var)
}

/// Log density of the observation under the predictive distribution
/// N(H mu_f, (v + w) I). Empty sensor lists contribute log(1) = 0.
pub fn predictive_loglik_from_forecast(
    forecast_mean: &[f64],
    model: &ObservationModel,
    noise: &NoiseSpec,
    y: &[f64],
) -> f64 {
    let s = predictive_variance(noise.observation_variance, noise.evolution_variance);
    let norm = -0.5 * (2.0 * std::f64::consts::PI * s).ln();
    model
        .sensor_cells()
        .iter()
        .zip(y)
        .map(|(&cell, &obs)| {
            let d = obs - forecast_mean[cell - 1];
            norm - 0.5 * d * d / s
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Per-particle operations
// ---------------------------------------------------------------------------

/// Deterministic forecast: the particle state evolved to the frame time.
#[derive(Debug, Clone)]
pub struct Forecast {
    pub mean: Vec<f64>,
    /// Forecast covariance is w I; this is w.
    pub variance: f64,
    pub cfl_violated: bool,
}

/// Evolution abstraction so tests can swap the Godunov map for the
/// identity and check the conditionally linear Kalman algebra exactly.
pub(crate) trait EvolutionMap: Sync {
    fn forecast_mean(
        &self,
        particle: &Particle,
        frame: &ObservationFrame,
        grid: &RoadGrid,
        policy: CflPolicy,
    ) -> Result<(Vec<f64>, bool), FilterError>;
}

pub(crate) struct GodunovMap;

impl EvolutionMap for GodunovMap {
    fn forecast_mean(
        &self,
        particle: &Particle,
        frame: &ObservationFrame,
        grid: &RoadGrid,
        policy: CflPolicy,
    ) -> Result<(Vec<f64>, bool), FilterError> {
        let report = check_cfl(&particle.fd, grid);
        if !report.satisfied && policy == CflPolicy::Strict {
            return Err(FilterError::CflRefused {
                time_s: frame.time_s,
                source: SolverError::CflViolation {
                    dt_s: grid.dt_s,
                    limit_s: report.limit_dt_s,
                    max_wave_speed: report.max_wave_speed,
                    cell_length_m: grid.cell_length_m,
                },
            });
        }
        // Boundary data is shared across particles; a particle whose
        // jittered jam density sits below a boundary reading still has to
        // evolve, so boundaries are clipped into its own physical range.
        let jam = particle.fd.jam_density();
        let boundaries = BoundarySeries::constant(
            frame.boundary_left.clamp(0.0, jam),
            frame.boundary_right.clamp(0.0, jam),
        );
        let out = evolve(
            &particle.state,
            &boundaries,
            &particle.fd,
            grid,
            grid.substeps_per_observation,
            CflPolicy::Warn,
        )?;
        Ok((out.state.densities, !report.satisfied))
    }
}

#[cfg(test)]
pub(crate) struct IdentityMap;

#[cfg(test)]
impl EvolutionMap for IdentityMap {
    fn forecast_mean(
        &self,
        particle: &Particle,
        _frame: &ObservationFrame,
        _grid: &RoadGrid,
        _policy: CflPolicy,
    ) -> Result<(Vec<f64>, bool), FilterError> {
        Ok((particle.state.densities.clone(), false))
    }
}

/// Forecast one particle to the frame time: mean from the solver over
/// `substeps_per_observation` steps, covariance w I.
pub fn forecast(
    particle: &Particle,
    frame: &ObservationFrame,
    grid: &RoadGrid,
    noise: &NoiseSpec,
    policy: CflPolicy,
) -> Result<Forecast, FilterError> {
    let (mean, cfl_violated) = GodunovMap.forecast_mean(particle, frame, grid, policy)?;
    Ok(Forecast {
        mean,
        variance: noise.evolution_variance,
        cfl_violated,
    })
}

/// Predictive log likelihood of a frame under one particle.
pub fn predictive_loglik(
    particle: &Particle,
    frame: &ObservationFrame,
    model: &ObservationModel,
    noise: &NoiseSpec,
    grid: &RoadGrid,
    policy: CflPolicy,
) -> Result<f64, FilterError> {
    let fc = forecast(particle, frame, grid, noise, policy)?;
    Ok(predictive_loglik_from_forecast(&fc.mean, model, noise, &frame.values))
}

fn sample_posterior_state<R: Rng>(
    forecast_mean: &[f64],
    model: &ObservationModel,
    noise: &NoiseSpec,
    y: &[f64],
    jam: f64,
    time_s: f64,
    rng: &mut R,
) -> (DensityState, u64) {
    let (mean, var) = kalman_posterior(
        forecast_mean,
        model,
        noise.observation_variance,
        noise.evolution_variance,
        y,
    );
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut clamped = 0u64;
    let densities = mean
        .iter()
        .zip(&var)
        .map(|(&m, &s2)| {
            let draw = if s2 > 0.0 {
                m + s2.sqrt() * normal.sample(rng)
            } else {
                m
            };
            let kept = draw.clamp(0.0, jam);
            if kept != draw {
                clamped += 1;
            }
            kept
        })
        .collect();
    (DensityState::new(densities, time_s), clamped)
}

/// Draw the next state from the exact conditional posterior
/// N(mu_{t+1}, C_{t+1}); sampled values are clamped into [0, jam].
pub fn propagate<R: Rng>(
    particle: &Particle,
    frame: &ObservationFrame,
    model: &ObservationModel,
    noise: &NoiseSpec,
    grid: &RoadGrid,
    policy: CflPolicy,
    rng: &mut R,
) -> Result<(DensityState, u64), FilterError> {
    let fc = forecast(particle, frame, grid, noise, policy)?;
    Ok(sample_posterior_state(
        &fc.mean,
        model,
        noise,
        &frame.values,
        particle.fd.jam_density(),
        frame.time_s,
        rng,
    ))
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Normalize weights in the log domain with max subtraction.
///
/// Returns (normalized weights, frame log evidence, degenerate flag).
/// The evidence uses the raw predictive log likelihoods only; the
/// optional regularization terms affect the weights but never the
/// evidence. If every weight underflows (or is non-finite) the frame is
/// flagged degenerate and weights fall back to uniform.
pub fn frame_weights(logliks: &[f64], log_regularizers: Option<&[f64]>) -> (Vec<f64>, f64, bool) {
    let n = logliks.len();
    debug_assert!(n > 0);
    let log_evidence = log_sum_exp(logliks) - (n as f64).ln();

    let combined: Vec<f64> = match log_regularizers {
        Some(reg) => logliks.iter().zip(reg).map(|(a, b)| a + b).collect(),
        None => logliks.to_vec(),
    };
    let max = combined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (vec![1.0 / n as f64; n], log_evidence, true);
    }
    let mut weights: Vec<f64> = combined.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return (vec![1.0 / n as f64; n], log_evidence, true);
    }
    for w in &mut weights {
        *w /= sum;
    }
    (weights, log_evidence, false)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

fn log_regularizer(fd: &FundamentalDiagram, reg: &RegularizationSpec) -> f64 {
    let vf = fd.free_flow_speed();
    let z = (vf - reg.free_flow_speed_mps) / reg.sd_mps;
    -0.5 * z * z - (reg.sd_mps * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

// ---------------------------------------------------------------------------
// Replenishment
// ---------------------------------------------------------------------------

/// Reflect a value into the open interval (lo, hi) and keep it strictly
/// inside; point masses at the bounds would defeat the uniform kernel.
fn reflect_into(mut value: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(hi > lo);
    let width = hi - lo;
    for _ in 0..64 {
        if value < lo {
            value = 2.0 * lo - value;
        } else if value > hi {
            value = 2.0 * hi - value;
        } else {
            break;
        }
    }
    let margin = 1e-12 * width.max(1.0);
    value.clamp(lo + margin, hi - margin)
}

/// Perturb a resampled particle's parameters with independent
/// Uniform(-eps, +eps) draws, reflecting back into the feasible set
/// {q_c > 0, 0 < rho_c < rho_jam}. The state is re-clamped when a
/// shrunken jam density leaves it out of range.
fn replenish<R: Rng>(
    fd: &FundamentalDiagram,
    state: &mut DensityState,
    jitter: &JitterSpec,
    rng: &mut R,
) -> (FundamentalDiagram, u64) {
    let mut capacity_vph = fd.capacity_vph();
    let mut critical = fd.critical_density();
    let mut jam = fd.jam_density();

    if jitter.capacity_vph > 0.0 {
        capacity_vph += rng.random_range(-jitter.capacity_vph..=jitter.capacity_vph);
        capacity_vph = reflect_into(capacity_vph, 0.0, 1e12);
    }
    if jitter.jam_density > 0.0 {
        jam += rng.random_range(-jitter.jam_density..=jitter.jam_density);
        jam = reflect_into(jam, 0.0, 1e6);
    }
    if jitter.critical_density > 0.0 {
        critical += rng.random_range(-jitter.critical_density..=jitter.critical_density);
    }
    critical = reflect_into(critical, 0.0, jam);

    let mut clamped = 0u64;
    for rho in &mut state.densities {
        if *rho > jam {
            *rho = jam;
            clamped += 1;
        }
    }
    let fd = FundamentalDiagram::from_vph(capacity_vph, critical, jam)
        .expect("reflected parameters are feasible");
    (fd, clamped)
}

// ---------------------------------------------------------------------------
// One filter step
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PfStepResult {
    pub particles: Vec<Particle>,
    pub log_evidence: f64,
    pub degenerate: bool,
    pub uninformative: bool,
    pub clamped_cells: u64,
    pub cfl_violations: u64,
}

/// Resample / propagate / replenish for one observation frame.
pub fn pf_step(
    particles: &[Particle],
    frame: &ObservationFrame,
    model: &ObservationModel,
    grid: &RoadGrid,
    cfg: &FilterConfig,
    frame_index: u64,
) -> Result<PfStepResult, FilterError> {
    pf_step_with(&GodunovMap, particles, frame, model, grid, cfg, frame_index)
}

pub(crate) fn pf_step_with<E: EvolutionMap>(
    dynamics: &E,
    particles: &[Particle],
    frame: &ObservationFrame,
    model: &ObservationModel,
    grid: &RoadGrid,
    cfg: &FilterConfig,
    frame_index: u64,
) -> Result<PfStepResult, FilterError> {
    if particles.is_empty() {
        return Err(FilterError::EmptyEnsemble);
    }
    if frame.values.len() != model.len() {
        return Err(FilterError::FrameLengthMismatch {
            time_s: frame.time_s,
            got: frame.values.len(),
            expected: model.len(),
        });
    }
    cfg.jitter.validate()?;
    if cfg.regularization.enabled && !(cfg.regularization.sd_mps > 0.0) {
        return Err(FilterError::InvalidRegularization);
    }
    let n = particles.len();
    let uninformative = model.is_empty();

    // Forecast every particle once; both the weights and the propagation
    // reuse these means.
    let forecasts: Vec<(Vec<f64>, bool)> = particles
        .par_iter()
        .map(|p| dynamics.forecast_mean(p, frame, grid, cfg.cfl_policy))
        .collect::<Result<_, _>>()?;
    let cfl_violations = forecasts.iter().filter(|(_, violated)| *violated).count() as u64;

    let logliks: Vec<f64> = forecasts
        .iter()
        .map(|(mean, _)| predictive_loglik_from_forecast(mean, model, &cfg.noise, &frame.values))
        .collect();
    let log_reg: Option<Vec<f64>> = cfg.regularization.enabled.then(|| {
        particles
            .iter()
            .map(|p| log_regularizer(&p.fd, &cfg.regularization))
            .collect()
    });
    let (weights, log_evidence, degenerate) = frame_weights(&logliks, log_reg.as_deref());

    let mut resample_rng = derive_rng(cfg.seed, frame_index, 0, Stream::Resample);
    let ancestors = resample_indices(cfg.resampling, &weights, n, &mut resample_rng);

    let results: Vec<(Particle, u64)> = ancestors
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let parent = &particles[k];
            let mut prop_rng = derive_rng(cfg.seed, frame_index, i as u64, Stream::Propagate);
            let (mut state, clamped_prop) = sample_posterior_state(
                &forecasts[k].0,
                model,
                &cfg.noise,
                &frame.values,
                parent.fd.jam_density(),
                frame.time_s,
                &mut prop_rng,
            );
            let mut jitter_rng = derive_rng(cfg.seed, frame_index, i as u64, Stream::Jitter);
            let (fd, clamped_jam) = replenish(&parent.fd, &mut state, &cfg.jitter, &mut jitter_rng);
            (Particle { state, fd }, clamped_prop + clamped_jam)
        })
        .collect();

    let clamped_cells = results.iter().map(|(_, c)| *c).sum();
    let particles = results.into_iter().map(|(p, _)| p).collect();

    Ok(PfStepResult {
        particles,
        log_evidence,
        degenerate,
        uninformative,
        clamped_cells,
        cfl_violations,
    })
}

// ---------------------------------------------------------------------------
// Whole-stream driver
// ---------------------------------------------------------------------------

/// Type-7 empirical quantile (linear interpolation between order
/// statistics) of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in quantile input"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn summarize(
    particles: &[Particle],
    time_s: f64,
    step: &PfStepResult,
    levels: (f64, f64),
) -> PosteriorSummary {
    let cells = particles[0].state.densities.len();
    let n = particles.len() as f64;
    let mut cell_mean = Vec::with_capacity(cells);
    let mut cell_lo = Vec::with_capacity(cells);
    let mut cell_hi = Vec::with_capacity(cells);
    let mut buf = vec![0.0; particles.len()];
    for c in 0..cells {
        for (i, p) in particles.iter().enumerate() {
            buf[i] = p.state.densities[c];
        }
        cell_mean.push(buf.iter().sum::<f64>() / n);
        cell_lo.push(quantile(&buf, levels.0));
        cell_hi.push(quantile(&buf, levels.1));
    }
    for c in 0..cells {
        debug_assert!(cell_lo[c] <= cell_mean[c] + 1e-12 && cell_mean[c] <= cell_hi[c] + 1e-12);
    }
    let param = |extract: &dyn Fn(&Particle) -> f64| {
        let values: Vec<f64> = particles.iter().map(extract).collect();
        ParamSummary {
            mean: values.iter().sum::<f64>() / n,
            lo: quantile(&values, levels.0),
            hi: quantile(&values, levels.1),
        }
    };
    PosteriorSummary {
        time_s,
        cell_mean,
        cell_lo,
        cell_hi,
        capacity_vph: param(&|p| p.fd.capacity_vph()),
        critical_density: param(&|p| p.fd.critical_density()),
        jam_density: param(&|p| p.fd.jam_density()),
        log_evidence: step.log_evidence,
        degenerate: step.degenerate,
        uninformative: step.uninformative,
    }
}

/// Run the filter over a time-ordered frame stream, producing one
/// posterior summary per frame. Frames must be spaced by the grid's
/// observation interval.
pub fn run_filter(
    initial: Vec<Particle>,
    frames: &[ObservationFrame],
    model: &ObservationModel,
    grid: &RoadGrid,
    cfg: &FilterConfig,
) -> Result<FilterOutput, FilterError> {
    run_filter_observed(initial, frames, model, grid, cfg, |_, _| {})
}

/// `run_filter` with a per-frame observer that sees the post-step
/// ensemble; used for mixture diagnostics on unsensed cells.
pub fn run_filter_observed<F: FnMut(usize, &[Particle])>(
    initial: Vec<Particle>,
    frames: &[ObservationFrame],
    model: &ObservationModel,
    grid: &RoadGrid,
    cfg: &FilterConfig,
    mut observer: F,
) -> Result<FilterOutput, FilterError> {
    if initial.is_empty() {
        return Err(FilterError::EmptyEnsemble);
    }
    let interval = grid.observation_interval_s();
    let mut expected = initial[0].state.time_s + interval;
    for (index, frame) in frames.iter().enumerate() {
        let tol = 1e-6 * interval.max(1.0);
        if (frame.time_s - expected).abs() > tol {
            return Err(FilterError::FrameTiming {
                index,
                time_s: frame.time_s,
                expected_s: expected,
            });
        }
        expected = frame.time_s + interval;
    }

    let mut particles = initial;
    let mut summaries = Vec::with_capacity(frames.len());
    let mut total_log_evidence = 0.0;
    let mut diagnostics = RunDiagnostics::default();
    for (index, frame) in frames.iter().enumerate() {
        let step = pf_step(&particles, frame, model, grid, cfg, index as u64)?;
        total_log_evidence += step.log_evidence;
        diagnostics.clamped_cells += step.clamped_cells;
        diagnostics.cfl_violations += step.cfl_violations;
        diagnostics.degenerate_frames += step.degenerate as u64;
        diagnostics.uninformative_frames += step.uninformative as u64;
        summaries.push(summarize(&step.particles, frame.time_s, &step, cfg.credible_levels));
        observer(index, &step.particles);
        particles = step.particles;
    }
    Ok(FilterOutput {
        summaries,
        total_log_evidence,
        diagnostics,
    })
}

/// Accumulate a sequential log Bayes factor from two frame evidences.
pub fn bayes_factor_update(log_b: f64, log_evidence_m1: f64, log_evidence_m0: f64) -> f64 {
    log_b + log_evidence_m1 - log_evidence_m0
}

// ---------------------------------------------------------------------------
// Initial ensemble
// ---------------------------------------------------------------------------

/// Prior over one diagram parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPrior {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
}

impl ParamPrior {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamPrior::Point(v) => v,
            ParamPrior::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    fn validate(&self, name: &str) -> Result<(), FilterError> {
        match *self {
            ParamPrior::Point(v) if v.is_finite() => Ok(()),
            ParamPrior::Uniform { lo, hi } if lo < hi && lo.is_finite() && hi.is_finite() => Ok(()),
            _ => Err(FilterError::InvalidPrior(format!("{name}: {self:?}"))),
        }
    }
}

/// Initial ensemble description: a configured initial density profile
/// plus independent parameter priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEnsembleSpec {
    pub initial_density: Vec<f64>,
    /// Capacity prior in veh/h; default U[1440, 1560].
    pub capacity_vph: ParamPrior,
    /// Critical density prior; default a point mass at 0.025 veh/m.
    pub critical_density: ParamPrior,
    pub jam_density: ParamPrior,
    pub start_time_s: f64,
}

impl InitialEnsembleSpec {
    pub fn defaults(initial_density: Vec<f64>) -> Self {
        Self {
            initial_density,
            capacity_vph: ParamPrior::Uniform { lo: 1440.0, hi: 1560.0 },
            critical_density: ParamPrior::Point(0.025),
            jam_density: ParamPrior::Point(0.2),
            start_time_s: 0.0,
        }
    }
}

/// Draw N particles: theta_0 = initial profile + N(0, w I) clamped into
/// [0, jam]; parameters from their priors.
pub fn sample_initial_ensemble(
    n: usize,
    spec: &InitialEnsembleSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<Particle>, FilterError> {
    if n == 0 {
        return Err(FilterError::EmptyEnsemble);
    }
    spec.capacity_vph.validate("capacity_vph")?;
    spec.critical_density.validate("critical_density")?;
    spec.jam_density.validate("jam_density")?;
    let sd = noise.evolution_variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let mut rng = derive_rng(seed, 0, i as u64, Stream::InitialEnsemble);
            let capacity_vph = spec.capacity_vph.sample(&mut rng);
            let critical = spec.critical_density.sample(&mut rng);
            let jam = spec.jam_density.sample(&mut rng);
            let fd = FundamentalDiagram::from_vph(capacity_vph, critical, jam).map_err(|e| {
                FilterError::InvalidPrior(format!("prior draw produced an invalid diagram: {e}"))
            })?;
            let densities = spec
                .initial_density
                .iter()
                .map(|&rho| (rho + sd * normal.sample(&mut rng)).clamp(0.0, jam))
                .collect();
            Ok(Particle {
                state: DensityState::new(densities, spec.start_time_s),
                fd,
            })
        })
        .collect()
}
