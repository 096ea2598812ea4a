//! Command implementations behind the thin binary.

use std::path::Path;

use crate::filter::{
    FilterConfig, FilterOutput, InitialEnsembleSpec, ObservationFrame, ObservationModel,
    bayes_factor_update, run_filter, sample_initial_ensemble,
};
use crate::godunov::{CflPolicy, DensityState, RoadGrid, check_cfl, step};
use crate::kde::kde_modes;
use crate::scenarios::{FdSchedule, ingest_sensor_csv, mixture_experiment};

use super::config::{
    CompareConfig, FilterParams, FilterRunConfig, FilterSource, Manifest, MixtureConfig,
    SimulateConfig,
};
use super::output::{self, fmt9};
use super::CliError;

/// Flag-level execution context shared by every command.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub strict_cfl: bool,
    pub out_dir: std::path::PathBuf,
}

impl RunContext {
    fn policy(&self) -> CflPolicy {
        if self.strict_cfl { CflPolicy::Strict } else { CflPolicy::Warn }
    }

    fn write_manifest<T: serde::Serialize>(
        &self,
        command: &str,
        config: &T,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            seed: self.seed,
            strict_cfl: self.strict_cfl,
            config: serde_json::to_value(config)?,
        };
        let path = self.out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        Ok(std::fs::write(path, text)?)
    }
}

/// Deterministic LWR run: writes the per-step trajectory CSV.
pub fn cmd_simulate(config: &SimulateConfig, ctx: &RunContext) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let scenario = config.scenario.with_seed(ctx.seed);
    let definition = scenario.definition()?;
    let grid = definition.grid;

    // Surface stability before running; strict mode refuses to start.
    for (from_s, fd) in definition.fd_schedule.entries() {
        let report = check_cfl(fd, &grid);
        if !report.satisfied {
            let message = format!(
                "CFL violated for the diagram active at t={from_s} s: dt={} s > {} s (max wave speed {:.3} m/s)",
                grid.dt_s, report.limit_dt_s, report.max_wave_speed
            );
            if ctx.strict_cfl {
                return Err(CliError::Physics(message));
            }
            eprintln!("warning: {message}; proceeding in warn mode");
        }
    }

    let n_steps = (definition.horizon_s / grid.dt_s).round() as usize;
    let mut state = DensityState::new(definition.initial_density.clone(), 0.0);
    let mut rows = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let t = state.time_s;
        let out = step(
            &state,
            definition.boundaries.left.value_at(t),
            definition.boundaries.right.value_at(t),
            definition.fd_schedule.at(t),
            &grid,
            CflPolicy::Warn,
        )?;
        state = out.state;
        rows.push(state.clone());
    }
    output::write_trajectory(&ctx.out_dir.join("trajectory.csv"), grid.cells, &rows)?;
    ctx.write_manifest("simulate", config)?;
    println!("simulate: wrote {} steps over {} cells", rows.len(), grid.cells);
    Ok(())
}

/// Resolved observation stream ready for filtering.
struct ResolvedSource {
    grid: RoadGrid,
    model: ObservationModel,
    frames: Vec<ObservationFrame>,
    source_noise: crate::filter::NoiseSpec,
    initial_density: Vec<f64>,
    /// True diagram schedule, when the source is synthetic.
    truth_schedule: Option<FdSchedule>,
    scenario: Option<crate::scenarios::SyntheticScenario>,
}

fn resolve_source(source: &FilterSource, ctx: &RunContext) -> Result<ResolvedSource, CliError> {
    match source {
        FilterSource::Synthetic(synthetic) => {
            let synthetic = synthetic.with_seed(ctx.seed);
            let scenario = synthetic.generate()?;
            Ok(ResolvedSource {
                grid: scenario.definition.grid,
                model: scenario.model.clone(),
                frames: scenario.frames.clone(),
                source_noise: scenario.definition.noise,
                initial_density: scenario.definition.initial_density.clone(),
                truth_schedule: Some(scenario.definition.fd_schedule.clone()),
                scenario: Some(scenario),
            })
        }
        FilterSource::Csv(csv) => {
            let grid = csv.grid()?;
            let report = ingest_sensor_csv(Path::new(&csv.path), &csv.ingest)
                .map_err(CliError::Ingest)?;
            for (line, reason) in &report.skipped {
                eprintln!("ingest: line {line}: {reason}");
            }
            if !report.gap_times_s.is_empty() {
                return Err(CliError::Config(format!(
                    "observation stream has gaps at t = {:?} s; the filter needs a contiguous stream",
                    report.gap_times_s
                )));
            }
            let model = ObservationModel::new(report.sensor_cells.clone(), grid.cells)?;
            // Re-base absolute timestamps onto the filter clock: the first
            // frame lands one observation interval after t = 0.
            let interval = grid.observation_interval_s();
            let t0 = report.frames[0].time_s;
            let frames: Vec<ObservationFrame> = report
                .frames
                .into_iter()
                .map(|mut f| {
                    f.time_s = f.time_s - t0 + interval;
                    f
                })
                .collect();
            let noise = crate::filter::NoiseSpec::from_std_devs(csv.observation_sd, csv.evolution_sd)?;
            Ok(ResolvedSource {
                model,
                frames,
                source_noise: noise,
                initial_density: vec![csv.initial_density; grid.cells],
                truth_schedule: None,
                scenario: None,
                grid,
            })
        }
    }
}

fn run_one_filter(
    resolved: &ResolvedSource,
    params: &FilterParams,
    ctx: &RunContext,
    seed_offset: u64,
) -> Result<FilterOutput, CliError> {
    let noise = params.noise(&resolved.source_noise)?;
    let mut cfg = FilterConfig::new(noise, ctx.seed.wrapping_add(seed_offset));
    cfg.jitter = params.jitter;
    cfg.regularization = params.regularization;
    cfg.resampling = params.resampling;
    cfg.cfl_policy = ctx.policy();
    let init = InitialEnsembleSpec {
        initial_density: resolved.initial_density.clone(),
        capacity_vph: params.prior.capacity_vph,
        critical_density: params.prior.critical_density,
        jam_density: params.prior.jam_density,
        start_time_s: 0.0,
    };
    let particles = sample_initial_ensemble(params.particles, &init, &noise, cfg.seed)?;
    Ok(run_filter(particles, &resolved.frames, &resolved.model, &resolved.grid, &cfg)?)
}

/// Particle filter over a synthetic or CSV stream; writes the per-frame
/// state and parameter summaries.
pub fn cmd_filter(config: &FilterRunConfig, ctx: &RunContext) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let resolved = resolve_source(&config.source, ctx)?;
    let out = run_one_filter(&resolved, &config.filter, ctx, 0x5eed)?;

    output::write_state_summary(&ctx.out_dir.join("state_summary.csv"), &out.summaries)?;
    output::write_parameter_summary(&ctx.out_dir.join("parameter_summary.csv"), &out.summaries)?;
    match (&resolved.scenario, &resolved.truth_schedule) {
        (Some(scenario), Some(schedule)) => {
            output::write_observations_export(
                &ctx.out_dir.join("observations.csv"),
                scenario,
                schedule,
            )?;
        }
        _ => {
            output::write_frames_csv(
                &ctx.out_dir.join("observations.csv"),
                &resolved.frames,
                resolved.model.sensor_cells(),
            )?;
        }
    }
    ctx.write_manifest("filter", config)?;
    if out.diagnostics.cfl_violations > 0 {
        eprintln!(
            "warning: {} particle forecasts violated the CFL bound (warn mode)",
            out.diagnostics.cfl_violations
        );
    }
    println!("final log-evidence: {}", fmt9(out.total_log_evidence));
    Ok(())
}

/// Monte Carlo shock-speed mixture experiment; writes the sample and a
/// KDE mode report.
pub fn cmd_experiment_mixture(config: &MixtureConfig, ctx: &RunContext) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let fd = config.fd.diagram()?;
    let speeds = mixture_experiment(&fd, &config.left, &config.right, config.samples, ctx.seed)?;
    output::write_speed_sample(&ctx.out_dir.join("shock_speeds.csv"), &speeds)?;

    if config.samples < 2 {
        std::fs::write(
            ctx.out_dir.join("modes.json"),
            "{\n  \"note\": \"sample too small for mode analysis\"\n}\n",
        )?;
        ctx.write_manifest("experiment-mixture", config)?;
        println!("sample of {}; mode analysis skipped", config.samples);
        return Ok(());
    }
    let report = kde_modes(&speeds, None, 0.1);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(ctx.out_dir.join("modes.json"), text)?;
    ctx.write_manifest("experiment-mixture", config)?;
    println!("modes: {}", report.mode_count());
    Ok(())
}

/// Score two filter configurations against one observation stream and
/// write the sequential log Bayes factor series.
pub fn cmd_compare_models(config: &CompareConfig, ctx: &RunContext) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let data = config.resolve_data()?;
    let resolved = resolve_source(&data, ctx)?;
    // Both models share the derived filter seed: common random numbers
    // reduce comparison variance, and identical configurations score an
    // identically zero log Bayes factor.
    let out_m1 = run_one_filter(&resolved, &config.m1.filter, ctx, 0x5eed)?;
    let out_m0 = run_one_filter(&resolved, &config.m0.filter, ctx, 0x5eed)?;

    let mut log_b = 0.0;
    let mut series = Vec::with_capacity(resolved.frames.len());
    for ((frame, s1), s0) in resolved
        .frames
        .iter()
        .zip(&out_m1.summaries)
        .zip(&out_m0.summaries)
    {
        log_b = bayes_factor_update(log_b, s1.log_evidence, s0.log_evidence);
        series.push((frame.time_s, log_b));
    }
    output::write_bayes_series(&ctx.out_dir.join("bayes_factor.csv"), &series)?;
    ctx.write_manifest("compare-models", config)?;
    println!("final log Bayes factor: {}", fmt9(log_b));
    Ok(())
}
