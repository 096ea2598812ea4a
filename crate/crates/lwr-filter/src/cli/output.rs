//! Result-file writers. All measured numerics print with 9 significant
//! digits in scientific notation, locale-free.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::filter::{ObservationFrame, PosteriorSummary};
use crate::fundamental_diagram::SECONDS_PER_HOUR;
use crate::godunov::DensityState;
use crate::scenarios::{FdSchedule, SyntheticScenario, density_to_occupancy};

use super::CliError;

/// 9 significant digits, scientific notation.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// True-trajectory CSV: one row per solver step, one column per cell.
pub fn write_trajectory(path: &Path, cells: usize, rows: &[DensityState]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let header: Vec<String> = (1..=cells).map(|c| format!("cell_{c}")).collect();
    writeln!(w, "t_s,{}", header.join(","))?;
    for state in rows {
        let values: Vec<String> = state.densities.iter().map(|&d| fmt9(d)).collect();
        writeln!(w, "{},{}", fmt9(state.time_s), values.join(","))?;
    }
    Ok(w.flush()?)
}

/// Per-frame state summary: `t_s,cell,mean,lo2_5,hi97_5`.
pub fn write_state_summary(path: &Path, summaries: &[PosteriorSummary]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "t_s,cell,mean,lo2_5,hi97_5")?;
    for s in summaries {
        for (i, mean) in s.cell_mean.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt9(s.time_s),
                i + 1,
                fmt9(*mean),
                fmt9(s.cell_lo[i]),
                fmt9(s.cell_hi[i]),
            )?;
        }
    }
    Ok(w.flush()?)
}

/// Per-frame parameter summary:
/// `t_s,qc_mean,qc_lo,qc_hi,rhoc_mean,rhoc_lo,rhoc_hi`.
pub fn write_parameter_summary(
    path: &Path,
    summaries: &[PosteriorSummary],
) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "t_s,qc_mean,qc_lo,qc_hi,rhoc_mean,rhoc_lo,rhoc_hi")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt9(s.time_s),
            fmt9(s.capacity_vph.mean),
            fmt9(s.capacity_vph.lo),
            fmt9(s.capacity_vph.hi),
            fmt9(s.critical_density.mean),
            fmt9(s.critical_density.lo),
            fmt9(s.critical_density.hi),
        )?;
    }
    Ok(w.flush()?)
}

/// Sequential log Bayes factor series: `t_s,log_bayes_factor`.
pub fn write_bayes_series(path: &Path, series: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "t_s,log_bayes_factor")?;
    for (t, log_b) in series {
        writeln!(w, "{},{}", fmt9(*t), fmt9(*log_b))?;
    }
    Ok(w.flush()?)
}

/// Shock-speed sample: `sample,speed_mps`.
pub fn write_speed_sample(path: &Path, speeds: &[f64]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "sample,speed_mps")?;
    for (i, s) in speeds.iter().enumerate() {
        writeln!(w, "{},{}", i, fmt9(*s))?;
    }
    Ok(w.flush()?)
}

/// Synthetic observation export in the sensor-CSV schema plus the true
/// per-cell densities. Occupancy uses the effective vehicle length
/// 1/jam so every density maps inside [0, 100]%.
pub fn write_observations_export(
    path: &Path,
    scenario: &SyntheticScenario,
    schedule: &FdSchedule,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    let cells = scenario.definition.grid.cells;
    let truth_cols: Vec<String> = (1..=cells)
        .map(|c| format!("true_density_veh_per_m_cell_{c}"))
        .collect();
    writeln!(
        w,
        "timestamp,sensor_id,occupancy_pct,flow_vph,speed_mps,{}",
        truth_cols.join(",")
    )?;
    for (frame, truth) in scenario.frames.iter().zip(&scenario.truth) {
        let fd = schedule.at(frame.time_s);
        let vehicle_length = 1.0 / fd.jam_density();
        let truth_values: Vec<String> = truth.densities.iter().map(|&d| fmt9(d)).collect();
        let mut row = |sensor: &str, density: f64| -> Result<(), CliError> {
            let density = density.clamp(0.0, fd.jam_density());
            let occupancy = density_to_occupancy(density, vehicle_length);
            let flow_vph = fd.flow(density).expect("clamped density") * SECONDS_PER_HOUR;
            let speed = if density > 0.0 {
                fmt9(flow_vph / SECONDS_PER_HOUR / density)
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt9(frame.time_s),
                sensor,
                fmt9(occupancy),
                fmt9(flow_vph),
                speed,
                truth_values.join(",")
            )?;
            Ok(())
        };
        row("left_boundary", frame.boundary_left)?;
        for (j, &cell) in scenario.model.sensor_cells().iter().enumerate() {
            row(&format!("cell_{cell}"), frame.values[j])?;
        }
        row("right_boundary", frame.boundary_right)?;
    }
    Ok(w.flush()?)
}

/// Frames as measured (CSV replay path) for downstream plotting.
pub fn write_frames_csv(
    path: &Path,
    frames: &[ObservationFrame],
    sensor_cells: &[usize],
) -> Result<(), CliError> {
    let mut w = create(path)?;
    let cols: Vec<String> = sensor_cells.iter().map(|c| format!("cell_{c}")).collect();
    writeln!(w, "t_s,boundary_left,boundary_right,{}", cols.join(","))?;
    for f in frames {
        let values: Vec<String> = f.values.iter().map(|&v| fmt9(v)).collect();
        writeln!(
            w,
            "{},{},{},{}",
            fmt9(f.time_s),
            fmt9(f.boundary_left),
            fmt9(f.boundary_right),
            values.join(",")
        )?;
    }
    Ok(w.flush()?)
}
