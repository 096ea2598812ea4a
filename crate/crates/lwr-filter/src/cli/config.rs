//! Declarative run configuration: JSON files plus flag overrides, with a
//! manifest format that reproduces any run byte-for-byte.

use serde::{Deserialize, Serialize};

use crate::filter::{
    FilterError, JitterSpec, NoiseSpec, ParamPrior, RegularizationSpec, ResamplingScheme,
};
use crate::fundamental_diagram::{FdError, FundamentalDiagram};
use crate::godunov::{RoadGrid, SolverError};
use crate::scenarios::{
    AccidentSpec, CalibrationSpec, IngestConfig, ScenarioDefinition, ScenarioError,
    SyntheticScenario, TruncatedNormalSpec, generate,
};

use super::CliError;

/// Fundamental diagram in ingestion units (capacity in veh/h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub capacity_vph: f64,
    pub critical_density: f64,
    pub jam_density: f64,
}

impl FdConfig {
    pub fn diagram(&self) -> Result<FundamentalDiagram, FdError> {
        FundamentalDiagram::from_vph(self.capacity_vph, self.critical_density, self.jam_density)
    }
}

/// Parameter priors for the initial ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub capacity_vph: ParamPrior,
    pub critical_density: ParamPrior,
    pub jam_density: ParamPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            capacity_vph: ParamPrior::Uniform {
                lo: 1440.0,
                hi: 1560.0,
            },
            critical_density: ParamPrior::Point(0.025),
            jam_density: ParamPrior::Point(0.2),
        }
    }
}

/// Filter-side parameters, shared by `filter` and `compare-models`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub particles: usize,
    /// Override of the observation noise sd; defaults to the source's.
    pub observation_sd: Option<f64>,
    pub evolution_sd: Option<f64>,
    pub prior: PriorConfig,
    pub jitter: JitterSpec,
    pub regularization: RegularizationSpec,
    pub resampling: ResamplingScheme,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            particles: 1000,
            observation_sd: None,
            evolution_sd: None,
            prior: PriorConfig::default(),
            jitter: JitterSpec {
                capacity_vph: 50.0,
                critical_density: 0.0005,
                jam_density: 0.0,
            },
            regularization: RegularizationSpec::default(),
            resampling: ResamplingScheme::Multinomial,
        }
    }
}

impl FilterParams {
    /// Noise spec after applying overrides to the source's defaults.
    pub fn noise(&self, source: &NoiseSpec) -> Result<NoiseSpec, FilterError> {
        let obs = self
            .observation_sd
            .unwrap_or_else(|| source.observation_variance.sqrt());
        let evo = self
            .evolution_sd
            .unwrap_or_else(|| source.evolution_variance.sqrt());
        NoiseSpec::from_std_devs(obs, evo)
    }
}

/// A synthetic experiment family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticSource {
    Calibration(CalibrationSpec),
    Accident(AccidentSpec),
}

impl SyntheticSource {
    pub fn definition(&self) -> Result<ScenarioDefinition, ScenarioError> {
        match self {
            SyntheticSource::Calibration(spec) => spec.definition(),
            SyntheticSource::Accident(spec) => spec.definition(),
        }
    }

    pub fn generate(&self) -> Result<SyntheticScenario, ScenarioError> {
        generate(self.definition()?)
    }

    /// Apply a seed override to the scenario's own seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SyntheticSource::Calibration(spec) => spec.seed = seed,
            SyntheticSource::Accident(spec) => spec.seed = seed,
        }
        out
    }
}

/// CSV replay source: file, sensor mapping, and the solver grid to run
/// the particles on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: String,
    pub ingest: IngestConfig,
    pub cells: usize,
    pub cell_length_m: f64,
    pub dt_s: f64,
    /// Filter model noise for replay (no synthetic source to inherit).
    pub observation_sd: f64,
    pub evolution_sd: f64,
    /// Initial density profile; a single value fills every cell.
    pub initial_density: f64,
}

impl CsvSource {
    pub fn grid(&self) -> Result<RoadGrid, CliError> {
        let substeps = self.ingest.observation_interval_s / self.dt_s;
        if (substeps - substeps.round()).abs() > 1e-9 || substeps < 1.0 {
            return Err(CliError::Config(format!(
                "observation interval {} s is not a positive multiple of dt {} s",
                self.ingest.observation_interval_s, self.dt_s
            )));
        }
        RoadGrid::new(self.cells, self.cell_length_m, self.dt_s, substeps.round() as usize)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Observation stream feeding the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterSource {
    Synthetic(SyntheticSource),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub scenario: SyntheticSource,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: SyntheticSource::Calibration(CalibrationSpec::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterRunConfig {
    pub source: FilterSource,
    pub filter: FilterParams,
}

impl Default for FilterRunConfig {
    fn default() -> Self {
        Self {
            source: FilterSource::Synthetic(SyntheticSource::Calibration(
                CalibrationSpec::default(),
            )),
            filter: FilterParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureConfig {
    pub fd: FdConfig,
    pub left: TruncatedNormalSpec,
    pub right: TruncatedNormalSpec,
    pub samples: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            fd: FdConfig {
                capacity_vph: 1600.0,
                critical_density: 0.025,
                jam_density: 0.2,
            },
            left: TruncatedNormalSpec {
                mean: 0.02,
                sd: 0.01,
                lower: 0.0,
                upper: 0.2,
            },
            right: TruncatedNormalSpec {
                mean: 0.03,
                sd: 0.01,
                lower: 0.0,
                upper: 0.2,
            },
            samples: 1000,
        }
    }
}

/// One model entry of a comparison; may restate the shared data source,
/// in which case both models must restate it identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    #[serde(default)]
    pub data: Option<FilterSource>,
    #[serde(flatten)]
    pub filter: FilterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub data: Option<FilterSource>,
    pub m1: ModelSection,
    pub m0: ModelSection,
}

impl CompareConfig {
    /// The single data source both models score. Errors when the models
    /// reference different streams.
    pub fn resolve_data(&self) -> Result<FilterSource, CliError> {
        let m1 = self.m1.data.as_ref().or(self.data.as_ref());
        let m0 = self.m0.data.as_ref().or(self.data.as_ref());
        match (m1, m0) {
            (Some(a), Some(b)) if a == b => Ok(a.clone()),
            (Some(_), Some(_)) => Err(CliError::Config(
                "m1 and m0 reference different observation streams".to_string(),
            )),
            _ => Err(CliError::Config(
                "no observation stream configured for both models".to_string(),
            )),
        }
    }
}

/// Resolved run manifest: re-running any command from this file
/// reproduces its outputs byte-for-byte. Output paths and thread counts
/// are execution environment, not experiment identity, so they are not
/// recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub strict_cfl: bool,
    pub config: serde_json::Value,
}

/// Load a command config, accepting either a bare config file or a
/// manifest produced by an earlier run of the same command.
pub fn load_config<T: serde::de::DeserializeOwned>(
    raw: &str,
    command: &str,
) -> Result<(T, Option<Manifest>), CliError> {
    let value: serde_json::Value = serde_json::from_str(raw)?;
    if value.get("command").is_some() {
        let manifest: Manifest = serde_json::from_value(value)?;
        if manifest.command != command {
            return Err(CliError::Config(format!(
                "manifest was written by '{}', not '{command}'",
                manifest.command
            )));
        }
        let config: T = serde_json::from_value(manifest.config.clone())?;
        Ok((config, Some(manifest)))
    } else {
        let config: T = serde_json::from_value(value)?;
        Ok((config, None))
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::CflViolation { .. } => CliError::Physics(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::CflViolation { .. } => CliError::Physics(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::CflRefused { .. } => CliError::Physics(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FdError> for CliError {
    fn from(e: FdError) -> Self {
        CliError::Config(e.to_string())
    }
}
