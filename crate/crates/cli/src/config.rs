//! Flat key-value run configuration.
//!
//! Every key can come from a TOML file, the command line (`--key=value`) or,
//! for `master_seed`, the `BFL_SEED` environment variable. Precedence is
//! file < environment < flags; unset keys fall back to the defaults below.

use std::path::Path;

use bfl_core::ensemble::Beta;
use bfl_core::experiments::{
    Dominance, EnsembleRunConfig, FreezeEndSettings, GridSpec, PlateauSettings, RevivalSettings,
};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "BFL_SEED";

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigKeys {
    /// Number of bosons.
    #[arg(long = "n")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Interaction rank.
    #[arg(long = "k")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Dyson index, 1 or 2.
    #[arg(long = "beta")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<u8>,
    /// Perturbation strength.
    #[arg(long = "lambda")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long = "realizations")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[arg(long = "master_seed")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// fixed | resampled
    #[arg(long = "diagonal_policy")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonal_policy: Option<String>,
    /// per-realization | shared
    #[arg(long = "state_policy")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_policy: Option<String>,
    /// Grid points per Heisenberg time.
    #[arg(long = "points_per_unit")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points_per_unit: Option<usize>,
    /// Last grid time, in Heisenberg times.
    #[arg(long = "t_max")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// standard | uniform
    #[arg(long = "coupling_convention")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_convention: Option<String>,
    /// as-defined | sqrt
    #[arg(long = "width_mode")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_mode: Option<String>,
    /// Number of bosons moved by the boosted couplings.
    #[arg(long = "dominant_c")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominant_c: Option<usize>,
    #[arg(long = "boost")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boost: Option<f64>,
    /// Realization index written by `trace`.
    #[arg(long = "realization")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<usize>,

    #[arg(long = "plateau_start")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_start: Option<f64>,
    #[arg(long = "plateau_end")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_end: Option<f64>,
    #[arg(long = "revival_exclusion")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revival_exclusion: Option<f64>,
    #[arg(long = "freeze_search_start")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_search_start: Option<f64>,
    #[arg(long = "freeze_threshold")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_threshold: Option<f64>,
    #[arg(long = "median_window")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_window: Option<f64>,
    #[arg(long = "freeze_required_rise")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_required_rise: Option<f64>,
    #[arg(long = "revival_start")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revival_start: Option<f64>,
    #[arg(long = "revival_end")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revival_end: Option<f64>,
    #[arg(long = "revival_min_confidence")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revival_min_confidence: Option<f64>,
    #[arg(long = "revival_segments")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revival_segments: Option<usize>,

    /// lambda | n
    #[arg(long = "sweep_parameter")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long = "sweep_values", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<f64>>,
}

/// Defaults that differ between subcommands.
#[derive(Debug, Clone, Copy)]
pub struct CommandDefaults {
    pub t_max: f64,
    pub boost: Option<f64>,
}

impl CommandDefaults {
    pub const STANDARD: Self = Self { t_max: 5.0, boost: None };
    pub const REVIVAL: Self = Self { t_max: 9.0, boost: Some(100.0) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    N,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    pub plateau: PlateauSettings,
    pub freeze: FreezeEndSettings,
    pub revival: RevivalSettings,
    pub revival_window: (f64, f64),
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ensemble: EnsembleRunConfig,
    pub analysis: AnalysisSettings,
    pub realization: usize,
    pub sweep: Option<Sweep>,
}

fn overlay(base: ConfigKeys, top: ConfigKeys) -> Result<ConfigKeys, CliError> {
    let to_table = |keys: &ConfigKeys| {
        toml::Table::try_from(keys).map_err(|e| CliError::Config(format!("cannot merge configuration: {e}")))
    };
    let mut table = to_table(&base)?;
    table.extend(to_table(&top)?);
    table.try_into().map_err(|e| CliError::Config(format!("cannot merge configuration: {e}")))
}

pub fn parse_file(text: &str) -> Result<ConfigKeys, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}

/// Merges file, environment and flags, in increasing precedence.
pub fn load(
    path: Option<&Path>,
    seed_env: Option<String>,
    flags: ConfigKeys,
) -> Result<ConfigKeys, CliError> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_file(&text)?
        }
        None => ConfigKeys::default(),
    };
    let env = match seed_env {
        Some(s) => ConfigKeys {
            master_seed: Some(s.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV} must be a non-negative integer, got {s:?}"))
            })?),
            ..Default::default()
        },
        None => ConfigKeys::default(),
    };
    overlay(overlay(file, env)?, flags)
}

fn parse_enum<T: DeserializeOwned>(key: &str, value: &str) -> Result<T, CliError> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(value))
        .map_err(|_| CliError::Config(format!("unrecognized value {value:?} for {key}")))
}

impl ConfigKeys {
    pub fn resolve(&self, defaults: CommandDefaults) -> Result<RunConfig, CliError> {
        let base = EnsembleRunConfig::default();
        let beta = match self.beta {
            Some(b) => Beta::from_index(b).map_err(|e| CliError::Config(e.to_string()))?,
            None => base.beta,
        };
        let boost = self.boost.or(defaults.boost);
        let dominance = match (self.dominant_c, boost) {
            (Some(c), boost) => Some(Dominance { c, boost: boost.unwrap_or(100.0) }),
            (None, _) if defaults.boost.is_some() => {
                return Err(CliError::Config("dominated runs need dominant_c".into()));
            }
            (None, Some(_)) => return Err(CliError::Config("boost given without dominant_c".into())),
            (None, None) => None,
        };
        let grid = GridSpec {
            points_per_unit: self.points_per_unit.unwrap_or(base.grid.points_per_unit),
            t_max: self.t_max.unwrap_or(defaults.t_max),
        };
        let ensemble = EnsembleRunConfig {
            n: self.n.unwrap_or(base.n),
            k: self.k.unwrap_or(base.k),
            beta,
            lambda: self.lambda.unwrap_or(base.lambda),
            realizations: self.realizations.unwrap_or(base.realizations),
            master_seed: self.master_seed.unwrap_or(base.master_seed),
            diagonal_policy: match &self.diagonal_policy {
                Some(v) => parse_enum("diagonal_policy", v)?,
                None => base.diagonal_policy,
            },
            state_policy: match &self.state_policy {
                Some(v) => parse_enum("state_policy", v)?,
                None => base.state_policy,
            },
            grid,
            coupling_convention: match &self.coupling_convention {
                Some(v) => parse_enum("coupling_convention", v)?,
                None => base.coupling_convention,
            },
            width_mode: match &self.width_mode {
                Some(v) => parse_enum("width_mode", v)?,
                None => base.width_mode,
            },
            dominance,
            retain_traces: false,
        };
        ensemble.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let p = PlateauSettings::default();
        let f = FreezeEndSettings::default();
        let r = RevivalSettings::default();
        let analysis = AnalysisSettings {
            plateau: PlateauSettings {
                window_start: self.plateau_start.unwrap_or(p.window_start),
                window_end: self.plateau_end.unwrap_or(p.window_end),
                revival_exclusion: self.revival_exclusion.unwrap_or(p.revival_exclusion),
                ..p
            },
            freeze: FreezeEndSettings {
                search_start: self.freeze_search_start.unwrap_or(f.search_start),
                threshold_factor: self.freeze_threshold.unwrap_or(f.threshold_factor),
                median_window: self.median_window.unwrap_or(f.median_window),
                required_rise: self.freeze_required_rise.unwrap_or(f.required_rise),
            },
            revival: RevivalSettings {
                segments: self.revival_segments.unwrap_or(r.segments),
                min_confidence: self.revival_min_confidence.unwrap_or(r.min_confidence),
            },
            revival_window: (self.revival_start.unwrap_or(1.0), self.revival_end.unwrap_or(grid.t_max)),
        };

        let sweep = match (&self.sweep_parameter, &self.sweep_values) {
            (None, None) => None,
            (Some(p), Some(values)) => {
                let parameter = match p.as_str() {
                    "lambda" => SweepParameter::Lambda,
                    "n" => SweepParameter::N,
                    other => {
                        return Err(CliError::Config(format!("sweep_parameter must be lambda or n, got {other:?}")))
                    }
                };
                if parameter == SweepParameter::N && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                    return Err(CliError::Config("sweep over n needs positive integer values".into()));
                }
                Some(Sweep { parameter, values: values.clone() })
            }
            _ => return Err(CliError::Config("sweep_parameter and sweep_values must be given together".into())),
        };

        Ok(RunConfig {
            ensemble,
            analysis,
            realization: self.realization.unwrap_or(0),
            sweep,
        })
    }
}

impl RunConfig {
    /// Every key with its effective value, suitable for writing back as a config file.
    pub fn snapshot(&self) -> ConfigKeys {
        let e = &self.ensemble;
        let a = &self.analysis;
        ConfigKeys {
            n: Some(e.n),
            k: Some(e.k),
            beta: Some(e.beta.index()),
            lambda: Some(e.lambda),
            realizations: Some(e.realizations),
            master_seed: Some(e.master_seed),
            diagonal_policy: Some(variant_name(&e.diagonal_policy)),
            state_policy: Some(variant_name(&e.state_policy)),
            points_per_unit: Some(e.grid.points_per_unit),
            t_max: Some(e.grid.t_max),
            coupling_convention: Some(variant_name(&e.coupling_convention)),
            width_mode: Some(variant_name(&e.width_mode)),
            dominant_c: e.dominance.map(|d| d.c),
            boost: e.dominance.map(|d| d.boost),
            realization: Some(self.realization),
            plateau_start: Some(a.plateau.window_start),
            plateau_end: Some(a.plateau.window_end),
            revival_exclusion: Some(a.plateau.revival_exclusion),
            freeze_search_start: Some(a.freeze.search_start),
            freeze_threshold: Some(a.freeze.threshold_factor),
            median_window: Some(a.freeze.median_window),
            freeze_required_rise: Some(a.freeze.required_rise),
            revival_start: Some(a.revival_window.0),
            revival_end: Some(a.revival_window.1),
            revival_min_confidence: Some(a.revival.min_confidence),
            revival_segments: Some(a.revival.segments),
            sweep_parameter: self.sweep.as_ref().map(|s| match s.parameter {
                SweepParameter::Lambda => "lambda".to_string(),
                SweepParameter::N => "n".to_string(),
            }),
            sweep_values: self.sweep.as_ref().map(|s| s.values.clone()),
        }
    }
}

/// Serialized name of a unit enum variant.
fn variant_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => unreachable!("expected a unit variant, got {other:?}"),
    }
}
