use serde::{Deserialize, Serialize};

use crate::dynamics::TimeGrid;
use crate::ensemble::{Beta, CouplingConvention, WidthMode};
use crate::error::{Error, Result};

/// Whether the k-body diagonal is shared by all realizations or drawn afresh for each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalPolicy {
    #[default]
    Fixed,
    Resampled,
}

/// Whether each realization starts from its own random state or all share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatePolicy {
    #[default]
    PerRealization,
    Shared,
}

/// Uniform grid in Heisenberg units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_unit: usize,
    pub t_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points_per_unit: 2048, t_max: 5.0 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.points_per_unit, self.t_max)
    }

    pub fn step(&self) -> f64 {
        1.0 / self.points_per_unit as f64
    }
}

/// Multiplies every coupling that moves exactly `c` bosons by `boost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub c: usize,
    pub boost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRunConfig {
    pub n: usize,
    pub k: usize,
    pub beta: Beta,
    pub lambda: f64,
    pub realizations: usize,
    pub master_seed: u64,
    pub diagonal_policy: DiagonalPolicy,
    pub state_policy: StatePolicy,
    pub grid: GridSpec,
    pub coupling_convention: CouplingConvention,
    pub width_mode: WidthMode,
    pub dominance: Option<Dominance>,
    /// Keep every realization's fidelity trace in the result.
    pub retain_traces: bool,
}

impl Default for EnsembleRunConfig {
    fn default() -> Self {
        Self {
            n: 128,
            k: 2,
            beta: Beta::Orthogonal,
            lambda: 1e-6,
            realizations: 100,
            master_seed: 0,
            diagonal_policy: DiagonalPolicy::Fixed,
            state_policy: StatePolicy::PerRealization,
            grid: GridSpec::default(),
            coupling_convention: CouplingConvention::Standard,
            width_mode: WidthMode::AsDefined,
            dominance: None,
            retain_traces: false,
        }
    }
}

impl EnsembleRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::domain("realizations must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::domain(format!("need 1 <= k <= n, got k={}, n={}", self.k, self.n)));
        }
        if let Some(d) = self.dominance {
            if d.c == 0 || d.c > self.k {
                return Err(Error::domain(format!("dominant c={} must lie in 1..={}", d.c, self.k)));
            }
            if !(d.boost >= 1.0 && d.boost.is_finite()) {
                return Err(Error::domain(format!("boost must be finite and >= 1, got {}", d.boost)));
            }
        }
        self.grid.build().map(|_| ())
    }
}
