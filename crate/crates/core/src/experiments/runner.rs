//! Ensemble runs under the fixed-diagonal protocol.
//!
//! Stream 0 of the master seed supplies the one-body table, the shared k-body
//! table and the shared initial state. Realization `i` draws its k-body table
//! and state from stream `i + 1`, so every realization is a pure function of
//! `(master_seed, i)` and can run on any worker.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DiagonalPolicy, EnsembleRunConfig, StatePolicy};
use super::observables::dominated_perturbation;
use crate::dynamics::{
    build_perturbed, build_reference, fidelity_trace, random_state, FidelityTrace, PerturbedHamiltonian,
    ReferenceHamiltonian, TimeGrid,
};
use crate::ensemble::{sample_couplings_with, CouplingMatrix};
use crate::error::{Error, Result};
use crate::fock::FockSpace;

/// Largest tolerated fraction of failed realizations.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Draws shared by every realization.
#[derive(Debug, Clone)]
pub struct SharedDraws {
    pub one_body: CouplingMatrix,
    pub kbody: CouplingMatrix,
    pub state: DVector<Complex64>,
}

fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

impl SharedDraws {
    pub fn new(cfg: &EnsembleRunConfig) -> Result<Self> {
        let mut rng = stream(cfg.master_seed, 0);
        let one_body = sample_couplings_with(1, cfg.beta, cfg.coupling_convention, 1.0, &mut rng)?;
        let kbody = sample_couplings_with(cfg.k, cfg.beta, cfg.coupling_convention, 1.0, &mut rng)?;
        let state = random_state(cfg.n + 1, &mut rng)?;
        Ok(Self { one_body, kbody, state })
    }
}

/// Hamiltonians and initial state of one realization.
#[derive(Debug, Clone)]
pub struct Realization {
    pub index: usize,
    pub kbody: CouplingMatrix,
    pub reference: ReferenceHamiltonian,
    pub perturbed: PerturbedHamiltonian,
    pub state: DVector<Complex64>,
}

pub fn realization(cfg: &EnsembleRunConfig, shared: &SharedDraws, index: usize) -> Result<Realization> {
    let mut rng = stream(cfg.master_seed, index as u64 + 1);
    let drawn = sample_couplings_with(cfg.k, cfg.beta, cfg.coupling_convention, 1.0, &mut rng)?;
    let own_state = random_state(cfg.n + 1, &mut rng)?;
    let mut kbody = match cfg.diagonal_policy {
        DiagonalPolicy::Fixed => drawn.with_diagonal(&shared.kbody.diagonal())?,
        DiagonalPolicy::Resampled => drawn,
    };
    if let Some(d) = cfg.dominance {
        kbody = dominated_perturbation(&kbody, d.c, d.boost)?;
    }
    let state = match cfg.state_policy {
        StatePolicy::PerRealization => own_state,
        StatePolicy::Shared => shared.state.clone(),
    };
    let space = FockSpace::new(cfg.n);
    let reference = build_reference(&shared.one_body, &kbody, cfg.lambda, space, cfg.width_mode)?;
    let perturbed = build_perturbed(&reference, &kbody, space)?;
    Ok(Realization { index, kbody, reference, perturbed, state })
}

pub fn realization_trace(
    cfg: &EnsembleRunConfig,
    shared: &SharedDraws,
    index: usize,
    grid: &TimeGrid,
) -> Result<FidelityTrace> {
    let r = realization(cfg, shared, index)?;
    fidelity_trace(&r.reference, &r.perturbed, &r.state, grid)
}

/// Per-point count, mean and sum of squared deviations (Welford/Chan).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    pub fn merge(self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let mut mean = self.mean;
        let mut m2 = self.m2;
        for i in 0..mean.len() {
            let delta = other.mean[i] - mean[i];
            mean[i] += delta * nb / total;
            m2[i] += other.m2[i] + delta * delta * na * nb / total;
        }
        Self { count: self.count + other.count, mean, m2 }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample standard deviation; zero for fewer than two samples.
    pub fn std_dev(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let denom = (self.count - 1) as f64;
        self.m2.iter().map(|s| (s.max(0.0) / denom).sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: EnsembleRunConfig,
    pub times: Vec<f64>,
    pub mean_f: Vec<f64>,
    pub std_f: Vec<f64>,
    /// Realizations that contributed to the averages.
    pub n_realizations: usize,
    pub failures: Vec<RealizationFailure>,
    /// Largest deviation of the evolved state's norm from one over all realizations.
    pub max_norm_deviation: f64,
    /// Heisenberg time of the first contributing realization.
    pub heisenberg_time: f64,
    /// Fidelity traces in realization order, when retained.
    pub per_realization_f: Option<Vec<Vec<f64>>>,
}

impl EnsembleResult {
    pub fn one_minus_mean_f(&self) -> Vec<f64> {
        self.mean_f.iter().map(|f| 1.0 - f).collect()
    }
}

struct Partial {
    moments: MomentAccumulator,
    failures: Vec<RealizationFailure>,
    traces: Vec<Vec<f64>>,
    max_norm_deviation: f64,
    heisenberg_time: Option<f64>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.failures.extend(other.failures);
        self.traces.extend(other.traces);
        Partial {
            moments: self.moments.merge(other.moments),
            failures: self.failures,
            traces: self.traces,
            max_norm_deviation: self.max_norm_deviation.max(other.max_norm_deviation),
            heisenberg_time: self.heisenberg_time.or(other.heisenberg_time),
        }
    }
}

fn leaf(cfg: &EnsembleRunConfig, shared: &SharedDraws, grid: &TimeGrid, index: usize) -> Result<Partial> {
    let mut partial = Partial {
        moments: MomentAccumulator::new(grid.len()),
        failures: Vec::new(),
        traces: Vec::new(),
        max_norm_deviation: 0.0,
        heisenberg_time: None,
    };
    match realization_trace(cfg, shared, index, grid) {
        Ok(trace) => {
            partial.moments.push(&trace.fidelities);
            partial.max_norm_deviation = trace.max_norm_deviation;
            partial.heisenberg_time = Some(trace.heisenberg_time);
            if cfg.retain_traces {
                partial.traces.push(trace.fidelities);
            }
        }
        Err(e) if e.is_numerical() => {
            partial.failures.push(RealizationFailure { index, message: e.to_string() });
        }
        Err(e) => return Err(e),
    }
    Ok(partial)
}

/// Pairwise reduction over `[lo, hi)`; the tree shape depends only on the range.
fn reduce(cfg: &EnsembleRunConfig, shared: &SharedDraws, grid: &TimeGrid, lo: usize, hi: usize) -> Result<Partial> {
    if hi - lo == 1 {
        return leaf(cfg, shared, grid, lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = rayon::join(|| reduce(cfg, shared, grid, lo, mid), || reduce(cfg, shared, grid, mid, hi));
    Ok(left?.merge(right?))
}

/// Ensemble-averaged fidelity on the configured grid, run on the current rayon pool.
pub fn run_ensemble(cfg: &EnsembleRunConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let shared = SharedDraws::new(cfg)?;
    let total = cfg.realizations;
    let partial = reduce(cfg, &shared, &grid, 0, total)?;

    let failed = partial.failures.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let first = &partial.failures[0];
        return Err(Error::TooManyFailures {
            failed,
            total,
            first_index: first.index,
            first_message: first.message.clone(),
        });
    }
    Ok(EnsembleResult {
        config: cfg.clone(),
        times: grid.times().to_vec(),
        mean_f: partial.moments.mean().to_vec(),
        std_f: partial.moments.std_dev(),
        n_realizations: partial.moments.count(),
        failures: partial.failures,
        max_norm_deviation: partial.max_norm_deviation,
        heisenberg_time: partial.heisenberg_time.unwrap_or(f64::NAN),
        per_realization_f: cfg.retain_traces.then_some(partial.traces),
    })
}
