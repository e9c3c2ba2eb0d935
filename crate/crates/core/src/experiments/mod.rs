//! Ensemble runs and the observables extracted from them.

pub mod config;
pub mod observables;
pub mod runner;

pub use config::{DiagonalPolicy, Dominance, EnsembleRunConfig, GridSpec, StatePolicy};
pub use observables::{
    detect_freeze_end, detect_plateau, detect_revival_period, dominated_perturbation, fit_scaling, freeze_end,
    plateau_and_freeze_end, running_median, FamilyMember, FreezeEndFamily, FreezeEndPoint, FreezeEndSettings,
    PlateauSettings, PlateauStats, RevivalOutcome, RevivalReport, RevivalSettings, ScalingFit,
};
pub use runner::{
    realization, realization_trace, run_ensemble, EnsembleResult, MomentAccumulator, Realization,
    RealizationFailure, SharedDraws,
};
