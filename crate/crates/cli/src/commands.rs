use bfl_core::experiments::{
    detect_plateau, detect_revival_period, fit_scaling, plateau_and_freeze_end, realization_trace, run_ensemble,
    EnsembleResult, EnsembleRunConfig, PlateauSettings, RealizationFailure, RevivalOutcome, ScalingFit, SharedDraws,
};
use bfl_core::Error;
use serde::Serialize;

use crate::config::{AnalysisSettings, RunConfig, SweepParameter};
use crate::error::CliError;
use crate::output::{fmt_float, Outputs};

pub const TRACE_HEADER: [&str; 5] = ["t", "F", "one_minus_F", "re_f", "im_f"];
pub const ENSEMBLE_HEADER: [&str; 5] = ["t", "mean_F", "one_minus_mean_F", "std_F", "n_realizations"];
pub const SCALING_HEADER: [&str; 4] = ["x", "plateau", "t_e", "status"];

#[derive(Debug, Serialize)]
struct TraceInfo {
    realization: usize,
    heisenberg_time: f64,
    mean_spacing: f64,
    max_norm_deviation: f64,
}

pub fn trace(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let e = &cfg.ensemble;
    let grid = e.grid.build()?;
    let shared = SharedDraws::new(e)?;
    let trace = realization_trace(e, &shared, cfg.realization, &grid)?;
    let rows = trace.times.iter().zip(&trace.fidelities).zip(&trace.amplitudes).map(|((t, f), a)| {
        vec![fmt_float(*t), fmt_float(*f), fmt_float(1.0 - f), fmt_float(a.re), fmt_float(a.im)]
    });
    out.csv("trace.csv", &TRACE_HEADER, rows)?;
    out.json(
        "trace.json",
        &TraceInfo {
            realization: cfg.realization,
            heisenberg_time: trace.heisenberg_time,
            mean_spacing: trace.mean_spacing,
            max_norm_deviation: trace.max_norm_deviation,
        },
    )
}

/// Observables of an ensemble mean; fields are null when they cannot be extracted.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub plateau_level: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub freeze_end: Option<f64>,
    pub freeze_end_lower_bound: Option<f64>,
    pub period: Option<f64>,
    pub c: Option<usize>,
    pub confidence: Option<f64>,
    pub revival_window: (f64, f64),
    pub n_realizations: usize,
    pub realizations_requested: usize,
    pub failures: Vec<RealizationFailure>,
    pub heisenberg_time: f64,
    pub max_norm_deviation: f64,
    pub notes: Vec<String>,
}

pub fn summarize(result: &EnsembleResult, analysis: &AnalysisSettings) -> Summary {
    let decay = result.one_minus_mean_f();
    let times = &result.times;
    let mut summary = Summary {
        plateau_level: None,
        window: None,
        freeze_end: None,
        freeze_end_lower_bound: None,
        period: None,
        c: None,
        confidence: None,
        revival_window: analysis.revival_window,
        n_realizations: result.n_realizations,
        realizations_requested: result.config.realizations,
        failures: result.failures.clone(),
        heisenberg_time: result.heisenberg_time,
        max_norm_deviation: result.max_norm_deviation,
        notes: Vec::new(),
    };

    match detect_revival_period(times, &decay, analysis.revival_window, &analysis.revival) {
        Ok(RevivalOutcome::Periodic(r)) => {
            summary.period = Some(r.period);
            summary.c = Some(r.c);
            summary.confidence = Some(r.confidence);
        }
        Ok(RevivalOutcome::NoPeriodicity { confidence }) => {
            summary.confidence = Some(confidence);
            summary.notes.push("no periodicity above the confidence threshold".into());
        }
        Err(e) => summary.notes.push(format!("revival detection skipped: {e}")),
    }

    let plateau_settings = PlateauSettings { revival_period: summary.period.unwrap_or(1.0), ..analysis.plateau };
    let stats = match plateau_and_freeze_end(times, &decay, &plateau_settings, &analysis.freeze) {
        Ok(stats) => Ok(stats),
        Err(Error::FreezeNotEnded { lower_bound }) => {
            summary.freeze_end_lower_bound = Some(lower_bound);
            detect_plateau(times, &decay, None, &plateau_settings)
        }
        Err(e) => Err(e),
    };
    match stats {
        Ok(s) => {
            summary.plateau_level = Some(s.plateau_level);
            summary.window = Some(s.window);
            summary.freeze_end = s.freeze_end;
        }
        Err(e) => summary.notes.push(format!("plateau detection skipped: {e}")),
    }
    summary
}

fn write_ensemble(out: &mut Outputs, name: &str, result: &EnsembleResult) -> Result<(), CliError> {
    let count = result.n_realizations.to_string();
    let rows = result.times.iter().zip(&result.mean_f).zip(&result.std_f).map(|((t, f), s)| {
        vec![fmt_float(*t), fmt_float(*f), fmt_float(1.0 - f), fmt_float(*s), count.clone()]
    });
    out.csv(name, &ENSEMBLE_HEADER, rows)
}

pub fn ensemble(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let result = run_ensemble(&cfg.ensemble)?;
    write_ensemble(out, "ensemble.csv", &result)?;
    out.json("summary.json", &summarize(&result, &cfg.analysis))
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    x: f64,
    status: String,
    summary: Option<Summary>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum FitOutcome {
    Fit(ScalingFit),
    Failed { error: String },
}

fn fit_outcome(points: Vec<(f64, f64)>) -> FitOutcome {
    match fit_scaling(&points) {
        Ok(fit) => FitOutcome::Fit(fit),
        Err(e) => FitOutcome::Failed { error: e.to_string() },
    }
}

#[derive(Debug, Serialize)]
struct ScalingReport {
    parameter: SweepParameter,
    points: Vec<SweepPoint>,
    plateau_fit: FitOutcome,
    freeze_end_fit: FitOutcome,
}

fn sweep_config(base: &EnsembleRunConfig, parameter: SweepParameter, x: f64) -> EnsembleRunConfig {
    match parameter {
        SweepParameter::Lambda => EnsembleRunConfig { lambda: x, ..base.clone() },
        SweepParameter::N => EnsembleRunConfig { n: x as usize, ..base.clone() },
    }
}

pub fn scaling(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("scaling needs sweep_parameter and sweep_values".into()))?;
    if sweep.values.len() < 3 {
        return Err(CliError::Config(format!("scaling needs at least 3 sweep values, got {}", sweep.values.len())));
    }
    let configs: Vec<EnsembleRunConfig> =
        sweep.values.iter().map(|&x| sweep_config(&cfg.ensemble, sweep.parameter, x)).collect();
    for c in &configs {
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }

    let mut points = Vec::new();
    for (i, (x, run)) in sweep.values.iter().zip(&configs).enumerate() {
        let point = match run_ensemble(run) {
            Ok(result) => {
                write_ensemble(out, &format!("ensemble_{i}.csv"), &result)?;
                let summary = summarize(&result, &cfg.analysis);
                let status = match (summary.plateau_level, summary.freeze_end) {
                    (None, _) => "no-plateau",
                    (Some(_), None) => "freeze-not-ended",
                    (Some(_), Some(_)) => "ok",
                };
                SweepPoint { x: *x, status: status.into(), summary: Some(summary) }
            }
            Err(e) => SweepPoint { x: *x, status: format!("error: {e}"), summary: None },
        };
        points.push(point);
    }

    let rows = points.iter().map(|p| {
        let field = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let s = p.summary.as_ref();
        vec![
            fmt_float(p.x),
            field(s.and_then(|s| s.plateau_level)),
            field(s.and_then(|s| s.freeze_end)),
            p.status.clone(),
        ]
    });
    out.csv("scaling.csv", &SCALING_HEADER, rows)?;

    let collect = |pick: fn(&Summary) -> Option<f64>| -> Vec<(f64, f64)> {
        points.iter().filter_map(|p| p.summary.as_ref().and_then(pick).map(|y| (p.x, y))).collect()
    };
    let report = ScalingReport {
        parameter: sweep.parameter,
        plateau_fit: fit_outcome(collect(|s| s.plateau_level)),
        freeze_end_fit: fit_outcome(collect(|s| s.freeze_end)),
        points,
    };
    if let FitOutcome::Failed { error } = &report.plateau_fit {
        eprintln!("warning: plateau fit failed: {error}");
    }
    out.json("scaling.json", &report)
}
