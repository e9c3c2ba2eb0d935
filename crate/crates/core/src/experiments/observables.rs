//! Observables extracted from ensemble-mean decay curves `g(t) = 1 − ⟨F(t)⟩`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ensemble::CouplingMatrix;
use crate::error::{Error, Result};

/// Median of the decay on the freeze window and the freeze end, when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStats {
    pub plateau_level: f64,
    pub window: (f64, f64),
    pub freeze_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSettings {
    pub window_start: f64,
    pub window_end: f64,
    /// Points this close to a multiple of `revival_period` are dropped.
    pub revival_exclusion: f64,
    pub revival_period: f64,
    /// Trace must reach this time.
    pub required_coverage: f64,
}

impl Default for PlateauSettings {
    fn default() -> Self {
        Self { window_start: 1.5, window_end: 4.5, revival_exclusion: 0.05, revival_period: 1.0, required_coverage: 5.0 }
    }
}

const GRID_SLACK: f64 = 1e-9;

fn check_trace(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::domain(format!(
            "trace has {} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.is_empty() {
        return Err(Error::domain("trace is empty"));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Plateau level of a decay curve on `[start, min(end, t_e_guess / 2)]`.
pub fn detect_plateau(
    times: &[f64],
    decay: &[f64],
    freeze_end_guess: Option<f64>,
    settings: &PlateauSettings,
) -> Result<PlateauStats> {
    check_trace(times, decay)?;
    let last = *times.last().unwrap();
    if last < settings.required_coverage - GRID_SLACK || times[0] > 1.0 {
        return Err(Error::domain(format!(
            "trace covers [{}, {last}] but the plateau needs [1, {}]",
            times[0], settings.required_coverage
        )));
    }
    let end = match freeze_end_guess {
        Some(te) => settings.window_end.min(0.5 * te),
        None => settings.window_end,
    };
    let window = (settings.window_start, end);
    let period = settings.revival_period;
    let mut selected: Vec<f64> = times
        .iter()
        .zip(decay)
        .filter(|(&t, _)| t >= window.0 - GRID_SLACK && t <= window.1 + GRID_SLACK)
        .filter(|(&t, _)| {
            period <= 0.0 || (t - (t / period).round() * period).abs() > settings.revival_exclusion
        })
        .map(|(_, &g)| g)
        .collect();
    if selected.is_empty() {
        return Err(Error::domain(format!("no grid points in plateau window [{}, {}]", window.0, window.1)));
    }
    Ok(PlateauStats { plateau_level: median(&mut selected).max(0.0), window, freeze_end: freeze_end_guess })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeEndSettings {
    pub search_start: f64,
    /// Crossing level in units of the plateau.
    pub threshold_factor: f64,
    /// Width of the centred running-median window, in Heisenberg times.
    pub median_window: f64,
    /// The decay must reach this multiple of the plateau somewhere in the trace.
    pub required_rise: f64,
}

impl Default for FreezeEndSettings {
    fn default() -> Self {
        Self { search_start: 2.0, threshold_factor: 3.0, median_window: 0.5, required_rise: 10.0 }
    }
}

/// Centred running median over a window of fixed width in time.
pub fn running_median(times: &[f64], values: &[f64], width: f64) -> Vec<f64> {
    let half = 0.5 * width;
    let (mut lo, mut hi) = (0, 0);
    let mut buf = Vec::new();
    times
        .iter()
        .map(|&t| {
            while times[lo] < t - half - GRID_SLACK {
                lo += 1;
            }
            while hi < times.len() && times[hi] <= t + half + GRID_SLACK {
                hi += 1;
            }
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            median(&mut buf)
        })
        .collect()
}

/// Earliest grid time after `search_start` from which the running median of
/// the decay stays above `threshold_factor × plateau` until the end of the trace.
pub fn freeze_end(times: &[f64], decay: &[f64], plateau: f64, settings: &FreezeEndSettings) -> Result<f64> {
    check_trace(times, decay)?;
    let last = *times.last().unwrap();
    let not_ended = Error::FreezeNotEnded { lower_bound: last };
    let peak = decay.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(plateau > 0.0) || peak < settings.required_rise * plateau {
        return Err(not_ended);
    }
    let smooth = running_median(times, decay, settings.median_window);
    let threshold = settings.threshold_factor * plateau;
    let first = times.partition_point(|&t| t < settings.search_start - GRID_SLACK);
    if first == times.len() {
        return Err(not_ended);
    }
    let start = match smooth[first..].iter().rposition(|&g| g <= threshold) {
        None => first,
        Some(i) if first + i + 1 == times.len() => return Err(not_ended),
        Some(i) => first + i + 1,
    };
    Ok(times[start])
}

/// One member of a family of decay curves indexed by a control parameter.
#[derive(Debug, Clone, Copy)]
pub struct FamilyMember<'a> {
    pub parameter: f64,
    pub times: &'a [f64],
    pub decay: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeEndPoint {
    pub parameter: f64,
    pub plateau: PlateauStats,
    pub freeze_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeEndFamily {
    pub points: Vec<FreezeEndPoint>,
    pub fit: ScalingFit,
}

/// Plateau and freeze end of one curve.
///
/// When the freeze ends early the plateau window is shortened to half the
/// first estimate and both are measured again.
pub fn plateau_and_freeze_end(
    times: &[f64],
    decay: &[f64],
    plateau_settings: &PlateauSettings,
    freeze_settings: &FreezeEndSettings,
) -> Result<PlateauStats> {
    let plateau = detect_plateau(times, decay, None, plateau_settings)?;
    let te = freeze_end(times, decay, plateau.plateau_level, freeze_settings)?;
    if 0.5 * te >= plateau.window.1 {
        return Ok(PlateauStats { freeze_end: Some(te), ..plateau });
    }
    let plateau = detect_plateau(times, decay, Some(te), plateau_settings)?;
    let te = freeze_end(times, decay, plateau.plateau_level, freeze_settings)?;
    Ok(PlateauStats { freeze_end: Some(te), ..plateau })
}

/// Freeze end of each member and the power law `t_e ∝ parameter^exponent`.
pub fn detect_freeze_end(
    family: &[FamilyMember<'_>],
    plateau_settings: &PlateauSettings,
    freeze_settings: &FreezeEndSettings,
) -> Result<FreezeEndFamily> {
    let points = family
        .iter()
        .map(|m| {
            let plateau = plateau_and_freeze_end(m.times, m.decay, plateau_settings, freeze_settings)?;
            Ok(FreezeEndPoint { parameter: m.parameter, plateau, freeze_end: plateau.freeze_end.unwrap() })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_scaling(&points.iter().map(|p| (p.parameter, p.freeze_end)).collect::<Vec<_>>())?;
    Ok(FreezeEndFamily { points, fit })
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub prefactor: f64,
    /// RMS deviation of `ln y` from the line.
    pub residual: f64,
}

pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::domain(format!("scaling fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::domain(format!("scaling fit needs positive finite values, got ({x}, {y})")));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("scaling fit needs distinct x values"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let count = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / count;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let residual =
        (logs.iter().map(|p| (p.1 - log_prefactor - exponent * p.0).powi(2)).sum::<f64>() / count).sqrt();
    Ok(ScalingFit { exponent, log_prefactor, prefactor: log_prefactor.exp(), residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevivalReport {
    /// In Heisenberg times.
    pub period: f64,
    pub c: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RevivalOutcome {
    Periodic(RevivalReport),
    NoPeriodicity { confidence: f64 },
}

impl RevivalOutcome {
    pub fn report(&self) -> Option<&RevivalReport> {
        match self {
            RevivalOutcome::Periodic(r) => Some(r),
            RevivalOutcome::NoPeriodicity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevivalSettings {
    /// Segments averaged for the confidence spectrum; also the minimum number of periods.
    pub segments: usize,
    pub min_confidence: f64,
}

impl Default for RevivalSettings {
    fn default() -> Self {
        Self { segments: 8, min_confidence: 3.0 }
    }
}

fn power_spectrum(planner: &mut FftPlanner<f64>, samples: &[f64]) -> Vec<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf[..=samples.len() / 2].iter().map(|z| z.norm_sqr()).collect()
}

/// Dominant periodicity of the decay on the half-open window `[t_a, t_b)`.
///
/// The period is read from the strongest non-constant line of the window's
/// periodogram, refined by parabolic interpolation between neighbouring bins.
/// Its significance is the segment-averaged power at that frequency over the
/// RMS of all other segment-averaged bins.
pub fn detect_revival_period(
    times: &[f64],
    decay: &[f64],
    window: (f64, f64),
    settings: &RevivalSettings,
) -> Result<RevivalOutcome> {
    check_trace(times, decay)?;
    let (ta, tb) = window;
    if !(tb > ta) || ta < times[0] - GRID_SLACK || tb > *times.last().unwrap() + GRID_SLACK {
        return Err(Error::domain(format!(
            "revival window [{ta}, {tb}) is not inside the trace [{}, {}]",
            times[0],
            times.last().unwrap()
        )));
    }
    let lo = times.partition_point(|&t| t < ta - GRID_SLACK);
    let hi = times.partition_point(|&t| t < tb - GRID_SLACK);
    let (ts, g) = (&times[lo..hi], &decay[lo..hi]);
    let segments = settings.segments.max(1);
    if ts.len() < 4 * segments {
        return Err(Error::domain(format!("revival window holds only {} grid points", ts.len())));
    }
    let dt = ts[1] - ts[0];
    if ts.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::domain("revival detection needs a uniform grid"));
    }

    let mut planner = FftPlanner::new();
    let len = g.len();
    let full = power_spectrum(&mut planner, g);
    let peak = (1..full.len()).max_by(|&a, &b| full[a].total_cmp(&full[b])).unwrap();
    let mut bin = peak as f64;
    if peak + 1 < full.len() {
        let (l, c, r) = (full[peak - 1], full[peak], full[peak + 1]);
        let curvature = l - 2.0 * c + r;
        if curvature < 0.0 {
            bin += 0.5 * (l - r) / curvature;
        }
    }
    let frequency = bin / (len as f64 * dt);
    let period = 1.0 / frequency;

    let seg_len = len / segments;
    let mut welch = vec![0.0; seg_len / 2 + 1];
    for s in 0..segments {
        let p = power_spectrum(&mut planner, &g[s * seg_len..(s + 1) * seg_len]);
        for (w, v) in welch.iter_mut().zip(p) {
            *w += v / segments as f64;
        }
    }
    let line = (frequency * seg_len as f64 * dt).round() as usize;
    if line == 0 || line >= welch.len() {
        return Ok(RevivalOutcome::NoPeriodicity { confidence: 0.0 });
    }
    let others: Vec<f64> = (1..welch.len()).filter(|&i| i != line).map(|i| welch[i]).collect();
    let background = if others.is_empty() {
        f64::MIN_POSITIVE
    } else {
        (others.iter().map(|v| v * v).sum::<f64>() / others.len() as f64).sqrt().max(f64::MIN_POSITIVE)
    };
    let confidence = welch[line] / background;

    let span = len as f64 * dt;
    if confidence < settings.min_confidence || period > span / segments as f64 * (1.0 + 1e-9) {
        return Ok(RevivalOutcome::NoPeriodicity { confidence });
    }
    let c = ((1.0 / period).round() as usize).max(1);
    Ok(RevivalOutcome::Periodic(RevivalReport { period, c, confidence }))
}

/// Copy of `base` with every coupling that moves exactly `c` bosons scaled by `boost`.
pub fn dominated_perturbation(base: &CouplingMatrix, c: usize, boost: f64) -> Result<CouplingMatrix> {
    let k = base.rank();
    if c == 0 || c > k {
        return Err(Error::domain(format!("dominant c={c} must lie in 1..={k}")));
    }
    if !(boost >= 1.0 && boost.is_finite()) {
        return Err(Error::domain(format!("boost must be finite and >= 1, got {boost}")));
    }
    let mut values = base.values().clone();
    for r in 0..=k {
        for s in 0..=k {
            if r.abs_diff(s) == c {
                values[(r, s)] *= boost;
            }
        }
    }
    CouplingMatrix::new(k, base.beta(), values)
}
