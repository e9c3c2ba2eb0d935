//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bfl_core::dynamics::{
    build_perturbed, build_reference, fidelity_trace, heisenberg_time, random_state, TimeGrid,
};
use bfl_core::ensemble::{embed, empirical_width, sample_couplings, spectral_width, Beta, WidthMode};
use bfl_core::experiments::{
    detect_freeze_end, detect_plateau, detect_revival_period, fit_scaling, run_ensemble, DiagonalPolicy, Dominance,
    EnsembleResult, EnsembleRunConfig, FamilyMember, FreezeEndSettings, GridSpec, PlateauSettings, RevivalSettings,
};
use bfl_core::fock::{monomial_matrix, FockSpace, MonomialSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plateau of the base run (n=128, k=2, β=1, λ=1e-6, 100 realizations, seed 0).
const GOLDEN_PLATEAU: f64 = 1.6234347199883814e-11;

struct Suite {
    failures: usize,
    started: Instant,
}

impl Suite {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {name}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64()
        );
    }
}

fn base_config() -> EnsembleRunConfig {
    EnsembleRunConfig {
        n: 128,
        k: 2,
        beta: Beta::Orthogonal,
        lambda: 1e-6,
        realizations: 100,
        master_seed: 0,
        grid: GridSpec { points_per_unit: 2048, t_max: 5.0 },
        ..Default::default()
    }
}

fn plateau(result: &EnsembleResult) -> f64 {
    detect_plateau(&result.times, &result.one_minus_mean_f(), None, &PlateauSettings::default())
        .unwrap()
        .plateau_level
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// Monomial built by multiplying truncated single-mode ladder matrices on the
/// two-mode product space, then restricted to the fixed-`n` block.
fn ladder_monomial(n: usize, k: usize, r: usize, s: usize) -> DMatrix<f64> {
    let d = n + k + 1;
    let lower = DMatrix::from_fn(d, d, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 });
    let id = DMatrix::<f64>::identity(d, d);
    let a1 = lower.kronecker(&id);
    let a2 = id.kronecker(&lower);
    let pow = |m: &DMatrix<f64>, e: usize| (0..e).fold(DMatrix::identity(d * d, d * d), |acc, _| acc * m);
    let op = pow(&a1.transpose(), r) * pow(&a2.transpose(), k - r) * pow(&a1, s) * pow(&a2, k - s);
    let norm = (factorial(r) * factorial(k - r)).sqrt() * (factorial(s) * factorial(k - s)).sqrt();
    let index = |m: usize| m * d + (n - m);
    DMatrix::from_fn(n + 1, n + 1, |i, j| op[(index(i), index(j))] / norm)
}

fn operator_oracle(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        for k in 1..=3.min(n) {
            for r in 0..=k {
                for s in 0..=k {
                    let closed = monomial_matrix(FockSpace::new(n), MonomialSpec::new(k, r, s).unwrap()).unwrap();
                    worst = worst.max((closed - ladder_monomial(n, k, r, s)).abs().max());
                }
            }
        }
    }
    suite.check("operator-algebra oracle", worst <= 1e-12, format!("max entry difference {worst:.2e} (tol 1e-12)"));
}

fn width_formula(suite: &mut Suite) {
    for beta in [Beta::Unitary, Beta::Orthogonal] {
        let mut rng = ChaCha8Rng::seed_from_u64(2024 + beta.index() as u64);
        let space = FockSpace::new(12);
        let samples = 500;
        let mean = (0..samples)
            .map(|_| empirical_width(&embed(&sample_couplings(2, beta, &mut rng).unwrap(), space).unwrap()))
            .sum::<f64>()
            / samples as f64;
        let model = spectral_width(2, 12, beta).unwrap().value;
        let rel = (mean - model).abs() / model;
        suite.check(
            &format!("width formula β={}", beta.index()),
            rel <= 0.05,
            format!("Monte Carlo {mean:.1} vs formula {model:.1}, rel. error {:.2}% (tol 5%)", 100.0 * rel),
        );
    }
}

fn unitarity(suite: &mut Suite, base: &EnsembleResult) {
    let mut worst_norm = base.max_norm_deviation;
    let mut worst_excess: f64 = base.mean_f.iter().map(|f| f - 1.0).fold(f64::NEG_INFINITY, f64::max);
    let mut starts_at_one = base.mean_f[0] == 1.0;
    let mut zero_lambda_dev: f64 = 0.0;
    let grid = TimeGrid::uniform(256, 10.0).unwrap();
    let cases = [
        (1, 1, Beta::Orthogonal, 0.5),
        (20, 3, Beta::Unitary, 0.05),
        (64, 2, Beta::Orthogonal, 1e-3),
        (100, 3, Beta::Unitary, 2.0),
    ];
    for (seed, &(n, k, beta, lambda)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let space = FockSpace::new(n);
        let one = sample_couplings(1, beta, &mut rng).unwrap();
        let kbody = sample_couplings(k, beta, &mut rng).unwrap();
        let psi = random_state(n + 1, &mut rng).unwrap();
        for l in [lambda, 0.0] {
            let h0 = build_reference(&one, &kbody, l, space, WidthMode::AsDefined).unwrap();
            let h = build_perturbed(&h0, &kbody, space).unwrap();
            let trace = fidelity_trace(&h0, &h, &psi, &grid).unwrap();
            starts_at_one &= trace.fidelities[0] == 1.0;
            worst_norm = worst_norm.max(trace.max_norm_deviation);
            worst_excess = worst_excess.max(trace.fidelities.iter().map(|f| f - 1.0).fold(f64::NEG_INFINITY, f64::max));
            let negative = trace.fidelities.iter().any(|&f| f < 0.0);
            starts_at_one &= !negative;
            if l == 0.0 {
                zero_lambda_dev = zero_lambda_dev.max(trace.fidelities.iter().map(|f| (f - 1.0).abs()).fold(0.0, f64::max));
            }
        }
    }
    suite.check(
        "unitarity and normalization",
        starts_at_one && worst_excess <= 1e-10 && worst_norm <= 1e-10 && zero_lambda_dev <= 1e-10,
        format!(
            "F(0)=1 exactly and F>=0: {starts_at_one}; max F-1 {worst_excess:.1e}; norm drift {worst_norm:.1e}; λ=0 max |F-1| {zero_lambda_dev:.1e} (tol 1e-10)"
        ),
    );
}

fn two_level(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    for (seed, beta) in [(11u64, Beta::Orthogonal), (12, Beta::Unitary)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = FockSpace::new(1);
        let one = sample_couplings(1, beta, &mut rng).unwrap();
        let kbody = sample_couplings(1, beta, &mut rng).unwrap();
        let psi = random_state(2, &mut rng).unwrap();
        let h0 = build_reference(&one, &kbody, 0.8, space, WidthMode::AsDefined).unwrap();
        let h = build_perturbed(&h0, &kbody, space).unwrap();
        let th = heisenberg_time(&h0).unwrap().heisenberg_time;
        let times: Vec<f64> = (0..1000).map(|i| i as f64 * 0.00731).collect();
        let trace = fidelity_trace(&h0, &h, &psi, &TimeGrid::from_times(times.clone()).unwrap()).unwrap();

        // H = ε̄ + δσz + Re v σx − Im v σy, Ω = √(δ² + |v|²)
        let (e0, e1) = (h0.diag_values[0], h0.diag_values[1]);
        let v = h.full[(0, 1)];
        let mean = 0.5 * (e0 + e1);
        let delta = 0.5 * (e0 - e1);
        let omega = (delta * delta + v.norm_sqr()).sqrt();
        let i = Complex64::i();
        for (t, f) in times.iter().zip(&trace.amplitudes) {
            let tp = t * th;
            let (c, s) = ((omega * tp).cos(), (omega * tp).sin() / omega);
            let g = Complex64::from_polar(1.0, -mean * tp);
            let phi0 = g * ((c - i * s * delta) * psi[0] - i * s * v * psi[1]);
            let phi1 = g * (-i * s * v.conj() * psi[0] + (c + i * s * delta) * psi[1]);
            let expected = psi[0].conj() * Complex64::from_polar(1.0, e0 * tp) * phi0
                + psi[1].conj() * Complex64::from_polar(1.0, e1 * tp) * phi1;
            worst = worst.max((f - expected).norm());
        }
    }
    suite.check("two-level analytic oracle", worst <= 1e-10, format!("max |f - f_exact| {worst:.2e} over 2×1000 points (tol 1e-10)"));
}

fn base_run_criteria(suite: &mut Suite, base: &EnsembleResult) -> f64 {
    let decay = base.one_minus_mean_f();
    let level = plateau(base);

    let early: Vec<(f64, f64)> = base
        .times
        .iter()
        .zip(&decay)
        .filter(|(t, _)| (0.02..=0.3).contains(*t))
        .map(|(&t, &g)| (t, g))
        .collect();
    let fit = fit_scaling(&early).unwrap();
    suite.check(
        "quadratic early decay",
        (fit.exponent - 2.0).abs() <= 0.3,
        format!("exponent {:.3} on t in [0.02, 0.3] (target 2 ± 0.3)", fit.exponent),
    );

    let step = base.config.grid.points_per_unit;
    let revival = (step - 1..=step + 1)
        .filter(|&j| base.mean_f[j] >= base.mean_f[j - 1] && base.mean_f[j] >= base.mean_f[j + 1])
        .min_by(|&a, &b| decay[a].total_cmp(&decay[b]));
    let (pass, detail) = match revival {
        Some(j) => (
            decay[j] * 5.0 <= level,
            format!("local max of <F> at t={}, 1-<F>={:.3e} vs plateau {level:.3e} (need ≥5× below)", base.times[j], decay[j]),
        ),
        None => (false, "no local maximum of <F> within one grid step of t=1".into()),
    };
    suite.check("revival at the Heisenberg time", pass, detail);

    let golden_ok = ((level - GOLDEN_PLATEAU) / GOLDEN_PLATEAU).abs() <= 1e-9;
    suite.check("golden plateau regression", golden_ok, format!("plateau {level:.16e} (golden {GOLDEN_PLATEAU:.16e})"));
    level
}

fn lambda_scaling(suite: &mut Suite, base_plateau: f64) {
    let mut points = vec![(1e-6, base_plateau)];
    for lambda in [2e-6, 4e-6] {
        let result = run_ensemble(&EnsembleRunConfig { lambda, ..base_config() }).unwrap();
        points.push((lambda, plateau(&result)));
    }
    let ratio = points[1].1 / points[0].1;
    suite.check(
        "plateau ratio λ=2e-6 / λ=1e-6",
        (ratio - 4.0).abs() <= 0.3 * 4.0,
        format!("ratio {ratio:.3} (target 4 ± 30%)"),
    );
    let fit = fit_scaling(&points).unwrap();
    suite.check(
        "plateau λ² scaling",
        (fit.exponent - 2.0).abs() <= 0.3,
        format!("exponent {:.3}, plateaus {:?} (target 2 ± 0.3)", fit.exponent, points.iter().map(|p| p.1).collect::<Vec<_>>()),
    );
}

fn n_scaling(suite: &mut Suite) {
    let points: Vec<(f64, f64)> = [64usize, 128, 256]
        .iter()
        .map(|&n| {
            let cfg = EnsembleRunConfig { n, width_mode: WidthMode::Sqrt, ..base_config() };
            (n as f64, plateau(&run_ensemble(&cfg).unwrap()))
        })
        .collect();
    let fit = fit_scaling(&points).unwrap();
    suite.check(
        "plateau n² scaling (sqrt width normalization)",
        (fit.exponent - 2.0).abs() <= 0.5,
        format!("exponent {:.3}, plateaus {:?} (target 2 ± 0.5)", fit.exponent, points.iter().map(|p| p.1).collect::<Vec<_>>()),
    );
}

fn freeze_end_scaling(suite: &mut Suite) {
    let lambdas = [1e-4, 2e-4, 4e-4];
    let runs: Vec<EnsembleResult> = lambdas
        .iter()
        .map(|&lambda| {
            let cfg = EnsembleRunConfig {
                n: 64,
                lambda,
                realizations: 50,
                grid: GridSpec { points_per_unit: 16, t_max: 6.4 / lambda },
                ..base_config()
            };
            run_ensemble(&cfg).unwrap()
        })
        .collect();
    let decays: Vec<Vec<f64>> = runs.iter().map(|r| r.one_minus_mean_f()).collect();
    let family: Vec<FamilyMember> = lambdas
        .iter()
        .zip(&runs)
        .zip(&decays)
        .map(|((&parameter, r), d)| FamilyMember { parameter, times: &r.times, decay: d })
        .collect();
    match detect_freeze_end(&family, &PlateauSettings::default(), &FreezeEndSettings::default()) {
        Ok(result) => suite.check(
            "freeze end t_e ∝ 1/λ",
            (result.fit.exponent + 1.0).abs() <= 0.3,
            format!(
                "exponent {:.3}, t_e {:?} (target -1 ± 0.3)",
                result.fit.exponent,
                result.points.iter().map(|p| p.freeze_end).collect::<Vec<_>>()
            ),
        ),
        Err(e) => suite.check("freeze end t_e ∝ 1/λ", false, e.to_string()),
    }
}

fn fractional_revivals(suite: &mut Suite) {
    let step = 1.0 / 2048.0;
    for (k, c) in [(2usize, 2usize), (3, 2), (3, 3)] {
        let mut periods = Vec::new();
        for beta in [Beta::Orthogonal, Beta::Unitary] {
            let cfg = EnsembleRunConfig {
                k,
                beta,
                realizations: 10,
                dominance: Some(Dominance { c, boost: 100.0 }),
                grid: GridSpec { points_per_unit: 2048, t_max: 9.0 },
                ..base_config()
            };
            let result = run_ensemble(&cfg).unwrap();
            let out = detect_revival_period(&result.times, &result.one_minus_mean_f(), (1.0, 9.0), &RevivalSettings::default())
                .unwrap();
            let name = format!("fractional revival k={k} c={c} β={}", beta.index());
            match out.report() {
                Some(r) => {
                    periods.push(r.period);
                    suite.check(
                        &name,
                        (r.period - 1.0 / c as f64).abs() <= step && r.c == c && r.confidence >= 3.0,
                        format!("period {:.6} (target {:.6} ± {step:.1e}), c={}, confidence {:.1}", r.period, 1.0 / c as f64, r.c, r.confidence),
                    );
                }
                None => suite.check(&name, false, format!("no periodicity detected: {out:?}")),
            }
        }
        if let [p1, p2] = periods[..] {
            suite.check(
                &format!("β-independence k={k} c={c}"),
                (p1 - p2).abs() <= step,
                format!("periods {p1:.6} vs {p2:.6} (tol {step:.1e})"),
            );
        }
    }
}

fn per_realization_plateaus(result: &EnsembleResult) -> Vec<f64> {
    result
        .per_realization_f
        .as_ref()
        .unwrap()
        .iter()
        .map(|f| {
            let decay: Vec<f64> = f.iter().map(|x| 1.0 - x).collect();
            detect_plateau(&result.times, &decay, None, &PlateauSettings::default()).unwrap().plateau_level
        })
        .collect()
}

fn standard_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn fixed_vs_resampled(suite: &mut Suite, fixed: &EnsembleResult) {
    let cfg = EnsembleRunConfig { diagonal_policy: DiagonalPolicy::Resampled, retain_traces: true, ..base_config() };
    let resampled = run_ensemble(&cfg).unwrap();
    let (pf, pr) = (plateau(fixed), plateau(&resampled));
    let se = standard_error(&per_realization_plateaus(fixed)).hypot(standard_error(&per_realization_plateaus(&resampled)));
    suite.check(
        "fixed vs resampled diagonal",
        (pf - pr).abs() <= 2.0 * se,
        format!("plateaus {pf:.4e} vs {pr:.4e}, |diff| = {:.2} SE (need ≤ 2)", (pf - pr).abs() / se),
    );
}

fn determinism(suite: &mut Suite) {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize| {
        let out = dir.path().join(format!("threads-{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_bfl"))
            .args(["ensemble", "--n=64", "--realizations=20", "--points_per_unit=256", "--master_seed=7"])
            .arg(format!("--threads={threads}"))
            .arg(format!("--output={}", out.display()))
            .env_remove("BFL_SEED")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(Path::new(&out).join("ensemble.csv")).unwrap()
    };
    let (one, four) = (run(1), run(4));
    suite.check(
        "determinism across --threads",
        one == four,
        format!("ensemble.csv with 1 and 4 threads: {} bytes, identical = {}", one.len(), one == four),
    );
}

fn main() {
    let mut suite = Suite { failures: 0, started: Instant::now() };
    operator_oracle(&mut suite);
    width_formula(&mut suite);
    two_level(&mut suite);

    let base = run_ensemble(&EnsembleRunConfig { retain_traces: true, ..base_config() }).unwrap();
    unitarity(&mut suite, &base);
    let base_plateau = base_run_criteria(&mut suite, &base);
    fixed_vs_resampled(&mut suite, &base);
    lambda_scaling(&mut suite, base_plateau);
    fractional_revivals(&mut suite);
    determinism(&mut suite);
    n_scaling(&mut suite);
    freeze_end_scaling(&mut suite);

    if suite.failures > 0 {
        println!("{} acceptance criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
