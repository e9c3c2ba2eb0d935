//! Reference and perturbed Hamiltonians and exact fidelity propagation.
//!
//! The reference Hamiltonian is diagonal in the occupation basis, so its
//! propagator is a vector of phases. The perturbed Hamiltonian is
//! diagonalized once; every grid point then costs one matrix-vector product,
//! batched into matrix-matrix products over blocks of times.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{embed, embedded_diagonal, spectral_width, Beta, CouplingMatrix, WidthMode};
use crate::error::{Error, Result};
use crate::fock::FockSpace;

/// Relative eigendecomposition residual above which propagation is refused.
pub const EIGEN_RESIDUAL_TOLERANCE: f64 = 1e-8;

const TIME_BLOCK: usize = 256;

/// `H_0 = H_1^diag / W_1 + (λ / W_k) H_k^diag`, stored as its diagonal.
#[derive(Debug, Clone)]
pub struct ReferenceHamiltonian {
    pub n: usize,
    pub k: usize,
    pub beta: Beta,
    pub lambda: f64,
    pub width_mode: WidthMode,
    /// Normalizer applied to the one-body term.
    pub one_body_width: f64,
    /// Normalizer applied to the k-body terms.
    pub kbody_width: f64,
    pub diag_values: Vec<f64>,
    pub one_body_couplings: CouplingMatrix,
    pub kbody_diag_couplings: Vec<f64>,
}

impl ReferenceHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag_values.len()
    }

    /// Scale `λ / W_k` multiplying every k-body operator.
    pub fn kbody_scale(&self) -> f64 {
        self.lambda / self.kbody_width
    }
}

pub fn build_reference(
    one_body: &CouplingMatrix,
    kbody: &CouplingMatrix,
    lambda: f64,
    space: FockSpace,
    width_mode: WidthMode,
) -> Result<ReferenceHamiltonian> {
    let n = space.particles();
    let k = kbody.rank();
    if one_body.rank() != 1 {
        return Err(Error::domain(format!("one-body couplings must have rank 1, got {}", one_body.rank())));
    }
    if k > n {
        return Err(Error::domain(format!("interaction rank k={k} exceeds particle number n={n}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("perturbation strength must be finite and >= 0, got {lambda}")));
    }
    let one_body_width = spectral_width(1, n, one_body.beta())?.normalizer(width_mode);
    let kbody_width = spectral_width(k, n, kbody.beta())?.normalizer(width_mode);

    let (v00, v11) = (one_body.get(0, 0).re, one_body.get(1, 1).re);
    let mut diag_values: Vec<f64> = (0..=n)
        .map(|m| (v11 * m as f64 + v00 * (n - m) as f64) / one_body_width)
        .collect();
    if lambda != 0.0 {
        let scale = lambda / kbody_width;
        for (d, kd) in diag_values.iter_mut().zip(embedded_diagonal(kbody, space)?) {
            *d += scale * kd;
        }
    }

    Ok(ReferenceHamiltonian {
        n,
        k,
        beta: kbody.beta(),
        lambda,
        width_mode,
        one_body_width,
        kbody_width,
        diag_values,
        one_body_couplings: one_body.clone(),
        kbody_diag_couplings: kbody.diagonal(),
    })
}

/// `H_λ = H_0 + (λ / W_k) H_k^offdiag`.
#[derive(Debug, Clone)]
pub struct PerturbedHamiltonian {
    pub reference: ReferenceHamiltonian,
    pub residual: DMatrix<Complex64>,
    pub full: DMatrix<Complex64>,
}

pub fn build_perturbed(
    reference: &ReferenceHamiltonian,
    kbody: &CouplingMatrix,
    space: FockSpace,
) -> Result<PerturbedHamiltonian> {
    if space.particles() != reference.n {
        return Err(Error::Consistency(format!(
            "Fock space has n={} but the reference was built for n={}",
            space.particles(),
            reference.n
        )));
    }
    if kbody.rank() != reference.k || kbody.beta() != reference.beta {
        return Err(Error::Consistency("k-body couplings differ in rank or β from the reference".into()));
    }
    if kbody.diagonal() != reference.kbody_diag_couplings {
        return Err(Error::Consistency(
            "k-body couplings are not the realization whose diagonal entered the reference".into(),
        ));
    }
    let embedded = embed(kbody, space)?;
    let residual = embedded.offdiag * Complex64::new(reference.kbody_scale(), 0.0);
    let mut full = residual.clone();
    for (i, &e) in reference.diag_values.iter().enumerate() {
        full[(i, i)] += e;
    }
    Ok(PerturbedHamiltonian { reference: reference.clone(), residual, full })
}

/// Mean level spacing of the reference spectrum and the Heisenberg time `2π/d` (ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergScale {
    pub mean_spacing: f64,
    pub heisenberg_time: f64,
}

pub fn heisenberg_time(reference: &ReferenceHamiltonian) -> Result<HeisenbergScale> {
    heisenberg_time_of(&reference.diag_values)
}

/// `d = (E_max − E_min)/(N − 1)`, `t_H = 2π/d`.
pub fn heisenberg_time_of(energies: &[f64]) -> Result<HeisenbergScale> {
    if energies.len() < 2 {
        return Err(Error::domain("Heisenberg time needs at least two levels"));
    }
    let (lo, hi) = energies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let mean_spacing = (hi - lo) / (energies.len() - 1) as f64;
    if !(mean_spacing > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(HeisenbergScale { mean_spacing, heisenberg_time: 2.0 * std::f64::consts::PI / mean_spacing })
}

/// Uniformly random unit vector: i.i.d. complex Gaussian components, normalized.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DVector<Complex64>> {
    if dim == 0 {
        return Err(Error::domain("state dimension must be at least 1"));
    }
    let mut psi = DVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let norm = psi.norm();
    psi.unscale_mut(norm);
    Ok(psi)
}

/// Phases `exp(−i E⁰_m t′)` of the diagonal reference propagator at physical time `t′`.
pub fn reference_propagator(reference: &ReferenceHamiltonian, physical_time: f64) -> Vec<Complex64> {
    reference
        .diag_values
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * physical_time))
        .collect()
}

/// Strictly increasing times in Heisenberg units, starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `points_per_unit` points per Heisenberg time on `[0, t_max]`.
    ///
    /// Times are `i / points_per_unit`, so integer multiples of `t_H` land exactly on the grid.
    pub fn uniform(points_per_unit: usize, t_max: f64) -> Result<Self> {
        if points_per_unit == 0 || !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::domain("uniform grid needs points_per_unit >= 1 and t_max > 0"));
        }
        let ppu = points_per_unit as f64;
        let last = (t_max * ppu + 1e-9).floor() as usize;
        Ok(Self { times: (0..=last).map(|i| i as f64 / ppu).collect() })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::domain("time grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("time grid must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Eigenvectors stored as real and (optional) imaginary parts for real-arithmetic GEMM.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub energies: DVector<f64>,
    pub vectors_re: DMatrix<f64>,
    pub vectors_im: Option<DMatrix<f64>>,
}

impl SpectralDecomposition {
    /// Hermitian eigendecomposition; uses the real symmetric solver when `h` is real.
    pub fn new(h: &DMatrix<Complex64>) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim {
            return Err(Error::domain("matrix must be square"));
        }
        let max_iter = 10_000 * dim.max(1);
        let out = if h.iter().all(|z| z.im == 0.0) {
            let real = h.map(|z| z.re);
            let eig = real
                .try_symmetric_eigen(f64::EPSILON, max_iter)
                .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
            Self { energies: eig.eigenvalues, vectors_re: eig.eigenvectors, vectors_im: None }
        } else {
            let eig = h
                .clone()
                .try_symmetric_eigen(f64::EPSILON, max_iter)
                .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
            Self {
                energies: eig.eigenvalues,
                vectors_re: eig.eigenvectors.map(|z| z.re),
                vectors_im: Some(eig.eigenvectors.map(|z| z.im)),
            }
        };
        let residual = out.residual_norm(h);
        let scale = h.norm();
        if !(residual <= EIGEN_RESIDUAL_TOLERANCE * scale) {
            return Err(Error::Numerical(format!(
                "eigendecomposition residual {residual:e} exceeds {EIGEN_RESIDUAL_TOLERANCE:e}·‖H‖ = {:e}",
                EIGEN_RESIDUAL_TOLERANCE * scale
            )));
        }
        Ok(out)
    }

    pub fn vectors(&self) -> DMatrix<Complex64> {
        match &self.vectors_im {
            None => self.vectors_re.map(|x| Complex64::new(x, 0.0)),
            Some(im) => self.vectors_re.zip_map(im, Complex64::new),
        }
    }

    /// `V · diag(E) · V†`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let v = self.vectors();
        let mut ve = v.clone();
        for (j, mut col) in ve.column_iter_mut().enumerate() {
            col *= Complex64::new(self.energies[j], 0.0);
        }
        ve * v.adjoint()
    }

    /// Frobenius norm of `H V − V E`.
    pub fn residual_norm(&self, h: &DMatrix<Complex64>) -> f64 {
        let v = self.vectors();
        let mut ve = v.clone();
        for (j, mut col) in ve.column_iter_mut().enumerate() {
            col *= Complex64::new(self.energies[j], 0.0);
        }
        (h * v - ve).norm()
    }
}

/// Evaluates `f(t) = ⟨ψ₀| U₀(−t) U_λ(t) |ψ₀⟩` at arbitrary times (Heisenberg units).
///
/// A common energy shift is removed from both Hamiltonians; it cancels in `f`
/// and keeps the phases small.
#[derive(Debug, Clone)]
pub struct FidelityEvaluator {
    scale: HeisenbergScale,
    shift: f64,
    reference_energies: Vec<f64>,
    spectrum: SpectralDecomposition,
    psi0: DVector<Complex64>,
    coeff_re: Vec<f64>,
    coeff_im: Vec<f64>,
    /// `H_λ = H_0` exactly, so both propagators cancel.
    unperturbed: bool,
}

/// Amplitudes plus the largest deviation of `‖U_λ(t) ψ₀‖` from one.
#[derive(Debug, Clone)]
pub struct Amplitudes {
    pub values: Vec<Complex64>,
    pub max_norm_deviation: f64,
}

impl FidelityEvaluator {
    pub fn new(
        reference: &ReferenceHamiltonian,
        perturbed: &PerturbedHamiltonian,
        psi0: &DVector<Complex64>,
    ) -> Result<Self> {
        let dim = reference.dim();
        if psi0.len() != dim || perturbed.full.nrows() != dim {
            return Err(Error::domain(format!(
                "state of dimension {} does not match the Hamiltonian dimension {dim}",
                psi0.len()
            )));
        }
        let scale = heisenberg_time(reference)?;
        let shift = reference.diag_values.iter().sum::<f64>() / dim as f64;
        let mut shifted = perturbed.full.clone();
        for i in 0..dim {
            shifted[(i, i)] -= shift;
        }
        let spectrum = SpectralDecomposition::new(&shifted)?;

        // c = V† ψ₀
        let v = spectrum.vectors();
        let coeff = v.adjoint() * psi0;
        Ok(Self {
            scale,
            shift,
            reference_energies: reference.diag_values.iter().map(|e| e - shift).collect(),
            spectrum,
            psi0: psi0.clone(),
            coeff_re: coeff.iter().map(|z| z.re).collect(),
            coeff_im: coeff.iter().map(|z| z.im).collect(),
            unperturbed: perturbed.residual.iter().all(|z| z.norm_sqr() == 0.0),
        })
    }

    pub fn scale(&self) -> HeisenbergScale {
        self.scale
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    /// Eigenvalues of `H_λ` without the internal energy shift.
    pub fn perturbed_energies(&self) -> Vec<f64> {
        self.spectrum.energies.iter().map(|e| e + self.shift).collect()
    }

    /// `exp(−i H_λ t′) ψ₀` at `t` in Heisenberg units, up to the global phase of the shift.
    pub fn evolved_state(&self, t: f64) -> DVector<Complex64> {
        let tp = t * self.scale.heisenberg_time;
        let u = DVector::from_iterator(
            self.coeff_re.len(),
            self.spectrum
                .energies
                .iter()
                .zip(self.coeff_re.iter().zip(&self.coeff_im))
                .map(|(&e, (&cr, &ci))| Complex64::new(cr, ci) * Complex64::from_polar(1.0, -e * tp)),
        );
        self.spectrum.vectors() * u
    }

    /// Fidelity amplitudes at the given times (Heisenberg units, any order or sign).
    pub fn amplitudes(&self, times: &[f64]) -> Amplitudes {
        let dim = self.coeff_re.len();
        let th = self.scale.heisenberg_time;
        let mut values = Vec::with_capacity(times.len());
        let mut max_norm_deviation: f64 = 0.0;
        if self.unperturbed {
            return Amplitudes { values: vec![Complex64::new(1.0, 0.0); times.len()], max_norm_deviation };
        }

        let mut u_re = DMatrix::<f64>::zeros(dim, TIME_BLOCK);
        let mut u_im = DMatrix::<f64>::zeros(dim, TIME_BLOCK);
        let mut w_re = DMatrix::<f64>::zeros(dim, TIME_BLOCK);
        let mut w_im = DMatrix::<f64>::zeros(dim, TIME_BLOCK);

        for chunk in times.chunks(TIME_BLOCK) {
            let b = chunk.len();
            if b != u_re.ncols() {
                u_re = DMatrix::zeros(dim, b);
                u_im = DMatrix::zeros(dim, b);
                w_re = DMatrix::zeros(dim, b);
                w_im = DMatrix::zeros(dim, b);
            }
            // u_j(t) = c_j exp(−i E_j t′)
            for (col, &t) in chunk.iter().enumerate() {
                let tp = t * th;
                for j in 0..dim {
                    let (sin, cos) = (self.spectrum.energies[j] * tp).sin_cos();
                    let (cr, ci) = (self.coeff_re[j], self.coeff_im[j]);
                    u_re[(j, col)] = cr * cos + ci * sin;
                    u_im[(j, col)] = ci * cos - cr * sin;
                }
            }
            // w = V u, with V = V_re + i V_im
            w_re.gemm(1.0, &self.spectrum.vectors_re, &u_re, 0.0);
            w_im.gemm(1.0, &self.spectrum.vectors_re, &u_im, 0.0);
            if let Some(vi) = &self.spectrum.vectors_im {
                w_re.gemm(-1.0, vi, &u_im, 1.0);
                w_im.gemm(1.0, vi, &u_re, 1.0);
            }
            // f = Σ_m conj(ψ_m) exp(+i E⁰_m t′) w_m
            for (col, &t) in chunk.iter().enumerate() {
                let tp = t * th;
                let mut f = Complex64::new(0.0, 0.0);
                let mut norm = 0.0;
                for m in 0..dim {
                    let w = Complex64::new(w_re[(m, col)], w_im[(m, col)]);
                    norm += w.norm_sqr();
                    let phase = Complex64::from_polar(1.0, self.reference_energies[m] * tp);
                    f += self.psi0[m].conj() * phase * w;
                }
                max_norm_deviation = max_norm_deviation.max((norm.sqrt() - 1.0).abs());
                // Both propagators are the identity at t = 0.
                values.push(if t == 0.0 { Complex64::new(1.0, 0.0) } else { f });
            }
        }
        Amplitudes { values, max_norm_deviation }
    }
}

/// Fidelity amplitude and fidelity on a time grid in Heisenberg units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub fidelities: Vec<f64>,
    pub heisenberg_time: f64,
    pub mean_spacing: f64,
    pub max_norm_deviation: f64,
}

impl FidelityTrace {
    pub fn one_minus_fidelity(&self) -> Vec<f64> {
        self.fidelities.iter().map(|f| 1.0 - f).collect()
    }
}

pub fn fidelity_trace(
    reference: &ReferenceHamiltonian,
    perturbed: &PerturbedHamiltonian,
    psi0: &DVector<Complex64>,
    grid: &TimeGrid,
) -> Result<FidelityTrace> {
    let evaluator = FidelityEvaluator::new(reference, perturbed, psi0)?;
    let Amplitudes { values, max_norm_deviation } = evaluator.amplitudes(grid.times());
    let fidelities = values.iter().map(|f| f.norm_sqr()).collect();
    let scale = evaluator.scale();
    Ok(FidelityTrace {
        times: grid.times().to_vec(),
        amplitudes: values,
        fidelities,
        heisenberg_time: scale.heisenberg_time,
        mean_spacing: scale.mean_spacing,
        max_norm_deviation,
    })
}
