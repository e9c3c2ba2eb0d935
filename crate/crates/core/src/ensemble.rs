//! Two-level bosonic k-body embedded ensembles.
//!
//! A realization is a Hermitian `(k+1)×(k+1)` table of couplings `v[r][s]`;
//! embedding it into the `n`-boson space sums `v[r][s]` times the
//! corresponding normalized monomial.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{monomial_entries, FockSpace, MonomialSpec};

/// Dyson index of the coupling table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    /// Time-reversal invariant: real symmetric couplings (GOE).
    Orthogonal,
    /// Broken time reversal: complex Hermitian couplings (GUE).
    Unitary,
}

impl Beta {
    pub fn from_index(beta: u8) -> Result<Self> {
        match beta {
            1 => Ok(Beta::Orthogonal),
            2 => Ok(Beta::Unitary),
            other => Err(Error::domain(format!("Dyson index must be 1 or 2, got {other}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Beta::Orthogonal => 1,
            Beta::Unitary => 2,
        }
    }
}

impl TryFrom<u8> for Beta {
    type Error = Error;

    fn try_from(beta: u8) -> Result<Self> {
        Beta::from_index(beta)
    }
}

impl From<Beta> for u8 {
    fn from(beta: Beta) -> u8 {
        beta.index()
    }
}

/// Second-moment convention for the coupling table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingConvention {
    /// `⟨v_rs v_r's'⟩ = v0²(δ_rr'δ_ss' + δ_β1 δ_rs'δ_sr')`: real-symmetric
    /// diagonal entries carry twice the off-diagonal variance.
    #[default]
    Standard,
    /// Every independent entry has variance `v0²`.
    Uniform,
}

/// Whether interaction terms are divided by `W_k` itself or by its square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthMode {
    #[default]
    AsDefined,
    Sqrt,
}

/// Hermitian table of k-body couplings `v[r][s]`, `0 <= r, s <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    k: usize,
    beta: Beta,
    values: DMatrix<Complex64>,
}

impl CouplingMatrix {
    /// Wraps a table, checking shape, Hermiticity and realness for `β = 1`.
    pub fn new(k: usize, beta: Beta, values: DMatrix<Complex64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("interaction rank k must be at least 1"));
        }
        if values.nrows() != k + 1 || values.ncols() != k + 1 {
            return Err(Error::domain(format!(
                "coupling table for k={k} must be {0}x{0}, got {1}x{2}",
                k + 1,
                values.nrows(),
                values.ncols()
            )));
        }
        for r in 0..=k {
            for s in 0..=k {
                if values[(r, s)] != values[(s, r)].conj() {
                    return Err(Error::domain(format!("coupling table is not Hermitian at ({r},{s})")));
                }
                if beta == Beta::Orthogonal && values[(r, s)].im != 0.0 {
                    return Err(Error::domain("β = 1 couplings must be real"));
                }
            }
        }
        Ok(Self { k, beta, values })
    }

    /// All-zero table.
    pub fn zeros(k: usize, beta: Beta) -> Result<Self> {
        Self::new(k, beta, DMatrix::zeros(k + 1, k + 1))
    }

    /// Sets `v[r][s]` and its Hermitian partner `v[s][r]`.
    pub fn set(&mut self, r: usize, s: usize, value: Complex64) -> Result<()> {
        if r > self.k || s > self.k {
            return Err(Error::domain(format!("index ({r},{s}) outside the k={} table", self.k)));
        }
        if (r == s || self.beta == Beta::Orthogonal) && value.im != 0.0 {
            return Err(Error::domain("diagonal and β = 1 couplings must be real"));
        }
        self.values[(r, s)] = value;
        self.values[(s, r)] = value.conj();
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.k
    }

    pub fn beta(&self) -> Beta {
        self.beta
    }

    pub fn get(&self, r: usize, s: usize) -> Complex64 {
        self.values[(r, s)]
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    /// The `r = s` entries, which are real.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..=self.k).map(|r| self.values[(r, r)].re).collect()
    }

    /// Copy with the `r = s` entries replaced.
    pub fn with_diagonal(&self, diag: &[f64]) -> Result<Self> {
        if diag.len() != self.k + 1 {
            return Err(Error::domain("diagonal length does not match the coupling rank"));
        }
        let mut out = self.clone();
        for (r, &d) in diag.iter().enumerate() {
            out.values[(r, r)] = Complex64::new(d, 0.0);
        }
        Ok(out)
    }

    /// Copy keeping only the `r != s` entries.
    pub fn off_diagonal_part(&self) -> Self {
        let mut out = self.clone();
        for r in 0..=self.k {
            out.values[(r, r)] = Complex64::new(0.0, 0.0);
        }
        out
    }

    /// Table scaled by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k: self.k,
            beta: self.beta,
            values: self.values.map(|v| v * factor),
        }
    }
}

/// Draws a coupling table with unit variance scale and the standard convention.
pub fn sample_couplings<R: Rng + ?Sized>(k: usize, beta: Beta, rng: &mut R) -> Result<CouplingMatrix> {
    sample_couplings_with(k, beta, CouplingConvention::Standard, 1.0, rng)
}

/// Draws a Gaussian coupling table.
///
/// Entries are drawn in row-major order over the upper triangle, so the
/// output is a deterministic function of the stream state.
pub fn sample_couplings_with<R: Rng + ?Sized>(
    k: usize,
    beta: Beta,
    convention: CouplingConvention,
    v0: f64,
    rng: &mut R,
) -> Result<CouplingMatrix> {
    if k == 0 {
        return Err(Error::domain("interaction rank k must be at least 1"));
    }
    let mut values = DMatrix::zeros(k + 1, k + 1);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    for r in 0..=k {
        for s in r..=k {
            let v = match (beta, r == s) {
                (Beta::Orthogonal, true) => {
                    let sd = match convention {
                        CouplingConvention::Standard => std::f64::consts::SQRT_2 * v0,
                        CouplingConvention::Uniform => v0,
                    };
                    Complex64::new(sd * normal(), 0.0)
                }
                (Beta::Orthogonal, false) => Complex64::new(v0 * normal(), 0.0),
                (Beta::Unitary, true) => Complex64::new(v0 * normal(), 0.0),
                (Beta::Unitary, false) => {
                    let sd = v0 * std::f64::consts::FRAC_1_SQRT_2;
                    Complex64::new(sd * normal(), sd * normal())
                }
            };
            values[(r, s)] = v;
            values[(s, r)] = v.conj();
        }
    }
    Ok(CouplingMatrix { k, beta, values })
}

/// Embedded Hamiltonian with its diagonal / off-diagonal split in the occupation basis.
#[derive(Debug, Clone)]
pub struct EmbeddedHamiltonian {
    pub n: usize,
    pub k: usize,
    pub beta: Beta,
    pub full: DMatrix<Complex64>,
    pub diag: DVector<f64>,
    pub offdiag: DMatrix<Complex64>,
}

impl EmbeddedHamiltonian {
    pub fn dim(&self) -> usize {
        self.full.nrows()
    }
}

/// Diagonal of the embedded operator, using only the `r = s` couplings.
pub(crate) fn embedded_diagonal(c: &CouplingMatrix, space: FockSpace) -> Result<Vec<f64>> {
    let k = c.rank();
    let mut diag = vec![0.0; space.dim()];
    for r in 0..=k {
        let v = c.get(r, r).re;
        if v == 0.0 {
            continue;
        }
        for (row, _, value) in monomial_entries(space, MonomialSpec::new(k, r, r)?)? {
            diag[row] += v * value;
        }
    }
    Ok(diag)
}

/// `Σ_{r,s} v[r][s] · M(k, r, s)` on the fixed-`n` space.
pub fn embed(c: &CouplingMatrix, space: FockSpace) -> Result<EmbeddedHamiltonian> {
    let k = c.rank();
    let n = space.particles();
    if k > n {
        return Err(Error::domain(format!("interaction rank k={k} exceeds particle number n={n}")));
    }
    let dim = space.dim();
    let mut full = DMatrix::<Complex64>::zeros(dim, dim);
    for r in 0..=k {
        for s in 0..=k {
            let v = c.get(r, s);
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (row, col, value) in monomial_entries(space, MonomialSpec::new(k, r, s)?)? {
                full[(row, col)] += v * value;
            }
        }
    }
    let diag = DVector::from_iterator(dim, (0..dim).map(|i| full[(i, i)].re));
    let mut offdiag = full.clone();
    offdiag.fill_diagonal(Complex64::new(0.0, 0.0));
    Ok(EmbeddedHamiltonian { n, k, beta: c.beta(), full, diag, offdiag })
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= (n - i) as u64;
        acc /= (i + 1) as u64;
    }
    acc
}

fn lambda_eig_exact(s: usize, kk: usize, n: usize) -> Result<BigUint> {
    if s > n || kk > n - s {
        return Err(Error::domain(format!(
            "Λ^({s})({kk}) needs 0 <= s <= n and 0 <= kk <= n - s (n = {n})"
        )));
    }
    Ok(binomial(n - s, kk) * binomial(n + s + 1, kk))
}

/// `C(n−s, kk) · C(n+s+1, kk)`, the `s`-th eigenvalue of the ensemble-averaged
/// correlation matrix of the bosonic embedded ensemble.
pub fn lambda_eig(s: usize, kk: usize, n: usize) -> Result<f64> {
    lambda_eig_exact(s, kk, n)?
        .to_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::domain("Λ value exceeds the f64 range"))
}

/// Ensemble-averaged `(1/N) tr H_k²` for given `(n, k, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthModel {
    pub n: usize,
    pub k: usize,
    pub beta: Beta,
    pub value: f64,
}

impl WidthModel {
    /// Factor dividing the k-body term under the chosen convention.
    pub fn normalizer(&self, mode: WidthMode) -> f64 {
        match mode {
            WidthMode::AsDefined => self.value,
            WidthMode::Sqrt => self.value.sqrt(),
        }
    }
}

/// `W_k = Λ^(0)(k) + δ_β1/N · Σ_{s=0}^{k} Λ^(s)(n−k)`.
pub fn spectral_width(k: usize, n: usize, beta: Beta) -> Result<WidthModel> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("spectral width needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let value = match beta {
        Beta::Unitary => lambda_eig(0, k, n)?,
        Beta::Orthogonal => {
            let mut sum = BigUint::ZERO;
            for s in 0..=k {
                sum += lambda_eig_exact(s, n - k, n)?;
            }
            // Combine over the common denominator N before rounding.
            let numerator = lambda_eig_exact(0, k, n)? * BigUint::from(n as u64 + 1) + sum;
            numerator
                .to_f64()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::domain("spectral width exceeds the f64 range"))?
                / (n as f64 + 1.0)
        }
    };
    Ok(WidthModel { n, k, beta, value })
}

/// `(1/N) tr H²` of one realization.
pub fn empirical_width(h: &EmbeddedHamiltonian) -> f64 {
    let dim = h.dim();
    if dim == 0 {
        return 0.0;
    }
    // tr(H²) = Σ |H_ij|² for Hermitian H
    h.full.iter().map(|z| z.norm_sqr()).sum::<f64>() / dim as f64
}
