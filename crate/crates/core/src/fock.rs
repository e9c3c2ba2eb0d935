//! Occupation-number basis for `n` bosons on two single-particle levels.
//!
//! Basis state `m` holds `m` bosons in level 1 and `n - m` in level 2, so the
//! space has dimension `n + 1`. A normal-ordered monomial
//! `(a1†)^r (a2†)^(k-r) (a1)^s (a2)^(k-s)` conserves the particle number and
//! moves the level-1 occupation by `r - s`; its matrix is a single band at
//! offset `r - s`.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

/// Fixed-`n` Fock space of two bosonic modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    n: usize,
}

impl FockSpace {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Number of bosons.
    pub fn particles(&self) -> usize {
        self.n
    }

    /// Hilbert-space dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }
}

/// Exponents of the normal-ordered monomial `(a1†)^r (a2†)^(k-r) (a1)^s (a2)^(k-s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonomialSpec {
    pub k: usize,
    pub r: usize,
    pub s: usize,
}

impl MonomialSpec {
    pub fn new(k: usize, r: usize, s: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("interaction rank k must be at least 1"));
        }
        if r > k || s > k {
            return Err(Error::domain(format!(
                "monomial exponents (r={r}, s={s}) must not exceed k={k}"
            )));
        }
        Ok(Self { k, r, s })
    }

    /// Change of the level-1 occupation, `r - s`.
    pub fn shift(&self) -> isize {
        self.r as isize - self.s as isize
    }
}

fn factorial_product(r: usize, n: usize) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=r {
        acc *= i as u64;
    }
    for i in 2..=(n - r) {
        acc *= i as u64;
    }
    acc
}

/// Square root of a big integer as `f64`, or `None` when the result overflows.
fn big_sqrt(x: &BigUint) -> Option<f64> {
    let bits = x.bits();
    let value = if bits <= 1000 {
        x.to_f64()?.sqrt()
    } else {
        // Keep ~200 leading bits; the shift is even so its root is an exact power of two.
        let mut shift = bits - 200;
        shift += shift % 2;
        let head = (x >> shift).to_f64()?;
        head.sqrt() * 2f64.powi((shift / 2) as i32)
    };
    value.is_finite().then_some(value)
}

fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map(f64::ln).unwrap_or(f64::INFINITY);
    }
    let shift = bits - 200;
    let head = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    head.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `√(r!·(n−r)!)`, the norm of `(a1†)^r (a2†)^(n−r)|0⟩`.
///
/// The factorial product is formed exactly; the result is an error only when
/// the root itself exceeds the `f64` range (see [`ln_normalization`]).
pub fn normalization(r: usize, n: usize) -> Result<f64> {
    if r > n {
        return Err(Error::domain(format!("normalization needs 0 <= r <= n, got r={r}, n={n}")));
    }
    big_sqrt(&factorial_product(r, n)).ok_or_else(|| {
        Error::domain(format!("normalization sqrt({r}!·{}!) exceeds the f64 range", n - r))
    })
}

/// Natural logarithm of [`normalization`]; finite for any `n`.
pub fn ln_normalization(r: usize, n: usize) -> Result<f64> {
    if r > n {
        return Err(Error::domain(format!("normalization needs 0 <= r <= n, got r={r}, n={n}")));
    }
    Ok(0.5 * big_ln(&factorial_product(r, n)))
}

/// `a·(a−1)···(a−c+1)` as floating point.
fn falling(a: usize, c: usize) -> f64 {
    (0..c).map(|i| (a - i) as f64).product()
}

fn ln_falling(a: usize, c: usize) -> f64 {
    (0..c).map(|i| ((a - i) as f64).ln()).sum()
}

/// Nonzero entries `(row, column, value)` of the monomial matrix.
///
/// The closed form comes from applying the ladder operators to the
/// occupation state of column `m'`: annihilation contributes
/// `m'!/(m'−s)! · (n−m')!/(n−m'−k+s)!`, creation
/// `(m'−s+r)!/(m'−s)! · (n−m'+s−r)!/(n−m'−k+s)!`, each under a square root,
/// all divided by `N_r^(k) N_s^(k)`. Ratios are products of at most `k`
/// consecutive integers, so no factorial of `n` is ever formed.
pub(crate) fn monomial_entries(space: FockSpace, spec: MonomialSpec) -> Result<Vec<(usize, usize, f64)>> {
    let n = space.particles();
    let MonomialSpec { k, r, s } = spec;
    if k > n {
        return Err(Error::domain(format!("interaction rank k={k} exceeds particle number n={n}")));
    }

    let norm = normalization(r, k).and_then(|a| normalization(s, k).map(|b| a * b));
    let ln_norm = ln_normalization(r, k)? + ln_normalization(s, k)?;

    let mut out = Vec::with_capacity(n + 1);
    for col in s..=(n - (k - s)) {
        let level1 = col - s;
        let level2 = n - col - (k - s);
        let row = level1 + r;
        let product = falling(col, s)
            * falling(n - col, k - s)
            * falling(level1 + r, r)
            * falling(level2 + (k - r), k - r);
        let value = match norm {
            Ok(norm) if product.is_finite() => product.sqrt() / norm,
            _ => {
                let ln = 0.5
                    * (ln_falling(col, s)
                        + ln_falling(n - col, k - s)
                        + ln_falling(level1 + r, r)
                        + ln_falling(level2 + (k - r), k - r));
                (ln - ln_norm).exp()
            }
        };
        out.push((row, col, value));
    }
    Ok(out)
}

/// Dense matrix of the normalized monomial on the fixed-`n` space.
pub fn monomial_matrix(space: FockSpace, spec: MonomialSpec) -> Result<DMatrix<f64>> {
    let dim = space.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for (row, col, value) in monomial_entries(space, spec)? {
        m[(row, col)] = value;
    }
    Ok(m)
}
