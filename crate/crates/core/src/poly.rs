//! Dense real polynomials with ascending coefficient storage.
//!
//! Roots are computed as eigenvalues of a balanced companion matrix and then
//! polished with a few Newton steps on the original coefficients.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest degree accepted by [`Poly::roots`].
pub const MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("polynomial degree {degree} exceeds the supported maximum of {cap}")]
    DegreeTooLarge { degree: usize, cap: usize },
    #[error("the zero polynomial has no well-defined roots")]
    ZeroPolynomial,
}

/// Real polynomial `c[0] + c[1] x + ... + c[d] x^d`.
///
/// The stored coefficient vector never ends in an exact zero; the zero
/// polynomial is the empty vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Poly {
    fn from(coeffs: Vec<f64>) -> Self {
        Poly::new(coeffs)
    }
}

impl From<Poly> for Vec<f64> {
    fn from(p: Poly) -> Self {
        p.coeffs
    }
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// `c * x^k`
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Poly::new(v)
    }

    /// Monic polynomial with the given roots. Complex roots are expected in
    /// conjugate pairs; the imaginary residue of the product is dropped.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (k, a) in acc.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            acc = next;
        }
        Poly::new(acc.into_iter().map(|c| c.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Largest absolute coefficient.
    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops leading coefficients whose magnitude is below `rel_tol` times the
    /// largest coefficient.
    pub fn trimmed(&self, rel_tol: f64) -> Poly {
        let cut = rel_tol * self.norm_inf();
        let mut v = self.coeffs.clone();
        while v.last().is_some_and(|c| c.abs() <= cut) {
            v.pop();
        }
        Poly::new(v)
    }

    pub fn scale(&self, a: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * a).collect())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Polynomial long division, `self = q * divisor + r` with
    /// `deg r < deg divisor`.
    ///
    /// # Panics
    ///
    /// Panics if `divisor` is the zero polynomial.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Poly::zero(), self.clone());
        }
        let mut quot = vec![0.0; rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dd] / lead;
            quot[k] = q;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= q * d;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd);
        (Poly::new(quot), Poly::new(rem))
    }

    /// Number of exact zero roots, i.e. the count of leading zero
    /// low-order coefficients.
    pub fn zero_root_multiplicity(&self) -> usize {
        self.coeffs.iter().take_while(|c| **c == 0.0).count()
    }

    /// All complex roots, with multiplicity.
    ///
    /// Exact zero roots are split off structurally; the rest come from the
    /// eigenvalues of the balanced companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex64>, PolyError> {
        let degree = self.degree().ok_or(PolyError::ZeroPolynomial)?;
        if degree > MAX_DEGREE {
            return Err(PolyError::DegreeTooLarge {
                degree,
                cap: MAX_DEGREE,
            });
        }
        let zeros = self.zero_root_multiplicity();
        let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
        let reduced = &self.coeffs[zeros..];
        let d = reduced.len() - 1;
        match d {
            0 => {}
            1 => roots.push(Complex64::new(-reduced[0] / reduced[1], 0.0)),
            _ => {
                let lead = reduced[d];
                let mut companion = DMatrix::<f64>::zeros(d, d);
                for i in 1..d {
                    companion[(i, i - 1)] = 1.0;
                }
                for i in 0..d {
                    companion[(i, d - 1)] = -reduced[i] / lead;
                }
                balance(&mut companion);
                let reduced_poly = Poly::new(reduced.to_vec());
                let dp = reduced_poly.derivative();
                for z in companion.complex_eigenvalues().iter() {
                    roots.push(polish(&reduced_poly, &dp, *z));
                }
            }
        }
        Ok(roots)
    }

    /// Real roots (imaginary part within `imag_tol * (1 + |z|)`) sorted
    /// ascending.
    pub fn real_roots(&self, imag_tol: f64) -> Result<Vec<f64>, PolyError> {
        let mut out: Vec<f64> = self
            .roots()?
            .into_iter()
            .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.norm()))
            .map(|z| z.re)
            .collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// Parlett-Reinsch diagonal similarity balancing, radix 2.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn polish(p: &Poly, dp: &Poly, mut z: Complex64) -> Complex64 {
    let mut best = p.eval_complex(z).norm();
    for _ in 0..3 {
        let d = dp.eval_complex(z);
        if d.norm() == 0.0 {
            break;
        }
        let cand = z - p.eval_complex(z) / d;
        let val = p.eval_complex(cand).norm();
        if val.is_finite() && val < best {
            best = val;
            z = cand;
        } else {
            break;
        }
    }
    z
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 => write!(f, "{a} s")?,
                _ => write!(f, "{a} s^{k}")?,
            }
        }
        Ok(())
    }
}
