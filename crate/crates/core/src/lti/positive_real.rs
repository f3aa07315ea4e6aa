//! Exact positive-realness test for real rational functions.
//!
//! `H` is positive real when it has no poles in `Re s > 0`, every pole on the
//! imaginary axis (including infinity) is simple with a real nonnegative
//! residue, and `Re H(jw) >= 0` wherever it is defined. The real-part
//! condition is decided on the polynomial `P(x)` with `Re H(jw) = P(w^2) / Q(w^2)`
//! by locating its positive real roots, so no frequency grid is involved.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_degree, BorderlineWitness, LtiError, RationalTransfer};
use crate::poly::{Poly, MAX_DEGREE};

/// Relative band around the imaginary axis inside which a pole counts as
/// lying on it.
pub const AXIS_TOL: f64 = 1e-9;
/// Relative band around zero inside which a negative real part is reported
/// as borderline rather than as a failure.
pub const REAL_PART_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrFailure {
    RhpPole { re: f64, im: f64 },
    RepeatedImagPole { omega: f64 },
    NegativeResidue { omega: f64, residue_re: f64, residue_im: f64 },
    RealPartNegative { omega: f64, value: f64 },
    ImproperAtInfinity { relative_degree: i64 },
}

impl std::fmt::Display for PrFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrFailure::RhpPole { re, im } => write!(f, "pole {re}{im:+}j in the open right half-plane"),
            PrFailure::RepeatedImagPole { omega } => write!(f, "repeated pole at s = {omega}j"),
            PrFailure::NegativeResidue { omega, residue_re, residue_im } => {
                write!(f, "residue {residue_re}{residue_im:+}j at s = {omega}j is not real nonnegative")
            }
            PrFailure::RealPartNegative { omega, value } => write!(f, "Re H(j{omega}) = {value} < 0"),
            PrFailure::ImproperAtInfinity { relative_degree } => {
                write!(f, "behaviour at infinity violates positive realness (relative degree {relative_degree})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveRealVerdict {
    pub is_pr: bool,
    /// Present exactly when `is_pr` is false.
    pub failure: Option<PrFailure>,
    /// Distance to losing positive realness: the smaller of `min Re H(jw)`
    /// and the distance of the nearest off-axis pole to the axis. Negative
    /// on failure.
    pub margin: f64,
    /// `min Re H(jw)` after removing imaginary-axis poles, when evaluated.
    pub real_part_min: Option<f64>,
    /// Frequency attaining `real_part_min`; `None` for the limit at infinity.
    pub witness_omega: Option<f64>,
}

impl PositiveRealVerdict {
    fn fail(failure: PrFailure, margin: f64) -> Self {
        PositiveRealVerdict {
            is_pr: false,
            failure: Some(failure),
            margin,
            real_part_min: None,
            witness_omega: None,
        }
    }
}

/// Full positive-realness test.
pub fn is_positive_real(h: &RationalTransfer) -> Result<PositiveRealVerdict, LtiError> {
    analyze(h, true)
}

/// Pole and residue conditions only, without the real-part condition.
pub fn positive_real_poles_only(h: &RationalTransfer) -> Result<PositiveRealVerdict, LtiError> {
    analyze(h, false)
}

fn axis_band(z: Complex64) -> f64 {
    AXIS_TOL * (1.0 + z.norm())
}

fn analyze(h: &RationalTransfer, check_real_part: bool) -> Result<PositiveRealVerdict, LtiError> {
    check_degree(h)?;
    let dd = h.den.degree().ok_or(LtiError::ZeroDenominator)?;
    let Some(dn) = h.num.degree() else {
        return Ok(PositiveRealVerdict {
            is_pr: true,
            failure: None,
            margin: 0.0,
            real_part_min: Some(0.0),
            witness_omega: Some(0.0),
        });
    };

    let mut num = h.num.clone();
    let mut den = h.den.clone();

    // pole at infinity
    if dn > dd + 1 || (dn == dd + 1 && num.leading() / den.leading() <= 0.0) {
        return Ok(PositiveRealVerdict::fail(
            PrFailure::ImproperAtInfinity {
                relative_degree: dd as i64 - dn as i64,
            },
            f64::NEG_INFINITY,
        ));
    }
    if dn == dd + 1 {
        let q1 = num.leading() / den.leading();
        let shifted = &Poly::monomial(q1, 1) * &den;
        let mut c = (&num - &shifted).coeffs().to_vec();
        c.truncate(dd + 1);
        num = Poly::new(c);
    }

    // finite poles
    let roots = den.roots()?;
    let mut pole_margin = f64::INFINITY;
    let mut worst_rhp: Option<Complex64> = None;
    let mut zero_poles = 0usize;
    let mut axis_freqs: Vec<f64> = Vec::new();
    for z in roots {
        let band = axis_band(z);
        if z.re > band {
            if worst_rhp.is_none_or(|w| z.re > w.re) {
                worst_rhp = Some(z);
            }
        } else if z.re >= -band {
            if z.im.abs() <= band {
                zero_poles += 1;
            } else if z.im > 0.0 {
                axis_freqs.push(z.im);
            }
        } else {
            pole_margin = pole_margin.min(-z.re);
        }
    }
    if let Some(z) = worst_rhp {
        return Ok(PositiveRealVerdict::fail(PrFailure::RhpPole { re: z.re, im: z.im }, -z.re));
    }
    if zero_poles > 1 {
        return Ok(PositiveRealVerdict::fail(PrFailure::RepeatedImagPole { omega: 0.0 }, f64::NEG_INFINITY));
    }
    axis_freqs.sort_by(f64::total_cmp);
    for w in axis_freqs.windows(2) {
        if (w[1] - w[0]).abs() <= 1e-6 * (1.0 + w[1]) {
            return Ok(PositiveRealVerdict::fail(PrFailure::RepeatedImagPole { omega: w[0] }, f64::NEG_INFINITY));
        }
    }

    // residues and removal of axis poles
    let s = Poly::monomial(1.0, 1);
    if zero_poles == 1 {
        let r = num.eval(0.0) / den.derivative().eval(0.0);
        if let Some(f) = check_residue(Complex64::new(r, 0.0), 0.0)? {
            return Ok(PositiveRealVerdict::fail(f, f64::NEG_INFINITY));
        }
        let (d1, _) = den.div_rem(&s);
        let rest = &num - &d1.scale(r.max(0.0));
        let (n1, _) = rest.div_rem(&s);
        num = n1;
        den = d1;
    }
    for &w in &axis_freqs {
        let jw = Complex64::new(0.0, w);
        let r = num.eval_complex(jw) / den.derivative().eval_complex(jw);
        if let Some(f) = check_residue(r, w)? {
            return Ok(PositiveRealVerdict::fail(f, f64::NEG_INFINITY));
        }
        let q = Poly::new(vec![w * w, 0.0, 1.0]);
        let (d1, _) = den.div_rem(&q);
        let rest = &num - &(&s * &d1).scale(2.0 * r.re.max(0.0));
        let (n1, _) = rest.div_rem(&q);
        num = n1;
        den = d1;
    }

    if !check_real_part {
        return Ok(PositiveRealVerdict {
            is_pr: true,
            failure: None,
            margin: if pole_margin.is_finite() { pole_margin } else { 0.0 },
            real_part_min: None,
            witness_omega: None,
        });
    }

    let (re_min, witness) = real_part_minimum(&num, &den, h.num.norm_inf())?;
    let scale = remainder_scale(&num, &den, witness);
    let tol = REAL_PART_TOL * scale.max(f64::MIN_POSITIVE);
    if re_min < -tol {
        return Ok(PositiveRealVerdict {
            is_pr: false,
            failure: Some(PrFailure::RealPartNegative {
                omega: witness.unwrap_or(f64::INFINITY),
                value: re_min,
            }),
            margin: re_min,
            real_part_min: Some(re_min),
            witness_omega: witness,
        });
    }
    if re_min < 0.0 {
        return Err(LtiError::Borderline(BorderlineWitness {
            what: "min Re H(jw)".into(),
            value: re_min,
            omega: witness,
        }));
    }
    Ok(PositiveRealVerdict {
        is_pr: true,
        failure: None,
        margin: re_min.min(pole_margin),
        real_part_min: Some(re_min),
        witness_omega: witness,
    })
}

/// `Ok(Some(_))` for a clear violation, `Err(Borderline)` when the residue is
/// negative only within tolerance.
fn check_residue(r: Complex64, omega: f64) -> Result<Option<PrFailure>, LtiError> {
    let failure = PrFailure::NegativeResidue {
        omega,
        residue_re: r.re,
        residue_im: r.im,
    };
    if !r.re.is_finite() || !r.im.is_finite() {
        return Ok(Some(failure));
    }
    if r.im.abs() > 1e-6 * r.norm() + 1e-12 {
        return Ok(Some(failure));
    }
    if r.re < -1e-9 * (1.0 + r.re.abs()) {
        return Ok(Some(failure));
    }
    if r.re < 0.0 {
        return Err(LtiError::Borderline(BorderlineWitness {
            what: "axis residue".into(),
            value: r.re,
            omega: Some(omega),
        }));
    }
    Ok(None)
}

/// Splits `p(jw) = E(w^2) + jw O(w^2)`.
fn even_odd(p: &Poly) -> (Poly, Poly) {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for (k, &c) in p.coeffs().iter().enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            even.push(sign * c);
        } else {
            odd.push(sign * c);
        }
    }
    (Poly::new(even), Poly::new(odd))
}

/// `(P, Q)` with `Re N(jw)/D(jw) = P(w^2) / Q(w^2)`.
pub(crate) fn real_part_polys(num: &Poly, den: &Poly) -> (Poly, Poly) {
    let (ne, no) = even_odd(num);
    let (de, d_o) = even_odd(den);
    let x = Poly::monomial(1.0, 1);
    let p = &(&ne * &de) + &(&x * &(&no * &d_o));
    let q = &(&de * &de) + &(&x * &(&d_o * &d_o));
    (p, q)
}

fn positive_real_roots(p: &Poly) -> Result<Option<Vec<f64>>, LtiError> {
    match p.degree() {
        None | Some(0) => Ok(Some(Vec::new())),
        Some(d) if d > MAX_DEGREE => Ok(None),
        Some(_) => Ok(Some(p.real_roots(1e-7)?.into_iter().filter(|x| *x > 0.0).collect())),
    }
}

/// Minimum of `Re N(jw)/D(jw)` over `w >= 0` and the witness frequency.
fn real_part_minimum(num: &Poly, den: &Poly, original_scale: f64) -> Result<(f64, Option<f64>), LtiError> {
    if num.norm_inf() <= 1e-13 * original_scale {
        return Ok((0.0, Some(0.0)));
    }
    let (p, q) = real_part_polys(num, den);
    if p.is_zero() {
        return Ok((0.0, Some(0.0)));
    }
    let mut xs = vec![0.0];
    let crossings = positive_real_roots(&p)?;
    let critical = positive_real_roots(&(&(&p.derivative() * &q) - &(&p * &q.derivative())))?;
    match (crossings, critical) {
        (Some(roots), Some(crit)) => {
            let mut prev = 0.0;
            for &r in &roots {
                xs.push(0.5 * (prev + r));
                prev = r;
            }
            xs.push(2.0 * prev + 1.0);
            xs.extend(roots);
            xs.extend(crit);
        }
        _ => {
            // degree beyond the root-finder cap: dense logarithmic sampling
            xs.extend((0..=4000).map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / 4000.0)));
        }
    }
    let mut best = (f64::INFINITY, Some(0.0));
    for x in xs {
        let qx = q.eval(x);
        if !(qx > 0.0) {
            continue;
        }
        let v = p.eval(x) / qx;
        if v < best.0 {
            best = (v, Some(x.sqrt()));
        }
    }
    // limit at infinity; zero when Re H decays
    {
        let limit = if p.degree() == q.degree() { p.leading() / q.leading() } else { 0.0 };
        if limit < best.0 {
            best = (limit, None);
        }
    }
    Ok(best)
}

fn remainder_scale(num: &Poly, den: &Poly, witness: Option<f64>) -> f64 {
    let at = |w: f64| {
        let jw = Complex64::new(0.0, w);
        (num.eval_complex(jw) / den.eval_complex(jw)).norm()
    };
    let mut scale = at(0.0);
    if let Some(w) = witness {
        scale = scale.max(at(w));
    }
    if num.degree() == den.degree() {
        scale = scale.max((num.leading() / den.leading()).abs());
    }
    if scale.is_finite() {
        scale
    } else {
        1.0
    }
}
