//! SISO linear-systems toolbox: realizations, rational transfer functions,
//! the Popov-multiplied bus transfer function and its positive-realness test.

mod pbh;
mod positive_real;

pub use pbh::{pbh_controllable, pbh_observable, RankTest};
pub use positive_real::{is_positive_real, positive_real_poles_only, PositiveRealVerdict, PrFailure};

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::BusParams;
use crate::poly::{Poly, PolyError, MAX_DEGREE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtiError {
    #[error("bus {bus} is a load bus and has no generation dynamics")]
    NotAGenerator { bus: String },
    #[error("bus {bus}: {kind} dynamics have no exact linear realization")]
    UnsupportedDynamics { bus: String, kind: String },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("denominator polynomial is identically zero")]
    ZeroDenominator,
    #[error("{name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("-1/rho = {pole} is a pole of G")]
    PolePlacementConflict { pole: f64 },
    #[error("internal dynamics matrix A is singular")]
    SingularInternalDynamics,
    #[error("borderline positive-realness verdict: {0}")]
    Borderline(BorderlineWitness),
}

/// Quantity that sat within tolerance of its decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderlineWitness {
    pub what: String,
    pub value: f64,
    pub omega: Option<f64>,
}

impl std::fmt::Display for BorderlineWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} = {:e}", self.what, self.value)?;
        if let Some(w) = self.omega {
            write!(f, " at omega = {w}")?;
        }
        Ok(())
    }
}

/// `x' = A x + B v`, `y = C x + D v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Self {
        StateSpace { a, b, c, d }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `(det(sI - A), C adj(sI - A) B)` via Faddeev-LeVerrier.
    pub fn characteristic_and_numerator(&self) -> (Poly, Poly) {
        let n = self.order();
        let mut char_coeffs = vec![0.0; n + 1];
        char_coeffs[n] = 1.0;
        let mut num_coeffs = vec![0.0; n.max(1)];
        let mut mk = DMatrix::<f64>::zeros(n, n);
        let id = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            mk = &self.a * &mk + &id * char_coeffs[n - k + 1];
            // adj(sI - A) = sum_k M_k s^(n-k)
            num_coeffs[n - k] = (&self.c * &mk * &self.b)[(0, 0)];
            char_coeffs[n - k] = -(&self.a * &mk).trace() / k as f64;
        }
        (Poly::new(char_coeffs), Poly::new(num_coeffs))
    }

    /// Transfer function `C (sI - A)^-1 B + D`.
    pub fn transfer(&self) -> RationalTransfer {
        let (a, b) = self.characteristic_and_numerator();
        RationalTransfer {
            num: &b + &a.scale(self.d),
            den: a,
        }
    }
}

/// Ratio of real polynomials with ascending coefficients. Common factors are
/// kept unless [`RationalTransfer::minimal_form`] is called explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTransfer {
    pub num: Poly,
    pub den: Poly,
}

impl RationalTransfer {
    pub fn new(num: Poly, den: Poly) -> Result<Self, LtiError> {
        if den.is_zero() {
            return Err(LtiError::ZeroDenominator);
        }
        Ok(RationalTransfer { num, den })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, LtiError> {
        RationalTransfer::new(Poly::new(num.to_vec()), Poly::new(den.to_vec()))
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) / self.den.eval_complex(s)
    }

    pub fn at_frequency(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn poles(&self) -> Result<Vec<Complex64>, LtiError> {
        Ok(self.den.roots()?)
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>, LtiError> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        Ok(self.num.roots()?)
    }

    /// Same function with a monic denominator.
    pub fn normalized(&self) -> RationalTransfer {
        let lead = self.den.leading();
        RationalTransfer {
            num: self.num.scale(1.0 / lead),
            den: self.den.scale(1.0 / lead),
        }
    }

    /// Pole/zero pairs closer than `tol * (1 + |z|)`.
    pub fn common_roots(&self, tol: f64) -> Result<Vec<Complex64>, LtiError> {
        Ok(match_roots(&self.zeros()?, &self.poles()?, tol).0)
    }

    /// Cancels pole/zero pairs closer than `tol * (1 + |z|)` and returns the
    /// reduced function together with the cancelled roots.
    pub fn minimal_form(&self, tol: f64) -> Result<(RationalTransfer, Vec<Complex64>), LtiError> {
        let zeros = self.zeros()?;
        let poles = self.poles()?;
        let (cancelled, kept_zeros, kept_poles) = match_roots(&zeros, &poles, tol);
        if cancelled.is_empty() {
            return Ok((self.clone(), cancelled));
        }
        let gain = self.num.leading() / self.den.leading();
        let num = Poly::from_roots(&kept_zeros).scale(gain);
        let den = Poly::from_roots(&kept_poles);
        Ok((RationalTransfer { num, den }, cancelled))
    }
}

/// Greedy nearest matching of zeros to poles. Returns
/// `(matched, unmatched zeros, unmatched poles)`.
fn match_roots(zeros: &[Complex64], poles: &[Complex64], tol: f64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let mut pole_used = vec![false; poles.len()];
    let mut matched = Vec::new();
    let mut kept_zeros = Vec::new();
    for z in zeros {
        let best = poles
            .iter()
            .enumerate()
            .filter(|(k, _)| !pole_used[*k])
            .map(|(k, p)| (k, (p - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((k, d)) if d <= tol * (1.0 + z.norm()) => {
                pole_used[k] = true;
                matched.push(*z);
            }
            _ => kept_zeros.push(*z),
        }
    }
    let kept_poles = poles
        .iter()
        .zip(&pole_used)
        .filter(|(_, u)| !**u)
        .map(|(p, _)| *p)
        .collect();
    (matched, kept_zeros, kept_poles)
}

fn linear_part(bus: &BusParams) -> Result<(f64, f64, StateSpace), LtiError> {
    let g = bus.generator.as_ref().ok_or_else(|| LtiError::NotAGenerator {
        bus: bus.label.clone(),
    })?;
    let ss = g.dynamics.linear_realization().ok_or_else(|| LtiError::UnsupportedDynamics {
        bus: bus.label.clone(),
        kind: g.dynamics.kind_name().to_string(),
    })?;
    Ok((g.inertia, g.damping, ss))
}

/// `G(s) = 1 / (M s + D + C (sI - A)^-1 B + D_feed)`, the map from net
/// injected power to bus frequency.
pub fn transfer_g(inertia: f64, damping: f64, ss: &StateSpace) -> RationalTransfer {
    let (a, b) = ss.characteristic_and_numerator();
    let swing = Poly::new(vec![damping + ss.d, inertia]);
    RationalTransfer {
        den: &(&a * &swing) + &b,
        num: a,
    }
}

/// [`transfer_g`] for a generator bus whose dynamics admit an exact linear
/// realization.
pub fn bus_transfer_g(bus: &BusParams) -> Result<RationalTransfer, LtiError> {
    let (m, d, ss) = linear_part(bus)?;
    Ok(transfer_g(m, d, &ss))
}

/// `H(s) = 1/sigma + (1 + rho s) G(s) / s` over the common denominator
/// `s den_G(s)`. `sigma = +inf` drops the feedthrough.
pub fn popov_transform(g: &RationalTransfer, sigma: f64, rho: f64) -> Result<RationalTransfer, LtiError> {
    if !(sigma > 0.0) {
        return Err(LtiError::InvalidParameter { name: "sigma", value: sigma });
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(LtiError::InvalidParameter { name: "rho", value: rho });
    }
    let p = -1.0 / rho;
    let scale: f64 = g
        .den
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * p.abs().powi(k as i32))
        .sum();
    if g.den.eval(p).abs() <= 1e-9 * scale {
        return Err(LtiError::PolePlacementConflict { pole: p });
    }
    let s = Poly::monomial(1.0, 1);
    let den = &s * &g.den;
    let multiplier = Poly::new(vec![1.0, rho]);
    let mut num = &multiplier * &g.num;
    if sigma.is_finite() {
        num = &num + &den.scale(1.0 / sigma);
    }
    RationalTransfer::new(num, den)
}

/// State-space realization of `H(s)` with state `(theta, omega, xi)`.
pub fn popov_realization(inertia: f64, damping: f64, ss: &StateSpace, rho: f64, sigma: f64) -> StateSpace {
    let n = ss.order();
    let dim = n + 2;
    let mut a = DMatrix::zeros(dim, dim);
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -(damping + ss.d) / inertia;
    for j in 0..n {
        a[(1, 2 + j)] = ss.c[j] / inertia;
        a[(2 + j, 1)] = -ss.b[j];
        for k in 0..n {
            a[(2 + j, 2 + k)] = ss.a[(j, k)];
        }
    }
    let mut b = DVector::zeros(dim);
    b[1] = 1.0 / inertia;
    let mut c = RowDVector::zeros(dim);
    c[0] = 1.0;
    c[1] = rho;
    let d = if sigma.is_finite() { 1.0 / sigma } else { 0.0 };
    StateSpace::new(a, b, c, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption3Report {
    pub ok: bool,
    /// Eigenvalues of `[[-D/M, C/M], [-B, A]]`.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues classified as purely imaginary.
    pub imaginary_eigenvalues: Vec<Complex64>,
    /// `-C A^-1 B + D`.
    pub dc_gain: f64,
}

/// Checks that the isolated bus has no purely imaginary modes and a positive
/// steady-state gain `-C A^-1 B + D`.
pub fn assumption3(inertia: f64, damping: f64, ss: &StateSpace) -> Result<Assumption3Report, LtiError> {
    let n = ss.order();
    let dc_internal = if n == 0 {
        ss.d
    } else {
        let x = ss.a.clone().lu().solve(&ss.b).ok_or(LtiError::SingularInternalDynamics)?;
        -(&ss.c * x)[(0, 0)] + ss.d
    };
    let full = &popov_realization(inertia, damping, ss, 1.0, f64::INFINITY).a;
    // drop the angle state: the remaining block is [[-D/M, C/M], [-B, A]]
    let block = full.view((1, 1), (n + 1, n + 1)).into_owned();
    let eigenvalues: Vec<Complex64> = block.complex_eigenvalues().iter().copied().collect();
    let imaginary_eigenvalues: Vec<Complex64> = eigenvalues
        .iter()
        .copied()
        .filter(|z| z.re.abs() < 1e-9 * (1.0 + z.norm()) && z.im.abs() > 1e-9 * (1.0 + z.norm()))
        .collect();
    let dc_gain = dc_internal + damping;
    Ok(Assumption3Report {
        ok: imaginary_eigenvalues.is_empty() && dc_gain > 0.0,
        eigenvalues,
        imaginary_eigenvalues,
        dc_gain,
    })
}

/// [`assumption3`] for a generator bus.
pub fn assumption3_check(bus: &BusParams) -> Result<Assumption3Report, LtiError> {
    let (m, d, ss) = linear_part(bus)?;
    assumption3(m, d, &ss)
}

pub(crate) fn check_degree(h: &RationalTransfer) -> Result<(), LtiError> {
    for p in [&h.num, &h.den] {
        if let Some(d) = p.degree() {
            if d > MAX_DEGREE {
                return Err(PolyError::DegreeTooLarge { degree: d, cap: MAX_DEGREE }.into());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{GenerationDynamics, ScalarMap};

    fn ss1(a: f64, b: f64, c: f64) -> StateSpace {
        StateSpace::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            RowDVector::from_element(1, c),
            0.0,
        )
    }

    fn assert_poly(p: &Poly, expected: &[f64]) {
        assert_eq!(p.coeffs().len(), expected.len(), "{p} vs {expected:?}");
        for (a, b) in p.coeffs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{p} vs {expected:?}");
        }
    }

    #[test]
    fn g_without_internal_dynamics() {
        let g = transfer_g(2.0, 3.0, &ss1(-1.0, 1.0, 0.0));
        // (s + 1) / ((s + 1)(2 s + 3))
        let (gmin, cancelled) = g.minimal_form(1e-8).unwrap();
        assert_eq!(cancelled.len(), 1);
        let n = gmin.normalized();
        assert_poly(&n.num, &[0.5]);
        assert_poly(&n.den, &[1.5, 1.0]);
    }

    #[test]
    fn g_first_order_feedback() {
        // hand expansion: (s + 1) / ((s + 1)^2 + 1)
        let g = transfer_g(1.0, 1.0, &ss1(-1.0, 1.0, 1.0));
        assert_poly(&g.num, &[1.0, 1.0]);
        assert_poly(&g.den, &[2.0, 2.0, 1.0]);
    }

    #[test]
    fn g_dc_value_for_second_order_droop() {
        let dynamics = GenerationDynamics::SecondOrder {
            tau_alpha: 0.5,
            tau_beta: 1.0,
            cost_gradient: ScalarMap::Linear { gain: 1.0 },
            input_map: ScalarMap::Linear { gain: 7.0 },
            output_map: None,
        };
        let bus = BusParams::generator("area2", 3.98, 1.22, 0.0, dynamics);
        let g = bus_transfer_g(&bus).unwrap();
        assert_eq!(g.den.degree(), Some(3));
        let g0 = g.eval(Complex64::new(0.0, 0.0));
        assert!((g0.re - 1.0 / 8.22).abs() < 1e-14 && g0.im == 0.0);
    }

    #[test]
    fn load_and_nonlinear_buses_rejected() {
        assert!(matches!(
            bus_transfer_g(&BusParams::load("l", 0.1)),
            Err(LtiError::NotAGenerator { .. })
        ));
        let nl = BusParams::generator("g", 1.0, 1.0, 0.0, GenerationDynamics::FirstOrder {
            tau: 1.0,
            map: ScalarMap::Deadband { gain: 1.0, width: 0.1 },
        });
        assert!(matches!(bus_transfer_g(&nl), Err(LtiError::UnsupportedDynamics { .. })));
    }

    #[test]
    fn popov_transform_first_order() {
        let g = RationalTransfer::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let h = popov_transform(&g, 1.0, 2.0).unwrap();
        assert_poly(&h.num, &[1.0, 3.0, 1.0]);
        assert_poly(&h.den, &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn popov_transform_without_feedthrough() {
        let g = RationalTransfer::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let h = popov_transform(&g, f64::INFINITY, 2.0).unwrap();
        assert_poly(&h.num, &[1.0, 2.0]);
        assert_poly(&h.den, &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn popov_pole_conflict() {
        let g = RationalTransfer::from_coeffs(&[1.0], &[2.0, 1.0]).unwrap();
        assert!(matches!(
            popov_transform(&g, 1.0, 0.5),
            Err(LtiError::PolePlacementConflict { .. })
        ));
        assert!(matches!(popov_transform(&g, 0.0, 0.5), Err(LtiError::InvalidParameter { .. })));
    }

    #[test]
    fn popov_realization_matches_transfer() {
        let ss = ss1(-2.0, 3.0, 1.5);
        let g = transfer_g(2.0, 0.7, &ss);
        let h = popov_transform(&g, 4.0, 0.8).unwrap();
        let real = popov_realization(2.0, 0.7, &ss, 0.8, 4.0).transfer();
        for w in [0.01, 0.3, 1.0, 7.0, 100.0] {
            let s = Complex64::new(0.0, w);
            let (a, b) = (h.eval(s), real.eval(s));
            assert!((a - b).norm() <= 1e-10 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn assumption3_examples() {
        let rep = assumption3(1.0, 1.0, &ss1(-1.0, 1.0, 0.0)).unwrap();
        assert!(rep.ok);
        for z in &rep.eigenvalues {
            assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-7);
        }
        assert!((rep.dc_gain - 1.0).abs() < 1e-15);
        assert!(matches!(
            assumption3(1.0, 1.0, &ss1(0.0, 1.0, 1.0)),
            Err(LtiError::SingularInternalDynamics)
        ));
    }

    #[test]
    fn assumption3_flags_imaginary_modes() {
        // M w' = -D w + x, x' = -w  with D -> 0 is a lossless oscillator;
        // here A = -1e-30 keeps A invertible and B = 1 gives eigenvalues near +-i.
        let rep = assumption3(1.0, 1e-300, &ss1(-1e-300, 1.0, 1.0)).unwrap();
        assert!(!rep.imaginary_eigenvalues.is_empty());
        assert!(!rep.ok);
    }

    #[test]
    fn minimal_form_records_cancellations() {
        // (s + 2)(s + 3) / ((s + 2)(s + 1))
        let h = RationalTransfer::from_coeffs(&[6.0, 5.0, 1.0], &[2.0, 3.0, 1.0]).unwrap();
        let (m, c) = h.minimal_form(1e-8).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].re + 2.0).abs() < 1e-10);
        assert_eq!(m.den.degree(), Some(1));
        assert_eq!(h.common_roots(1e-8).unwrap().len(), 1);
    }
}
