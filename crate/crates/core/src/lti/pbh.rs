//! Popov-Belevitch-Hautus rank tests.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::Serialize;

/// Relative singular-value threshold below which a PBH matrix is rank deficient.
pub const PBH_RANK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTest {
    pub passed: bool,
    /// Smallest `sigma_min / sigma_max` over all eigenvalues.
    pub margin: f64,
    /// Eigenvalue attaining the margin.
    pub witness: Option<Complex64>,
}

fn run(a: &DMatrix<f64>, build: impl Fn(Complex64) -> DMatrix<Complex64>) -> RankTest {
    let mut margin = f64::INFINITY;
    let mut witness = None;
    for &lambda in a.complex_eigenvalues().iter() {
        let sv = build(lambda).singular_values();
        let max = sv.max();
        let ratio = if max > 0.0 { sv.min() / max } else { 0.0 };
        if ratio < margin {
            margin = ratio;
            witness = Some(lambda);
        }
    }
    RankTest {
        passed: margin > PBH_RANK_TOL,
        margin,
        witness,
    }
}

fn shifted(a: &DMatrix<f64>, lambda: Complex64) -> DMatrix<Complex64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let v = Complex64::new(a[(i, j)], 0.0);
        if i == j {
            v - lambda
        } else {
            v
        }
    })
}

/// `rank [A - lambda I, B] = n` for every eigenvalue `lambda` of `A`.
pub fn pbh_controllable(a: &DMatrix<f64>, b: &DVector<f64>) -> RankTest {
    let n = a.nrows();
    run(a, |lambda| {
        let mut m = DMatrix::zeros(n, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&shifted(a, lambda));
        for i in 0..n {
            m[(i, n)] = Complex64::new(b[i], 0.0);
        }
        m
    })
}

/// `rank [A - lambda I; C] = n` for every eigenvalue `lambda` of `A`.
pub fn pbh_observable(c: &RowDVector<f64>, a: &DMatrix<f64>) -> RankTest {
    let n = a.nrows();
    run(a, |lambda| {
        let mut m = DMatrix::zeros(n + 1, n);
        m.view_mut((0, 0), (n, n)).copy_from(&shifted(a, lambda));
        for j in 0..n {
            m[(n, j)] = Complex64::new(c[j], 0.0);
        }
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_pair_is_controllable() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let r = pbh_controllable(&a, &b);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn decoupled_mode_is_uncontrollable() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let r = pbh_controllable(&a, &b);
        assert!(!r.passed);
        assert!((r.witness.unwrap().re + 2.0).abs() < 1e-12);
    }

    #[test]
    fn observability_by_duality() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let c = RowDVector::from_vec(vec![0.0, 1.0]);
        let obs = pbh_observable(&c, &a);
        let ctrl = pbh_controllable(&a.transpose(), &c.transpose());
        assert_eq!(obs.passed, ctrl.passed);
        assert!((obs.margin - ctrl.margin).abs() < 1e-12);
        assert!(!obs.passed);
    }

    #[test]
    fn repeated_eigenvalue_needs_two_inputs() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(!pbh_controllable(&a, &b).passed);
        let jordan = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let b2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(pbh_controllable(&jordan, &b2).passed);
    }
}
