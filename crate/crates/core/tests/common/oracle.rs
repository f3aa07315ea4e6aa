//! Reference implementations used to cross-check the library: a Routh
//! array, a dense frequency sweep and random problem generators.

#![allow(dead_code)]

use gridcert::poly::Poly;
use num_complex::Complex64;
use rand::Rng;

/// Strict Hurwitz test of a real polynomial (ascending coefficients) from
/// the first column of its Routh array. A zero pivot counts as not Hurwitz.
pub fn routh_hurwitz(ascending: &[f64]) -> bool {
    let mut c: Vec<f64> = ascending.iter().rev().copied().collect();
    while c.first() == Some(&0.0) {
        c.remove(0);
    }
    let n = c.len();
    if n <= 1 {
        return n == 1;
    }
    let sign = c[0].signum();
    let mut prev: Vec<f64> = c.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = c.iter().skip(1).step_by(2).copied().collect();
    let scale = c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    for _ in 1..n {
        let pivot = cur.first().copied().unwrap_or(0.0);
        if pivot.abs() <= 1e-13 * scale || pivot.signum() != sign {
            return false;
        }
        let next: Vec<f64> = (0..prev.len().saturating_sub(1))
            .map(|k| {
                let b = cur.get(k + 1).copied().unwrap_or(0.0);
                (pivot * prev[k + 1] - prev[0] * b) / pivot
            })
            .collect();
        prev = cur;
        cur = next;
    }
    true
}

/// `min Re H(jw)` over `w = 0`, `points` log-spaced frequencies in
/// `[1e-4, 1e4]` and the limit at infinity (ignoring a pure `c s` term).
pub fn sweep_min_real_part(num: &Poly, den: &Poly, points: usize) -> f64 {
    let re = |w: f64| {
        let s = Complex64::new(0.0, w);
        (num.eval_complex(s) / den.eval_complex(s)).re
    };
    let mut best = re(0.0);
    for i in 0..points {
        let w = 10f64.powf(-4.0 + 8.0 * i as f64 / (points - 1) as f64);
        best = best.min(re(w));
    }
    let (dn, dd) = (num.degree().unwrap_or(0), den.degree().unwrap_or(0));
    let at_infinity = if dn == dd {
        num.leading() / den.leading()
    } else if dn == dd + 1 {
        // H = q1 s + q0 + O(1/s); q0 is the real part at infinity
        let q1 = num.leading() / den.leading();
        let below = if dd == 0 { 0.0 } else { den.coeff(dd - 1) };
        (num.coeff(dd) - q1 * below) / den.leading()
    } else {
        0.0
    };
    best.min(at_infinity)
}

/// Positive realness for functions without imaginary-axis poles.
pub fn oracle_is_pr(num: &Poly, den: &Poly, points: usize) -> bool {
    let (dn, dd) = (num.degree().unwrap_or(0), den.degree().unwrap_or(0));
    if dn > dd + 1 || (dn == dd + 1 && num.leading() / den.leading() <= 0.0) {
        return false;
    }
    routh_hurwitz(den.coeffs()) && sweep_min_real_part(num, den, points) >= 0.0
}

fn random_roots<R: Rng>(rng: &mut R, degree: usize, re: (f64, f64)) -> Vec<Complex64> {
    let mut roots = Vec::with_capacity(degree);
    while roots.len() < degree {
        let r = rng.random_range(re.0..re.1);
        if roots.len() + 2 <= degree && rng.random_bool(0.5) {
            let im = rng.random_range(0.1..5.0);
            roots.push(Complex64::new(r, im));
            roots.push(Complex64::new(r, -im));
        } else {
            roots.push(Complex64::new(r, 0.0));
        }
    }
    roots
}

/// A random rational function of denominator degree at most 8 with no
/// imaginary-axis poles. Half are sums of positive-real terms (with a
/// random, possibly negative, feedthrough), half have random zeros.
pub fn random_transfer<R: Rng>(rng: &mut R) -> (Poly, Poly) {
    if rng.random_bool(0.5) {
        let mut num = Poly::constant(rng.random_range(-0.05..1.0));
        let mut den = Poly::constant(1.0);
        let mut degree = 0;
        while degree < 8 {
            let (n, d) = if degree + 2 <= 8 && rng.random_bool(0.5) {
                let w: f64 = rng.random_range(0.2..5.0);
                let zeta: f64 = rng.random_range(0.05..1.0);
                let b: f64 = rng.random_range(0.1..2.0);
                let e = rng.random_range(0.0..2.0 * zeta * w * b);
                (Poly::new(vec![e, b]), Poly::new(vec![w * w, 2.0 * zeta * w, 1.0]))
            } else {
                let a: f64 = rng.random_range(0.1..5.0);
                (Poly::constant(rng.random_range(0.1..3.0)), Poly::new(vec![a, 1.0]))
            };
            degree += d.degree().unwrap();
            num = &(&num * &d) + &(&n * &den);
            den = &den * &d;
            if rng.random_bool(0.3) {
                break;
            }
        }
        (num, den)
    } else {
        let dd = rng.random_range(1..=8);
        let dn = rng.random_range(0..=(dd + 1).min(8));
        let den = Poly::from_roots(&random_roots(rng, dd, (-5.0, 1.0)));
        let gain = if rng.random_bool(0.8) { 1.0 } else { -1.0 } * rng.random_range(0.1..5.0);
        let num = Poly::from_roots(&random_roots(rng, dn, (-5.0, 2.0))).scale(gain);
        (num, den)
    }
}

/// Random connected graph on `n` nodes: a random spanning tree plus extra
/// edges, with susceptance magnitudes in `[0.2, 5]`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize, f64)> {
    let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (rng.random_range(0..i), i, rng.random_range(0.2..5.0))).collect();
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let key = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|e| (e.0.min(e.1), e.0.max(e.1)) == key) {
            edges.push((a, b, rng.random_range(0.2..5.0)));
        }
    }
    edges
}

/// Random tree on `n` nodes.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize, f64)> {
    (1..n).map(|i| (rng.random_range(0..i), i, rng.random_range(0.5..5.0))).collect()
}
