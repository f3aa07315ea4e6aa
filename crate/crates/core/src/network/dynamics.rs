//! Generator-side dynamics `xi' = f(xi, -omega)`, `u = h(xi, -omega)`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use super::maps::ScalarMap;
use crate::lti::{self, StateSpace};

/// Linear block `xi' = A xi - B omega`, `u = C xi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSs {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

impl LinearSs {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Self {
        LinearSs { a, b, c }
    }

    /// `-C A^-1 B`, the steady-state gain from `-omega` to `u`.
    pub fn dc_gain(&self) -> Option<f64> {
        let x = self.a.clone().lu().solve(&self.b)?;
        Some(-(&self.c * x)[(0, 0)])
    }

    pub fn as_state_space(&self) -> StateSpace {
        StateSpace::new(self.a.clone(), self.b.clone(), self.c.clone(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GenerationDynamics {
    /// `u = k(-omega)`
    StaticMonotone { map: ScalarMap },
    /// `tau xi' = -xi + k(-omega)`, `u = xi`
    FirstOrder { tau: f64, map: ScalarMap },
    /// `tau_a a' = -grad_c(a) + k(-omega)`, `tau_b b' = -b + a`, `u = h(b)`
    SecondOrder {
        tau_alpha: f64,
        tau_beta: f64,
        cost_gradient: ScalarMap,
        input_map: ScalarMap,
        output_map: Option<ScalarMap>,
    },
    LinearSs(LinearSs),
}

impl GenerationDynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            GenerationDynamics::StaticMonotone { .. } => 0,
            GenerationDynamics::FirstOrder { .. } => 1,
            GenerationDynamics::SecondOrder { .. } => 2,
            GenerationDynamics::LinearSs(ss) => ss.a.nrows(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GenerationDynamics::StaticMonotone { .. } => "static_monotone",
            GenerationDynamics::FirstOrder { .. } => "first_order",
            GenerationDynamics::SecondOrder { .. } => "second_order",
            GenerationDynamics::LinearSs(_) => "linear_ss",
        }
    }

    /// Writes `xi'` for input `v = -omega` into `out`.
    pub fn derivative(&self, xi: &[f64], v: f64, out: &mut [f64]) {
        match self {
            GenerationDynamics::StaticMonotone { .. } => {}
            GenerationDynamics::FirstOrder { tau, map } => {
                out[0] = (-xi[0] + map.eval(v)) / tau;
            }
            GenerationDynamics::SecondOrder {
                tau_alpha,
                tau_beta,
                cost_gradient,
                input_map,
                ..
            } => {
                out[0] = (-cost_gradient.eval(xi[0]) + input_map.eval(v)) / tau_alpha;
                out[1] = (-xi[1] + xi[0]) / tau_beta;
            }
            GenerationDynamics::LinearSs(ss) => {
                let n = ss.a.nrows();
                for i in 0..n {
                    let mut acc = ss.b[i] * v;
                    for j in 0..n {
                        acc += ss.a[(i, j)] * xi[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Generated power `u` for state `xi` and input `v = -omega`.
    pub fn output(&self, xi: &[f64], v: f64) -> f64 {
        match self {
            GenerationDynamics::StaticMonotone { map } => map.eval(v),
            GenerationDynamics::FirstOrder { .. } => xi[0],
            GenerationDynamics::SecondOrder { output_map, .. } => match output_map {
                Some(h) => h.eval(xi[1]),
                None => xi[1],
            },
            GenerationDynamics::LinearSs(ss) => ss.c.iter().zip(xi).map(|(c, x)| c * x).sum(),
        }
    }

    /// Equilibrium `(xi_bar, u_bar)` under constant frequency `omega`.
    ///
    /// Returns `None` when the steady state is not unique (singular `A` or a
    /// cost gradient that is not strongly monotone).
    pub fn steady_state(&self, omega: f64) -> Option<(Vec<f64>, f64)> {
        let v = -omega;
        match self {
            GenerationDynamics::StaticMonotone { map } => Some((Vec::new(), map.eval(v))),
            GenerationDynamics::FirstOrder { map, .. } => {
                let xi = map.eval(v);
                Some((vec![xi], xi))
            }
            GenerationDynamics::SecondOrder {
                cost_gradient,
                input_map,
                output_map,
                ..
            } => {
                let alpha = cost_gradient.inverse(input_map.eval(v))?;
                let u = output_map.as_ref().map_or(alpha, |h| h.eval(alpha));
                Some((vec![alpha, alpha], u))
            }
            GenerationDynamics::LinearSs(ss) => {
                // 0 = A xi + B v
                let xi = ss.a.clone().lu().solve(&(&ss.b * (-v)))?;
                let u = (&ss.c * &xi)[(0, 0)];
                Some((xi.iter().copied().collect(), u))
            }
        }
    }

    /// Steady-state droop: slope of `u_bar` with respect to `-omega` at the
    /// origin for linear blocks, or the gain of the input map otherwise.
    pub fn droop_gain(&self) -> f64 {
        match self {
            GenerationDynamics::StaticMonotone { map } | GenerationDynamics::FirstOrder { map, .. } => map.gain(),
            GenerationDynamics::SecondOrder { input_map, .. } => input_map.gain(),
            GenerationDynamics::LinearSs(ss) => ss.dc_gain().unwrap_or(f64::NAN),
        }
    }

    /// Same block with its droop gain replaced by `k`. For `LinearSs` the
    /// input matrix is rescaled so that `-C A^-1 B = k`.
    pub fn with_droop_gain(&self, k: f64) -> GenerationDynamics {
        match self {
            GenerationDynamics::StaticMonotone { map } => GenerationDynamics::StaticMonotone {
                map: map.with_gain(k),
            },
            GenerationDynamics::FirstOrder { tau, map } => GenerationDynamics::FirstOrder {
                tau: *tau,
                map: map.with_gain(k),
            },
            GenerationDynamics::SecondOrder {
                tau_alpha,
                tau_beta,
                cost_gradient,
                input_map,
                output_map,
            } => GenerationDynamics::SecondOrder {
                tau_alpha: *tau_alpha,
                tau_beta: *tau_beta,
                cost_gradient: cost_gradient.clone(),
                input_map: input_map.with_gain(k),
                output_map: output_map.clone(),
            },
            GenerationDynamics::LinearSs(ss) => {
                let current = ss.dc_gain().unwrap_or(f64::NAN);
                let mut out = ss.clone();
                out.b *= k / current;
                GenerationDynamics::LinearSs(out)
            }
        }
    }

    /// Exact linear realization of the map `-omega -> u`, when every
    /// nonlinearity in the block is linear.
    pub fn linear_realization(&self) -> Option<StateSpace> {
        match self {
            GenerationDynamics::StaticMonotone { map } => {
                let g = map.linear_gain()?;
                Some(StateSpace::new(
                    DMatrix::zeros(0, 0),
                    DVector::zeros(0),
                    RowDVector::zeros(0),
                    g,
                ))
            }
            GenerationDynamics::FirstOrder { tau, map } => {
                let g = map.linear_gain()?;
                Some(StateSpace::new(
                    DMatrix::from_element(1, 1, -1.0 / tau),
                    DVector::from_element(1, g / tau),
                    RowDVector::from_element(1, 1.0),
                    0.0,
                ))
            }
            GenerationDynamics::SecondOrder {
                tau_alpha,
                tau_beta,
                cost_gradient,
                input_map,
                output_map,
            } => {
                let c = cost_gradient.linear_gain()?;
                let k = input_map.linear_gain()?;
                let h = match output_map {
                    Some(m) => m.linear_gain()?,
                    None => 1.0,
                };
                Some(StateSpace::new(
                    DMatrix::from_row_slice(
                        2,
                        2,
                        &[-c / tau_alpha, 0.0, 1.0 / tau_beta, -1.0 / tau_beta],
                    ),
                    DVector::from_column_slice(&[k / tau_alpha, 0.0]),
                    RowDVector::from_row_slice(&[0.0, h]),
                    0.0,
                ))
            }
            GenerationDynamics::LinearSs(ss) => Some(ss.as_state_space()),
        }
    }

    /// Checks the parameter invariants of the block.
    pub fn validate(&self) -> Result<(), String> {
        let tau_ok = |name: &str, t: f64| {
            if t.is_finite() && t > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {t}"))
            }
        };
        match self {
            GenerationDynamics::StaticMonotone { map } => {
                map.validate()?;
                finite_slope(map, "droop map")
            }
            GenerationDynamics::FirstOrder { tau, map } => {
                tau_ok("tau", *tau)?;
                map.validate()?;
                finite_slope(map, "droop map")
            }
            GenerationDynamics::SecondOrder {
                tau_alpha,
                tau_beta,
                cost_gradient,
                input_map,
                output_map,
            } => {
                tau_ok("tau_alpha", *tau_alpha)?;
                tau_ok("tau_beta", *tau_beta)?;
                cost_gradient.validate()?;
                if !(cost_gradient.min_slope() > 0.0) {
                    return Err("cost gradient must be strongly monotone (convexity modulus > 0)".into());
                }
                input_map.validate()?;
                finite_slope(input_map, "input map")?;
                if let Some(h) = output_map {
                    h.validate()?;
                    finite_slope(h, "output map")?;
                }
                Ok(())
            }
            GenerationDynamics::LinearSs(ss) => validate_linear(ss),
        }
    }
}

fn finite_slope(map: &ScalarMap, what: &str) -> Result<(), String> {
    if map.max_slope().is_finite() {
        Ok(())
    } else {
        Err(format!("{what} needs a finite slope bound"))
    }
}

fn validate_linear(ss: &LinearSs) -> Result<(), String> {
    let n = ss.a.nrows();
    if n == 0 || ss.a.ncols() != n || ss.b.len() != n || ss.c.len() != n {
        return Err(format!(
            "inconsistent dimensions: A {}x{}, B {}, C {}",
            ss.a.nrows(),
            ss.a.ncols(),
            ss.b.len(),
            ss.c.len()
        ));
    }
    if ss.a.iter().chain(ss.b.iter()).chain(ss.c.iter()).any(|v| !v.is_finite()) {
        return Err("non-finite matrix entry".into());
    }
    if ss.b.iter().all(|v| *v == 0.0) {
        return Err("B must be nonzero".into());
    }
    if ss.c.iter().all(|v| *v == 0.0) {
        return Err("C must be nonzero".into());
    }
    let sv = ss.a.clone().singular_values();
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax.max(1.0)) {
        return Err("A must be invertible".into());
    }
    if !lti::pbh_controllable(&ss.a, &ss.b).passed {
        return Err("(A, B) is not controllable".into());
    }
    if !lti::pbh_observable(&ss.c, &ss.a).passed {
        return Err("(C, A) is not observable".into());
    }
    Ok(())
}
