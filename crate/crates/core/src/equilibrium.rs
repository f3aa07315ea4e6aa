//! Synchronous solutions: common frequency, steady internal states and
//! equilibrium angles.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ModelError, NetworkModel};

/// Default distance kept from `|eta| = pi/2`.
pub const SECURITY_MARGIN: f64 = 1e-6;
/// Newton termination threshold on the infinity norm of the mismatch.
pub const POWER_FLOW_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 100;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bus {bus}: generation dynamics are not linear")]
    NotLinear { bus: String },
    #[error("sum of steady-state droops is {sum}, must be positive")]
    DegenerateDroop { sum: f64 },
    #[error("bus {bus}: steady state of the generation block is not unique")]
    SteadyStateUndefined { bus: String },
    #[error("power-flow right-hand side does not sum to zero (sum = {sum:e})")]
    UnbalancedRhs { sum: f64 },
    #[error("power flow infeasible: {reason} (mismatch {mismatch:e} after {iterations} iterations)")]
    InfeasiblePowerFlow {
        reason: String,
        last_theta: Vec<f64>,
        mismatch: f64,
        iterations: usize,
    },
    #[error("no sign change of the frequency balance in [{lo}, {hi}]")]
    NoSynchronousSolution { lo: f64, hi: f64 },
    #[error("closed-form test requires a tree ({lines} lines for {buses} buses)")]
    TreeRequired { lines: usize, buses: usize },
}

/// Synchronous frequency of an all-linear network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncFrequency {
    /// `1^T p* / sum_i (D_i - C_i A_i^-1 B_i)`.
    pub omega_star: f64,
    /// `1^T p* / sum_i (D_i - C_i A_i^-1 B_i)^-1`, the alternative closed form.
    pub alternative_formula: f64,
    /// True when the two expressions differ.
    pub formulas_disagree: bool,
    /// Residual of the bus-summed steady-state equations at `omega_star`.
    pub summed_residual: f64,
    /// `D_i - C_i A_i^-1 B_i` per bus (zero for loads).
    pub droops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowSolution {
    /// Absolute angles with the reference entry fixed to 0.
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Infinity norm of `R Gamma sin(R^T theta) - c`.
    pub mismatch: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronousSolution {
    pub omega_star: f64,
    /// `theta_bar` with `theta_bar[0] = 0`.
    pub theta_bar: Vec<f64>,
    /// Angles relative to the reference bus (`theta_bar[1..]`).
    pub phi_bar: Vec<f64>,
    /// Steady internal state per bus (empty for loads and static blocks).
    pub xi_bar: Vec<Vec<f64>>,
    /// Steady generation per bus (zero for loads).
    pub u_bar: Vec<f64>,
    pub eta_bar: Vec<f64>,
    /// Infinity norm of the full right-hand side at the solution.
    pub residual_norm: f64,
    pub security_ok: bool,
    pub newton_iterations: usize,
    pub notes: Vec<String>,
}

impl SynchronousSolution {
    /// Concatenated internal states.
    pub fn xi_flat(&self) -> Vec<f64> {
        self.xi_bar.iter().flatten().copied().collect()
    }
}

/// True iff `max |eta_k| <= pi/2 - margin`.
pub fn security_check(eta: &[f64], margin: f64) -> bool {
    eta.iter().all(|e| e.abs() <= FRAC_PI_2 - margin)
}

/// Steady-state droop `D_i - C_i A_i^-1 B_i` per bus.
fn linear_droops(model: &NetworkModel) -> Result<Vec<f64>, EquilibriumError> {
    model
        .buses()
        .iter()
        .map(|bus| {
            let Some(g) = &bus.generator else { return Ok(0.0) };
            let ss = g
                .dynamics
                .linear_realization()
                .ok_or_else(|| EquilibriumError::NotLinear { bus: bus.label.clone() })?;
            let dc = if ss.order() == 0 {
                ss.d
            } else {
                let x = ss
                    .a
                    .clone()
                    .lu()
                    .solve(&ss.b)
                    .ok_or_else(|| EquilibriumError::SteadyStateUndefined { bus: bus.label.clone() })?;
                -(&ss.c * x)[(0, 0)] + ss.d
            };
            Ok(g.damping + dc)
        })
        .collect()
}

pub fn solve_sync_frequency_linear(model: &NetworkModel) -> Result<SyncFrequency, EquilibriumError> {
    let droops = linear_droops(model)?;
    let total: f64 = droops.iter().sum();
    if !(total > 0.0) {
        return Err(EquilibriumError::DegenerateDroop { sum: total });
    }
    let net: f64 = model.buses().iter().map(|b| b.p_star).sum();
    let omega_star = net / total;
    let inv_sum: f64 = droops.iter().filter(|d| **d != 0.0).map(|d| 1.0 / d).sum();
    let alternative_formula = net / inv_sum;
    let summed_residual = (net - total * omega_star).abs();
    Ok(SyncFrequency {
        omega_star,
        alternative_formula,
        formulas_disagree: (omega_star - alternative_formula).abs() > 1e-12 * (1.0 + omega_star.abs()),
        summed_residual,
        droops,
    })
}

fn reduced_mismatch(model: &NetworkModel, theta: &[f64], c: &[f64]) -> DVector<f64> {
    let p = model.active_power(theta);
    DVector::from_iterator(p.len() - 1, p.iter().zip(c).skip(1).map(|(p, c)| p - c))
}

/// Damped Newton on `R Gamma sin(R^T theta) = c` with `theta_0 = 0`.
///
/// Iterates are kept inside `|eta| < pi/2 - margin`; a step that leaves the
/// region counts as a failed line search.
pub fn solve_power_flow(model: &NetworkModel, c: &[f64], margin: f64) -> Result<PowerFlowSolution, EquilibriumError> {
    model.ensure_connected()?;
    let n1 = model.bus_count();
    assert_eq!(c.len(), n1, "right-hand side has wrong length");
    let sum: f64 = c.iter().sum();
    let scale = c.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    if sum.abs() > 1e-10 * scale {
        return Err(EquilibriumError::UnbalancedRhs { sum });
    }
    let mut theta = vec![0.0; n1];
    let mut f = reduced_mismatch(model, &theta, c);
    let mut iterations = 0;
    let fail = |reason: &str, theta: &[f64], f: &DVector<f64>, iterations| EquilibriumError::InfeasiblePowerFlow {
        reason: reason.into(),
        last_theta: theta.to_vec(),
        mismatch: f.amax(),
        iterations,
    };
    while f.amax() > POWER_FLOW_TOL {
        if iterations == MAX_NEWTON_ITERS {
            return Err(fail("iteration limit reached", &theta, &f, iterations));
        }
        iterations += 1;
        let eta = model.edge_angles(&theta);
        let jac = model.laplacian(Some(&eta)).remove_row(0).remove_column(0);
        let Some(step) = jac.lu().solve(&f) else {
            return Err(fail("singular Jacobian", &theta, &f, iterations));
        };
        let norm0 = f.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let mut trial = theta.clone();
            for (k, s) in step.iter().enumerate() {
                trial[k + 1] -= t * s;
            }
            if security_check(&model.edge_angles(&trial), margin) {
                let ft = reduced_mismatch(model, &trial, c);
                if ft.norm() <= (1.0 - 1e-4 * t) * norm0 {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((th, ft)) => {
                theta = th;
                f = ft;
            }
            None => {
                // Rounding can stall the line search right at the solution.
                if f.amax() <= 1e3 * POWER_FLOW_TOL {
                    break;
                }
                return Err(fail("line search failed inside the security region", &theta, &f, iterations));
            }
        }
    }
    let eta = model.edge_angles(&theta);
    let p = model.active_power(&theta);
    let mismatch = p.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(PowerFlowSolution {
        theta,
        eta,
        mismatch,
        iterations,
    })
}

/// Frequency balance `sum_g (-D_i w + u_bar_i(w)) + 1^T p*`.
fn frequency_balance(model: &NetworkModel, omega: f64) -> Result<f64, EquilibriumError> {
    let mut total: f64 = model.buses().iter().map(|b| b.p_star).sum();
    for bus in model.buses() {
        if let Some(g) = &bus.generator {
            let (_, u) = g
                .dynamics
                .steady_state(omega)
                .ok_or_else(|| EquilibriumError::SteadyStateUndefined { bus: bus.label.clone() })?;
            total += -g.damping * omega + u;
        }
    }
    Ok(total)
}

/// Bisection for the synchronous frequency with an expanding bracket.
pub fn solve_sync_frequency(model: &NetworkModel) -> Result<f64, EquilibriumError> {
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut f_lo = frequency_balance(model, lo)?;
    let mut f_hi = frequency_balance(model, hi)?;
    let mut expansions = 0;
    while f_lo * f_hi > 0.0 {
        if expansions == 60 {
            return Err(EquilibriumError::NoSynchronousSolution { lo, hi });
        }
        lo *= 2.0;
        hi *= 2.0;
        f_lo = frequency_balance(model, lo)?;
        f_hi = frequency_balance(model, hi)?;
        expansions += 1;
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = frequency_balance(model, mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
}

/// Full equilibrium at frequency `omega_star`: steady internal states and
/// power-flow angles.
fn assemble(model: &NetworkModel, omega_star: f64, margin: f64, notes: Vec<String>) -> Result<SynchronousSolution, EquilibriumError> {
    let mut xi_bar = Vec::with_capacity(model.bus_count());
    let mut u_bar = Vec::with_capacity(model.bus_count());
    let mut c = Vec::with_capacity(model.bus_count());
    for bus in model.buses() {
        match &bus.generator {
            Some(g) => {
                let (xi, u) = g
                    .dynamics
                    .steady_state(omega_star)
                    .ok_or_else(|| EquilibriumError::SteadyStateUndefined { bus: bus.label.clone() })?;
                c.push(bus.p_star - g.damping * omega_star + u);
                xi_bar.push(xi);
                u_bar.push(u);
            }
            None => {
                c.push(bus.p_star);
                xi_bar.push(Vec::new());
                u_bar.push(0.0);
            }
        }
    }
    // remove the rounding left over by the frequency solve
    let excess = c.iter().sum::<f64>() / c.len() as f64;
    if excess.abs() <= 1e-11 * c.iter().fold(1.0_f64, |a, x| a.max(x.abs())) {
        for ci in c.iter_mut() {
            *ci -= excess;
        }
    }
    let pf = solve_power_flow(model, &c, margin)?;
    let mut sol = SynchronousSolution {
        omega_star,
        phi_bar: pf.theta[1..].to_vec(),
        theta_bar: pf.theta,
        xi_bar,
        u_bar,
        security_ok: security_check(&pf.eta, margin),
        eta_bar: pf.eta,
        residual_norm: 0.0,
        newton_iterations: pf.iterations,
        notes,
    };
    sol.residual_norm = steady_residual(model, &sol);
    Ok(sol)
}

/// Synchronous solution of the differential-algebraic model.
pub fn solve_equilibrium_dae(model: &NetworkModel) -> Result<SynchronousSolution, EquilibriumError> {
    let omega_star = solve_sync_frequency(model)?;
    assemble(model, omega_star, SECURITY_MARGIN, Vec::new())
}

/// Synchronous motion of an all-linear network, with the frequency taken
/// from the summed steady-state equations.
pub fn solve_equilibrium_linear(model: &NetworkModel) -> Result<SynchronousSolution, EquilibriumError> {
    let sf = solve_sync_frequency_linear(model)?;
    let mut notes = Vec::new();
    if sf.formulas_disagree {
        notes.push(format!(
            "synchronous frequency {} from the summed steady-state equations differs from \
             1'p*/(1'(D-CA^-1B)^-1 1) = {}; the former zeroes the residual and is used",
            sf.omega_star, sf.alternative_formula
        ));
    }
    assemble(model, sf.omega_star, SECURITY_MARGIN, notes)
}

/// Infinity norm of every right-hand side evaluated at a synchronous
/// solution: swing equations with `omega = omega_star`, load balances and
/// internal dynamics.
pub fn steady_residual(model: &NetworkModel, sol: &SynchronousSolution) -> f64 {
    let p = model.active_power(&sol.theta_bar);
    let v = -sol.omega_star;
    let mut worst: f64 = 0.0;
    for (i, bus) in model.buses().iter().enumerate() {
        match &bus.generator {
            Some(g) => {
                let xi = &sol.xi_bar[i];
                let u = g.dynamics.output(xi, v);
                worst = worst.max((-g.damping * sol.omega_star + u + bus.p_star - p[i]).abs());
                let mut dxi = vec![0.0; xi.len()];
                g.dynamics.derivative(xi, v, &mut dxi);
                worst = dxi.iter().fold(worst, |w, d| w.max(d.abs()));
            }
            None => worst = worst.max((bus.p_star - p[i]).abs()),
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTest {
    /// True when `||Gamma^-1 (R^T R)^-1 R^T c||_inf < 1`.
    pub feasible: bool,
    pub norm: f64,
    /// `arcsin(Gamma^-1 (R^T R)^-1 R^T c)` when feasible.
    pub eta_bar: Option<Vec<f64>>,
}

/// Closed-form power-flow feasibility test for tree networks.
pub fn tree_feasibility_test(model: &NetworkModel, c: &[f64]) -> Result<TreeTest, EquilibriumError> {
    let r = model.build_incidence()?;
    if model.line_count() + 1 != model.bus_count() {
        return Err(EquilibriumError::TreeRequired {
            lines: model.line_count(),
            buses: model.bus_count(),
        });
    }
    let rtr: DMatrix<f64> = r.transpose() * &r;
    let rhs = r.transpose() * DVector::from_column_slice(c);
    let flows = rtr
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .expect("R^T R is positive definite on a tree");
    let s: Vec<f64> = flows.iter().zip(model.edge_weights().iter()).map(|(f, g)| f / g).collect();
    let norm = s.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let feasible = norm < 1.0;
    Ok(TreeTest {
        feasible,
        norm,
        eta_bar: feasible.then(|| s.iter().map(|x| x.asin()).collect()),
    })
}
