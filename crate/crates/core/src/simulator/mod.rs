//! Time-domain simulation of the network model and evaluation of the storage
//! functions along trajectories.
//!
//! Two modes are provided. [`simulate_dae`] works in reference-bus
//! coordinates (`theta_0 = 0`) and keeps load angles on the algebraic
//! manifold; [`simulate_ode`] integrates absolute angles for networks in
//! which every bus carries inertia.

mod csv;
mod dae;
mod ode;
mod storage;

pub use csv::{format_number, trajectory_csv, write_trajectory_csv};
pub use dae::{simulate_dae, DaeOptions};
pub use ode::{simulate_ode, OdeOptions};
pub use storage::{dissipation_rate, passivity_identity_check, popov_z, storage_s, StorageEval};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::SynchronousSolution;
use crate::network::NetworkModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("initial condition is inconsistent with the load balance equations: {0}")]
    InconsistentInitial(String),
    #[error("state vector sizes do not match the model: {0}")]
    Shape(String),
    #[error("held input mode requires a reference equilibrium")]
    MissingReference,
    #[error("load buses are present; use the differential-algebraic simulator")]
    LoadBusesPresent,
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
}

/// Generator input used during integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `u` produced by the generation dynamics.
    #[default]
    ClosedLoop,
    /// `u = u_bar` from the reference equilibrium; internal states frozen.
    Held,
}

/// Snapshot of the dynamic state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    /// Angles of all buses. In the differential-algebraic mode `theta[0]`
    /// stays 0 and the entries are the reference-relative angles.
    pub theta: Vec<f64>,
    /// Frequencies of the generator buses, in generator order.
    pub omega: Vec<f64>,
    /// Concatenated internal states of the generator blocks.
    pub xi: Vec<f64>,
}

impl SimState {
    /// State sitting at a synchronous solution.
    pub fn at_equilibrium(model: &NetworkModel, eq: &SynchronousSolution) -> SimState {
        let gens = model.generator_indices();
        SimState {
            t: 0.0,
            theta: eq.theta_bar.clone(),
            omega: vec![eq.omega_star; gens.len()],
            xi: gens.iter().flat_map(|&i| eq.xi_bar[i].iter().copied()).collect(),
        }
    }

    /// Angles relative to the reference bus.
    pub fn phi(&self) -> Vec<f64> {
        self.theta[1..].iter().map(|t| t - self.theta[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The algebraic Jacobian became (numerically) singular: the trajectory
    /// left the region where load angles are defined.
    SingularityStop { t: f64, sigma_min: f64, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    pub max_alg_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    /// Generator outputs `u` per sample, in generator order.
    pub u: Vec<Vec<f64>>,
    /// Load balance residual per sample (zero without loads).
    pub alg_residual: Vec<f64>,
    pub termination: Termination,
    pub stats: SimStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &SimState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Largest deviation of any state component from the initial sample.
    pub fn max_drift(&self) -> f64 {
        let s0 = &self.states[0];
        self.states
            .iter()
            .flat_map(|s| {
                s.theta
                    .iter()
                    .zip(&s0.theta)
                    .chain(s.omega.iter().zip(&s0.omega))
                    .chain(s.xi.iter().zip(&s0.xi))
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max)
    }

    /// First sample time after which `max |omega_i - omega_bar| < tol`
    /// holds for the rest of the trajectory.
    pub fn settling_time(&self, omega_bar: f64, tol: f64) -> Option<f64> {
        let mut t_settle = None;
        for s in &self.states {
            let dev = s.omega.iter().map(|w| (w - omega_bar).abs()).fold(0.0, f64::max);
            if dev < tol {
                t_settle.get_or_insert(s.t);
            } else {
                t_settle = None;
            }
        }
        t_settle
    }
}

/// Index bookkeeping shared by both integrators.
pub(crate) struct Layout {
    pub gens: Vec<usize>,
    pub loads: Vec<usize>,
    pub xi_offset: Vec<usize>,
    pub xi_len: usize,
}

impl Layout {
    pub fn new(model: &NetworkModel) -> Layout {
        let gens = model.generator_indices();
        let mut xi_offset = Vec::with_capacity(gens.len());
        let mut off = 0;
        for &i in &gens {
            xi_offset.push(off);
            off += model.buses()[i].generator.as_ref().map_or(0, |g| g.dynamics.state_dim());
        }
        Layout {
            loads: model.load_indices(),
            gens,
            xi_offset,
            xi_len: off,
        }
    }

    pub fn check(&self, model: &NetworkModel, s: &SimState) -> Result<(), SimError> {
        if s.theta.len() != model.bus_count() || s.omega.len() != self.gens.len() || s.xi.len() != self.xi_len {
            return Err(SimError::Shape(format!(
                "theta {}/{}, omega {}/{}, xi {}/{}",
                s.theta.len(),
                model.bus_count(),
                s.omega.len(),
                self.gens.len(),
                s.xi.len(),
                self.xi_len
            )));
        }
        Ok(())
    }

    fn xi_range(&self, k: usize, model: &NetworkModel) -> std::ops::Range<usize> {
        let dim = model.buses()[self.gens[k]].generator.as_ref().map_or(0, |g| g.dynamics.state_dim());
        self.xi_offset[k]..self.xi_offset[k] + dim
    }
}

/// Swing and generator right-hand sides at fixed angles. Writes
/// `domega`, `dxi` and the generator outputs `u`.
pub(crate) fn swing_rhs(
    model: &NetworkModel,
    layout: &Layout,
    theta: &[f64],
    omega: &[f64],
    xi: &[f64],
    held: Option<&[f64]>,
    domega: &mut [f64],
    dxi: &mut [f64],
    u: &mut [f64],
) {
    let p = model.active_power(theta);
    for (k, &i) in layout.gens.iter().enumerate() {
        let bus = &model.buses()[i];
        let g = bus.generator.as_ref().expect("generator index");
        let v = -omega[k];
        let r = layout.xi_range(k, model);
        match held {
            Some(u_bar) => {
                u[k] = u_bar[i];
                dxi[r].fill(0.0);
            }
            None => {
                u[k] = g.dynamics.output(&xi[r.clone()], v);
                g.dynamics.derivative(&xi[r.clone()], v, &mut dxi[r]);
            }
        }
        domega[k] = (-g.damping * omega[k] + u[k] + bus.p_star - p[i]) / g.inertia;
    }
}

/// Generator outputs at a given state.
pub(crate) fn outputs(model: &NetworkModel, layout: &Layout, s: &SimState, held: Option<&[f64]>) -> Vec<f64> {
    layout
        .gens
        .iter()
        .enumerate()
        .map(|(k, &i)| match held {
            Some(u_bar) => u_bar[i],
            None => {
                let g = model.buses()[i].generator.as_ref().expect("generator index");
                g.dynamics.output(&s.xi[layout.xi_range(k, model)], -s.omega[k])
            }
        })
        .collect()
}

/// Infinity norm of the load balance `p_l(theta) - p*_l`.
pub(crate) fn load_residual(model: &NetworkModel, layout: &Layout, theta: &[f64]) -> f64 {
    if layout.loads.is_empty() {
        return 0.0;
    }
    let p = model.active_power(theta);
    layout
        .loads
        .iter()
        .map(|&l| (p[l] - model.buses()[l].p_star).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;
