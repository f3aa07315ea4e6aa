//! Storage functions and the dissipation identity.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::{SimError, SimState, Trajectory};
use crate::equilibrium::SynchronousSolution;
use crate::network::NetworkModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageEval {
    pub s: f64,
    /// `1/2 (omega - omega_bar)' M (omega - omega_bar)`.
    pub kinetic: f64,
    /// Bregman distance of the angle potential.
    pub potential: f64,
    /// Both `eta` and `eta_bar` lie in `(-pi/2, pi/2)^m`, where `S` is
    /// positive definite.
    pub in_region: bool,
}

/// `sum_k gamma_k (-cos eta_k + cos eta_bar_k - (eta_k - eta_bar_k) sin eta_bar_k)`.
fn bregman(model: &NetworkModel, eta: &[f64], eta_bar: &[f64]) -> f64 {
    model
        .edge_weights()
        .iter()
        .zip(eta.iter().zip(eta_bar))
        .map(|(g, (e, eb))| g * (-e.cos() + eb.cos() - (e - eb) * eb.sin()))
        .sum()
}

pub fn storage_s(model: &NetworkModel, state: &SimState, eq: &SynchronousSolution) -> StorageEval {
    let kinetic = model
        .generator_indices()
        .iter()
        .zip(&state.omega)
        .map(|(&i, w)| {
            let m = model.buses()[i].generator.as_ref().expect("generator index").inertia;
            0.5 * m * (w - eq.omega_star).powi(2)
        })
        .sum::<f64>();
    let eta = model.edge_angles(&state.theta);
    let potential = bregman(model, &eta, &eq.eta_bar);
    let inside = |v: &[f64]| v.iter().all(|e| e.abs() < FRAC_PI_2);
    StorageEval {
        s: kinetic + potential,
        kinetic,
        potential,
        in_region: inside(&eta) && inside(&eq.eta_bar),
    }
}

/// Bregman-type angle term of the Popov Lyapunov function, scaled by `rho`.
pub fn popov_z(model: &NetworkModel, theta: &[f64], theta_bar: &[f64], rho: f64) -> f64 {
    rho * bregman(model, &model.edge_angles(theta), &model.edge_angles(theta_bar))
}

/// `-(omega - omega_bar)' D (omega - omega_bar) + (omega - omega_bar)' (u - u_bar)`.
pub fn dissipation_rate(model: &NetworkModel, state: &SimState, u: &[f64], eq: &SynchronousSolution) -> f64 {
    model
        .generator_indices()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let d = model.buses()[i].generator.as_ref().expect("generator index").damping;
            let dw = state.omega[k] - eq.omega_star;
            -d * dw * dw + dw * (u[k] - eq.u_bar[i])
        })
        .sum()
}

/// Largest mismatch between the centered-difference derivative of the
/// sampled storage and [`dissipation_rate`].
pub fn passivity_identity_check(model: &NetworkModel, traj: &Trajectory, eq: &SynchronousSolution) -> Result<f64, SimError> {
    let n = traj.states.len();
    if n < 3 {
        return Err(SimError::TooFewSamples(n));
    }
    let s: Vec<f64> = traj.states.iter().map(|st| storage_s(model, st, eq).s).collect();
    let mut worst: f64 = 0.0;
    for k in 1..n - 1 {
        let h1 = traj.states[k].t - traj.states[k - 1].t;
        let h2 = traj.states[k + 1].t - traj.states[k].t;
        let ds = -h2 / (h1 * (h1 + h2)) * s[k - 1] + (h2 - h1) / (h1 * h2) * s[k] + h1 / (h2 * (h1 + h2)) * s[k + 1];
        let rate = dissipation_rate(model, &traj.states[k], &traj.u[k], eq);
        worst = worst.max((ds - rate).abs());
    }
    Ok(worst)
}
