//! Adaptive Dormand-Prince 5(4) integration of the all-inertia model in
//! absolute angles.

use serde::Serialize;

use super::{outputs, swing_rhs, InputMode, Layout, SimError, SimState, SimStats, Termination, Trajectory};
use crate::equilibrium::SynchronousSolution;
use crate::network::NetworkModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Spacing of recorded samples; steps are shortened to land on them.
    pub sample_dt: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub input: InputMode,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            sample_dt: 0.1,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 1.0,
            input: InputMode::ClosedLoop,
        }
    }
}

// Dormand-Prince tableau; the system is autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct System<'a> {
    model: &'a NetworkModel,
    layout: Layout,
    held: Option<Vec<f64>>,
}

impl System<'_> {
    fn pack(&self, s: &SimState) -> Vec<f64> {
        let mut y = s.theta.clone();
        y.extend(&s.omega);
        y.extend(&s.xi);
        y
    }

    fn unpack(&self, y: &[f64], t: f64) -> SimState {
        let n = self.model.bus_count();
        let ng = self.layout.gens.len();
        SimState {
            t,
            theta: y[..n].to_vec(),
            omega: y[n..n + ng].to_vec(),
            xi: y[n + ng..].to_vec(),
        }
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.model.bus_count();
        let ng = self.layout.gens.len();
        let (theta, rest) = y.split_at(n);
        let (omega, xi) = rest.split_at(ng);
        let (dtheta, rest) = out.split_at_mut(n);
        let (domega, dxi) = rest.split_at_mut(ng);
        // every bus is a generator here
        dtheta.copy_from_slice(omega);
        let mut u = vec![0.0; ng];
        swing_rhs(self.model, &self.layout, theta, omega, xi, self.held.as_deref(), domega, dxi, &mut u);
    }
}

/// Integrates the model without load buses over `[initial.t, initial.t + horizon]`.
pub fn simulate_ode(
    model: &NetworkModel,
    initial: &SimState,
    horizon: f64,
    opts: &OdeOptions,
    reference: Option<&SynchronousSolution>,
) -> Result<Trajectory, SimError> {
    if model.has_loads() {
        return Err(SimError::LoadBusesPresent);
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0 && opts.sample_dt > 0.0 && opts.h_init > 0.0 && horizon >= 0.0) {
        return Err(SimError::InvalidOption(format!("{opts:?}, horizon = {horizon}")));
    }
    let layout = Layout::new(model);
    layout.check(model, initial)?;
    let held = match opts.input {
        InputMode::ClosedLoop => None,
        InputMode::Held => Some(reference.ok_or(SimError::MissingReference)?.u_bar.clone()),
    };
    let sys = System { model, layout, held };

    let mut y = sys.pack(initial);
    let dim = y.len();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut stats = SimStats::default();
    let mut traj = Trajectory {
        states: vec![initial.clone()],
        u: vec![outputs(model, &sys.layout, initial, sys.held.as_deref())],
        alg_residual: vec![0.0],
        termination: Termination::Completed,
        stats: SimStats::default(),
    };

    let t_end = initial.t + horizon;
    let n_samples = (horizon / opts.sample_dt).round() as usize;
    let mut t = initial.t;
    let mut h = opts.h_init.min(opts.h_max);
    sys.rhs(&y, &mut k[0]);
    for sample in 1..=n_samples {
        let t_sample = if sample == n_samples {
            t_end
        } else {
            initial.t + sample as f64 * opts.sample_dt
        };
        while t < t_sample {
            let last = t + h >= t_sample;
            let step = if last { t_sample - t } else { h };
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                sys.rhs(&stage, &mut k[s]);
            }
            let mut err = 0.0;
            for i in 0..dim {
                let mut hi = y[i];
                let mut lo = y[i];
                for s in 0..7 {
                    hi += step * B5[s] * k[s][i];
                    lo += step * B4[s] * k[s][i];
                }
                y5[i] = hi;
                let sc = opts.atol + opts.rtol * y[i].abs().max(hi.abs());
                err += ((hi - lo) / sc).powi(2);
            }
            let err = (err / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                stats.rejected_steps += 1;
                h = 0.25 * step;
            } else if err <= 1.0 {
                stats.steps += 1;
                t = if last { t_sample } else { t + step };
                std::mem::swap(&mut y, &mut y5);
                // first-same-as-last: the seventh stage is f at the new point
                k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || step >= h {
                    h = (step * grow).min(opts.h_max);
                }
            } else {
                stats.rejected_steps += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
            if h < opts.h_min && t < t_sample {
                return Err(SimError::StepSizeUnderflow { t, h });
            }
        }
        let s = sys.unpack(&y, t);
        traj.u.push(outputs(model, &sys.layout, &s, sys.held.as_deref()));
        traj.alg_residual.push(0.0);
        traj.states.push(s);
    }
    traj.stats = stats;
    Ok(traj)
}
