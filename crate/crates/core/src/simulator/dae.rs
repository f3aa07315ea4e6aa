//! Half-explicit RK4 for the differential-algebraic model in reference-bus
//! coordinates. Load angles are re-projected onto the load balance manifold
//! by Newton's method at every stage.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{load_residual, outputs, swing_rhs, InputMode, Layout, SimError, SimState, SimStats, Termination, Trajectory};
use crate::equilibrium::SynchronousSolution;
use crate::network::NetworkModel;

/// Newton tolerance on the load balance residual.
pub const PROJECTION_TOL: f64 = 1e-11;
/// Smallest singular value of the algebraic Jacobian treated as regular.
pub const SINGULARITY_TOL: f64 = 1e-8;
const NEWTON_MAX_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DaeOptions {
    pub dt: f64,
    /// Record every `sample_every`-th step.
    pub sample_every: usize,
    /// Maximum number of successive halvings of a step.
    pub max_halvings: u32,
    pub input: InputMode,
}

impl Default for DaeOptions {
    fn default() -> Self {
        DaeOptions {
            dt: 1e-2,
            sample_every: 1,
            max_halvings: 20,
            input: InputMode::ClosedLoop,
        }
    }
}

enum ProjectionFailure {
    Singular(f64),
    NoConvergence(f64),
}

struct System<'a> {
    model: &'a NetworkModel,
    layout: Layout,
    held: Option<Vec<f64>>,
    /// Generator buses other than the reference, whose angles are states.
    angle_gens: Vec<usize>,
    newton_iterations: usize,
}

impl System<'_> {
    fn dim(&self) -> usize {
        self.angle_gens.len() + self.layout.gens.len() + self.layout.xi_len
    }

    fn pack(&self, s: &SimState) -> Vec<f64> {
        let mut y: Vec<f64> = self.angle_gens.iter().map(|&i| s.theta[i]).collect();
        y.extend(&s.omega);
        y.extend(&s.xi);
        y
    }

    fn unpack(&self, y: &[f64], z: &[f64], t: f64) -> SimState {
        let na = self.angle_gens.len();
        let ng = self.layout.gens.len();
        SimState {
            t,
            theta: self.theta(y, z),
            omega: y[na..na + ng].to_vec(),
            xi: y[na + ng..].to_vec(),
        }
    }

    fn theta(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.model.bus_count()];
        for (k, &i) in self.angle_gens.iter().enumerate() {
            theta[i] = y[k];
        }
        for (k, &l) in self.layout.loads.iter().enumerate() {
            theta[l] = z[k];
        }
        theta
    }

    /// Solves the load balance for the load angles, starting from `z0`.
    fn project(&mut self, y: &[f64], z0: &[f64]) -> Result<Vec<f64>, ProjectionFailure> {
        let loads = &self.layout.loads;
        if loads.is_empty() {
            return Ok(Vec::new());
        }
        let mut z = z0.to_vec();
        let mut last_sigma = f64::NAN;
        for _ in 0..=NEWTON_MAX_ITERS {
            let theta = self.theta(y, &z);
            let p = self.model.active_power(&theta);
            let r = DVector::from_iterator(loads.len(), loads.iter().map(|&l| p[l] - self.model.buses()[l].p_star));
            let eta = self.model.edge_angles(&theta);
            let lap = self.model.laplacian(Some(&eta));
            let jac = DMatrix::from_fn(loads.len(), loads.len(), |a, b| lap[(loads[a], loads[b])]);
            let sigma_min = jac.singular_values().min();
            last_sigma = sigma_min;
            if sigma_min < SINGULARITY_TOL {
                return Err(ProjectionFailure::Singular(sigma_min));
            }
            if r.amax() <= PROJECTION_TOL {
                return Ok(z);
            }
            self.newton_iterations += 1;
            let Some(dz) = jac.lu().solve(&r) else {
                return Err(ProjectionFailure::Singular(sigma_min));
            };
            for (zi, d) in z.iter_mut().zip(dz.iter()) {
                *zi -= d;
            }
        }
        Err(ProjectionFailure::NoConvergence(last_sigma))
    }

    fn rhs(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let na = self.angle_gens.len();
        let ng = self.layout.gens.len();
        let theta = self.theta(y, z);
        let omega = &y[na..na + ng];
        let xi = &y[na + ng..];
        let mut out = vec![0.0; y.len()];
        let (dphi, rest) = out.split_at_mut(na);
        let (domega, dxi) = rest.split_at_mut(ng);
        // generator 0 is the reference bus
        for (k, d) in dphi.iter_mut().enumerate() {
            *d = omega[k + 1] - omega[0];
        }
        let mut u = vec![0.0; ng];
        swing_rhs(self.model, &self.layout, &theta, omega, xi, self.held.as_deref(), domega, dxi, &mut u);
        out
    }

    fn rk4(&mut self, y: &[f64], z: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>), ProjectionFailure> {
        let axpy = |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(x, d)| x + s * d).collect::<Vec<_>>();
        let k1 = self.rhs(y, z);
        let y2 = axpy(y, 0.5 * h, &k1);
        let z2 = self.project(&y2, z)?;
        let k2 = self.rhs(&y2, &z2);
        let y3 = axpy(y, 0.5 * h, &k2);
        let z3 = self.project(&y3, &z2)?;
        let k3 = self.rhs(&y3, &z3);
        let y4 = axpy(y, h, &k3);
        let z4 = self.project(&y4, &z3)?;
        let k4 = self.rhs(&y4, &z4);
        let y_new: Vec<f64> = (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let z_new = self.project(&y_new, &z4)?;
        Ok((y_new, z_new))
    }

    /// Advances by `h`, halving on projection failure.
    fn advance(
        &mut self,
        y: &[f64],
        z: &[f64],
        h: f64,
        depth: u32,
        max_depth: u32,
        stats: &mut SimStats,
    ) -> Result<(Vec<f64>, Vec<f64>), (f64, String)> {
        match self.rk4(y, z, h) {
            Ok(r) => {
                stats.steps += 1;
                Ok(r)
            }
            Err(ProjectionFailure::Singular(s)) => Err((s, "algebraic Jacobian singular".into())),
            Err(ProjectionFailure::NoConvergence(s)) => {
                stats.rejected_steps += 1;
                if depth >= max_depth {
                    return Err((s, format!("load-angle projection failed with step {h:e}")));
                }
                let (ym, zm) = self.advance(y, z, 0.5 * h, depth + 1, max_depth, stats)?;
                self.advance(&ym, &zm, 0.5 * h, depth + 1, max_depth, stats)
            }
        }
    }
}

/// Integrates the differential-algebraic model from `initial` over
/// `[initial.t, initial.t + horizon]` with fixed macro steps `opts.dt`.
///
/// The load angles in `initial.theta` serve as the Newton starting guess.
/// In held mode `reference` supplies `u_bar`.
pub fn simulate_dae(
    model: &NetworkModel,
    initial: &SimState,
    horizon: f64,
    opts: &DaeOptions,
    reference: Option<&SynchronousSolution>,
) -> Result<Trajectory, SimError> {
    if !(opts.dt > 0.0 && horizon >= 0.0 && opts.sample_every > 0) {
        return Err(SimError::InvalidOption(format!(
            "dt = {}, horizon = {horizon}, sample_every = {}",
            opts.dt, opts.sample_every
        )));
    }
    let layout = Layout::new(model);
    layout.check(model, initial)?;
    let held = match opts.input {
        InputMode::ClosedLoop => None,
        InputMode::Held => Some(reference.ok_or(SimError::MissingReference)?.u_bar.clone()),
    };
    let mut sys = System {
        model,
        angle_gens: layout.gens[1..].to_vec(),
        layout,
        held,
        newton_iterations: 0,
    };
    debug_assert_eq!(sys.layout.gens.first(), Some(&0));

    let mut y = sys.pack(initial);
    debug_assert_eq!(y.len(), sys.dim());
    let z0: Vec<f64> = sys.layout.loads.iter().map(|&l| initial.theta[l] - initial.theta[0]).collect();
    // shift so that the reference angle is zero
    for (k, &i) in sys.angle_gens.iter().enumerate() {
        y[k] = initial.theta[i] - initial.theta[0];
    }
    let mut z = sys.project(&y, &z0).map_err(|f| {
        SimError::InconsistentInitial(match f {
            ProjectionFailure::Singular(s) => format!("singular algebraic Jacobian (sigma_min = {s:e})"),
            ProjectionFailure::NoConvergence(_) => "Newton did not converge".into(),
        })
    })?;

    let mut stats = SimStats::default();
    let mut traj = Trajectory {
        states: Vec::new(),
        u: Vec::new(),
        alg_residual: Vec::new(),
        termination: Termination::Completed,
        stats: SimStats::default(),
    };
    let record = |traj: &mut Trajectory, sys: &System, y: &[f64], z: &[f64], t: f64| {
        let s = sys.unpack(y, z, t);
        traj.u.push(outputs(sys.model, &sys.layout, &s, sys.held.as_deref()));
        traj.alg_residual.push(load_residual(sys.model, &sys.layout, &s.theta));
        traj.states.push(s);
    };
    record(&mut traj, &sys, &y, &z, initial.t);

    let n_steps = (horizon / opts.dt).round() as usize;
    for step in 1..=n_steps {
        let t = initial.t + step as f64 * opts.dt;
        match sys.advance(&y, &z, opts.dt, 0, opts.max_halvings, &mut stats) {
            Ok((yn, zn)) => {
                y = yn;
                z = zn;
            }
            Err((sigma_min, reason)) => {
                if traj.last().t < t - opts.dt {
                    record(&mut traj, &sys, &y, &z, t - opts.dt);
                }
                traj.termination = Termination::SingularityStop {
                    t: t - opts.dt,
                    sigma_min,
                    reason,
                };
                break;
            }
        }
        if step % opts.sample_every == 0 || step == n_steps {
            record(&mut traj, &sys, &y, &z, t);
        }
    }
    stats.newton_iterations = sys.newton_iterations;
    stats.max_alg_residual = traj.alg_residual.iter().copied().fold(0.0, f64::max);
    traj.stats = stats;
    Ok(traj)
}
