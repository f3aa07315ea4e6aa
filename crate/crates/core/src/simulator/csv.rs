//! Trajectory export.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::{dissipation_rate, storage_s, Trajectory};
use crate::equilibrium::SynchronousSolution;
use crate::network::NetworkModel;

/// Shortest decimal that parses back to `x`, in exponent form outside
/// `[1e-5, 1e16)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// CSV with columns `t`, `omega_<bus>` per generator, `eta_<i>_<j>` per line,
/// `S`, `dS_dt_expected`, `alg_residual`. Storage columns are left empty
/// without a reference equilibrium.
pub fn trajectory_csv(model: &NetworkModel, traj: &Trajectory, reference: Option<&SynchronousSolution>) -> String {
    let mut out = String::from("t");
    for i in model.generator_indices() {
        write!(out, ",omega_{i}").unwrap();
    }
    for l in model.lines() {
        let (a, b) = l.oriented();
        write!(out, ",eta_{a}_{b}").unwrap();
    }
    out.push_str(",S,dS_dt_expected,alg_residual\n");
    for (k, s) in traj.states.iter().enumerate() {
        out.push_str(&format_number(s.t));
        for w in &s.omega {
            write!(out, ",{}", format_number(*w)).unwrap();
        }
        for e in model.edge_angles(&s.theta) {
            write!(out, ",{}", format_number(e)).unwrap();
        }
        match reference {
            Some(eq) => write!(
                out,
                ",{},{}",
                format_number(storage_s(model, s, eq).s),
                format_number(dissipation_rate(model, s, &traj.u[k], eq))
            )
            .unwrap(),
            None => out.push_str(",,"),
        }
        writeln!(out, ",{}", format_number(traj.alg_residual[k])).unwrap();
    }
    out
}

pub fn write_trajectory_csv(
    path: &Path,
    model: &NetworkModel,
    traj: &Trajectory,
    reference: Option<&SynchronousSolution>,
) -> io::Result<()> {
    std::fs::write(path, trajectory_csv(model, traj, reference))
}
