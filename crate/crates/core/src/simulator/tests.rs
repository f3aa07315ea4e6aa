use std::f64::consts::PI;

use super::*;
use crate::equilibrium::{solve_equilibrium_dae, solve_equilibrium_linear};
use crate::network::{BusParams, GenerationDynamics, Line, ScalarMap};

fn first_order(k: f64) -> GenerationDynamics {
    GenerationDynamics::FirstOrder {
        tau: 0.5,
        map: ScalarMap::Linear { gain: k },
    }
}

fn three_bus() -> NetworkModel {
    NetworkModel::new(
        vec![
            BusParams::generator("g0", 2.0, 1.0, 0.3, first_order(3.0)),
            BusParams::generator("g1", 3.0, 1.5, 0.1, first_order(2.0)),
            BusParams::load("l2", -0.4),
        ],
        vec![Line::new(0, 2, 2.0), Line::new(1, 2, 1.5), Line::new(0, 1, 1.0)],
    )
    .unwrap()
}

fn two_bus_ode() -> NetworkModel {
    NetworkModel::new(
        vec![
            BusParams::generator("a", 2.0, 1.0, 0.5, first_order(2.0)),
            BusParams::generator("b", 1.0, 0.5, -0.2, first_order(1.0)),
        ],
        vec![Line::new(0, 1, 1.0)],
    )
    .unwrap()
}

#[test]
fn dae_equilibrium_is_invariant() {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let x0 = SimState::at_equilibrium(&m, &eq);
    let traj = simulate_dae(&m, &x0, 5.0, &DaeOptions::default(), None).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    assert_eq!(traj.states.len(), 501);
    assert!(traj.max_drift() < 1e-9, "drift {}", traj.max_drift());
    assert!(traj.stats.max_alg_residual <= 1e-10);
}

fn held_residual(dt: f64) -> f64 {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let mut x0 = SimState::at_equilibrium(&m, &eq);
    x0.omega[0] += 0.05;
    x0.omega[1] -= 0.03;
    let opts = DaeOptions {
        dt,
        input: InputMode::Held,
        ..DaeOptions::default()
    };
    let traj = simulate_dae(&m, &x0, 2.0, &opts, Some(&eq)).unwrap();
    passivity_identity_check(&m, &traj, &eq).unwrap()
}

#[test]
fn passivity_identity_converges_quadratically() {
    let coarse = held_residual(4e-3);
    let fine = held_residual(2e-3);
    assert!(fine < 1e-5, "residual {fine}");
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn held_mode_requires_reference() {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let x0 = SimState::at_equilibrium(&m, &eq);
    let opts = DaeOptions {
        input: InputMode::Held,
        ..DaeOptions::default()
    };
    assert_eq!(simulate_dae(&m, &x0, 1.0, &opts, None).unwrap_err(), SimError::MissingReference);
}

#[test]
fn closed_loop_dae_storage_decreases() {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let mut x0 = SimState::at_equilibrium(&m, &eq);
    x0.omega[1] += 0.1;
    let traj = simulate_dae(&m, &x0, 30.0, &DaeOptions::default(), Some(&eq)).unwrap();
    let s0 = storage_s(&m, &traj.states[0], &eq).s;
    let s1 = storage_s(&m, traj.last(), &eq).s;
    assert!(s1 < 1e-2 * s0);
    assert!(traj.settling_time(eq.omega_star, 1e-3).is_some());
}

#[test]
fn infeasible_load_is_rejected() {
    let m = NetworkModel::new(
        vec![
            BusParams::generator("g", 1.0, 1.0, 5.0, first_order(1.0)),
            BusParams::load("l", -5.0),
        ],
        vec![Line::new(0, 1, 1.0)],
    )
    .unwrap();
    let x0 = SimState {
        t: 0.0,
        theta: vec![0.0, 0.0],
        omega: vec![0.0],
        xi: vec![0.0],
    };
    let err = simulate_dae(&m, &x0, 1.0, &DaeOptions::default(), None).unwrap_err();
    assert!(matches!(err, SimError::InconsistentInitial(_)));
}

#[test]
fn storage_values() {
    let m = NetworkModel::new(
        vec![
            BusParams::generator("a", 2.0, 1.0, 0.0, first_order(1.0)),
            BusParams::generator("b", 2.0, 1.0, 0.0, first_order(1.0)),
        ],
        vec![Line::new(0, 1, 1.0)],
    )
    .unwrap();
    let eq = solve_equilibrium_linear(&m).unwrap();
    let z = popov_z(&m, &[0.0, PI / 6.0], &eq.theta_bar, 1.0);
    assert!((z - (1.0 - (PI / 6.0).cos())).abs() < 1e-15);
    assert!((popov_z(&m, &[0.0, PI / 6.0], &eq.theta_bar, 3.0) - 3.0 * z).abs() < 1e-15);

    let mut x = SimState::at_equilibrium(&m, &eq);
    x.omega[0] += 1.0;
    let s = storage_s(&m, &x, &eq);
    assert_eq!(s.s, 1.0);
    assert_eq!(s.potential, 0.0);
    assert!(s.in_region);
}

#[test]
fn ode_rejects_loads() {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let x0 = SimState::at_equilibrium(&m, &eq);
    assert_eq!(
        simulate_ode(&m, &x0, 1.0, &OdeOptions::default(), None).unwrap_err(),
        SimError::LoadBusesPresent
    );
}

#[test]
fn ode_is_rotation_invariant() {
    let m = two_bus_ode();
    let eq = solve_equilibrium_linear(&m).unwrap();
    let mut x0 = SimState::at_equilibrium(&m, &eq);
    x0.omega[0] += 0.2;
    let a = simulate_ode(&m, &x0, 10.0, &OdeOptions::default(), None).unwrap();
    for th in &mut x0.theta {
        *th += 1.3;
    }
    let b = simulate_ode(&m, &x0, 10.0, &OdeOptions::default(), None).unwrap();
    assert_eq!(a.states.len(), 101);
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(sa.t, sb.t);
        for (wa, wb) in sa.omega.iter().zip(&sb.omega) {
            assert!((wa - wb).abs() < 1e-8);
        }
        assert!((sa.phi()[0] - sb.phi()[0]).abs() < 1e-8);
    }
}

#[test]
fn ode_converges_and_satisfies_identity() {
    let m = two_bus_ode();
    let eq = solve_equilibrium_linear(&m).unwrap();
    let mut x0 = SimState::at_equilibrium(&m, &eq);
    x0.omega[1] -= 0.3;
    let opts = OdeOptions {
        sample_dt: 0.01,
        ..OdeOptions::default()
    };
    let traj = simulate_ode(&m, &x0, 60.0, &opts, Some(&eq)).unwrap();
    let dev = traj.last().omega.iter().map(|w| (w - eq.omega_star).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-6, "deviation {dev}");

    let held = OdeOptions {
        input: InputMode::Held,
        ..opts
    };
    let traj = simulate_ode(&m, &x0, 5.0, &held, Some(&eq)).unwrap();
    assert!(passivity_identity_check(&m, &traj, &eq).unwrap() < 1e-4);
}

#[test]
fn csv_layout() {
    let m = three_bus();
    let eq = solve_equilibrium_dae(&m).unwrap();
    let x0 = SimState::at_equilibrium(&m, &eq);
    let traj = simulate_dae(&m, &x0, 0.1, &DaeOptions::default(), None).unwrap();
    let with = trajectory_csv(&m, &traj, Some(&eq));
    let lines: Vec<&str> = with.lines().collect();
    assert_eq!(lines[0], "t,omega_0,omega_1,eta_0_1,eta_0_2,eta_1_2,S,dS_dt_expected,alg_residual");
    assert_eq!(lines.len(), 1 + traj.states.len());
    let without = trajectory_csv(&m, &traj, None);
    assert!(without.lines().nth(1).unwrap().contains(",,,"));
}

#[test]
fn settling_time_requires_staying_inside() {
    let mk = |t: f64, w: f64| SimState {
        t,
        theta: vec![0.0],
        omega: vec![w],
        xi: vec![],
    };
    let traj = Trajectory {
        states: vec![mk(0.0, 1.0), mk(1.0, 0.0), mk(2.0, 1.0), mk(3.0, 0.0), mk(4.0, 0.0)],
        u: vec![vec![0.0]; 5],
        alg_residual: vec![0.0; 5],
        termination: Termination::Completed,
        stats: SimStats::default(),
    };
    assert_eq!(traj.settling_time(0.0, 0.1), Some(3.0));
    assert_eq!(traj.settling_time(5.0, 0.1), None);
}
