#![allow(dead_code)]

use gridcert::network::{BusParams, GenerationDynamics, Line, NetworkModel, ScalarMap};

pub const INERTIA: [f64; 4] = [5.5, 3.98, 4.49, 4.22];
pub const DAMPING: [f64; 4] = [1.60, 1.22, 1.38, 1.42];
pub const DROOP: [f64; 4] = [13.0, 7.0, 8.0, 9.0];
pub const P_STAR: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

pub fn second_order(k: f64) -> GenerationDynamics {
    GenerationDynamics::SecondOrder {
        tau_alpha: 0.5,
        tau_beta: 1.0,
        cost_gradient: ScalarMap::Linear { gain: 1.0 },
        input_map: ScalarMap::Linear { gain: k },
        output_map: None,
    }
}

/// Four areas on a unit-susceptance ring.
pub fn four_area(k1: f64) -> NetworkModel {
    let buses = (0..4)
        .map(|i| {
            let k = if i == 0 { k1 } else { DROOP[i] };
            BusParams::generator(format!("area{}", i + 1), INERTIA[i], DAMPING[i], P_STAR[i], second_order(k))
        })
        .collect();
    let lines = (0..4).map(|i| Line::new(i, (i + 1) % 4, 1.0)).collect();
    NetworkModel::new(buses, lines).unwrap()
}

/// Table-2 sigma vector: the first entry free, the others at their bounds.
pub fn table2_sigma(model: &NetworkModel, sigma1: f64) -> Vec<f64> {
    let mut s = model.coupling_bound_sigma();
    s[0] = sigma1;
    s
}
pub mod oracle;
