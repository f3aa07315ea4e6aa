//! Structure-preserving network model: generator and load buses joined by
//! lossless inductive lines.
//!
//! Edges are ordered lexicographically by `(min endpoint, max endpoint)` and
//! oriented from the smaller to the larger bus index unless a line is marked
//! `reversed`. Bus 0 is the angle reference and must be a generator.

mod dynamics;
mod maps;

pub use dynamics::{GenerationDynamics, LinearSs};
pub use maps::ScalarMap;

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("network has no buses")]
    Empty,
    #[error("bus 0 ({label}) is the angle reference and must be a generator")]
    ReferenceNotGenerator { label: String },
    #[error("bus {bus} ({label}): {reason}")]
    InvalidBus { bus: usize, label: String, reason: String },
    #[error("line {line}: endpoint {endpoint} out of range for {buses} buses")]
    EndpointOutOfRange { line: usize, endpoint: usize, buses: usize },
    #[error("line {line} is a self-loop at bus {bus}")]
    SelfLoop { line: usize, bus: usize },
    #[error("duplicate line between buses {0} and {1}")]
    DuplicateLine(usize, usize),
    #[error("line {line} ({i}, {j}): susceptance magnitude must be positive, got {value}")]
    NonPositiveSusceptance { line: usize, i: usize, j: usize, value: f64 },
    #[error("graph is disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    pub inertia: f64,
    pub damping: f64,
    pub dynamics: GenerationDynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusParams {
    pub label: String,
    /// Net active power setpoint (pu).
    pub p_star: f64,
    /// Voltage magnitude (pu), held constant.
    pub voltage: f64,
    /// `None` for constant-power load buses.
    pub generator: Option<Generator>,
}

impl BusParams {
    pub fn generator(label: impl Into<String>, inertia: f64, damping: f64, p_star: f64, dynamics: GenerationDynamics) -> Self {
        BusParams {
            label: label.into(),
            p_star,
            voltage: 1.0,
            generator: Some(Generator {
                inertia,
                damping,
                dynamics,
            }),
        }
    }

    pub fn load(label: impl Into<String>, p_star: f64) -> Self {
        BusParams {
            label: label.into(),
            p_star,
            voltage: 1.0,
            generator: None,
        }
    }

    pub fn with_voltage(mut self, v: f64) -> Self {
        self.voltage = v;
        self
    }

    pub fn is_generator(&self) -> bool {
        self.generator.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub i: usize,
    pub j: usize,
    /// `|beta_ij|` (pu).
    pub susceptance_abs: f64,
    /// Flips the default small-to-large orientation.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub reversed: bool,
}

impl Line {
    pub fn new(i: usize, j: usize, susceptance_abs: f64) -> Self {
        Line {
            i,
            j,
            susceptance_abs,
            reversed: false,
        }
    }

    /// `(source, sink)` under the line's orientation.
    pub fn oriented(&self) -> (usize, usize) {
        let (lo, hi) = (self.i.min(self.j), self.i.max(self.j));
        if self.reversed {
            (hi, lo)
        } else {
            (lo, hi)
        }
    }

    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// Per-edge weights `gamma_k = |beta_ij| V_i V_j`, in incidence column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeWeights(Vec<f64>);

impl Deref for EdgeWeights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl EdgeWeights {
    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkModel {
    buses: Vec<BusParams>,
    lines: Vec<Line>,
}

impl NetworkModel {
    /// Validates the model. Connectivity is not required here; operations
    /// that need it ([`NetworkModel::build_incidence`], power flow) check it.
    pub fn new(buses: Vec<BusParams>, mut lines: Vec<Line>) -> Result<Self, ModelError> {
        let first = buses.first().ok_or(ModelError::Empty)?;
        if !first.is_generator() {
            return Err(ModelError::ReferenceNotGenerator {
                label: first.label.clone(),
            });
        }
        for (k, bus) in buses.iter().enumerate() {
            let bad = |reason: String| ModelError::InvalidBus {
                bus: k,
                label: bus.label.clone(),
                reason,
            };
            if !(bus.voltage.is_finite() && bus.voltage > 0.0) {
                return Err(bad(format!("voltage must be positive, got {}", bus.voltage)));
            }
            if !bus.p_star.is_finite() {
                return Err(bad("p_star must be finite".into()));
            }
            if let Some(g) = &bus.generator {
                if !(g.inertia.is_finite() && g.inertia > 0.0) {
                    return Err(bad(format!("inertia must be positive, got {}", g.inertia)));
                }
                if !(g.damping.is_finite() && g.damping > 0.0) {
                    return Err(bad(format!("damping must be positive, got {}", g.damping)));
                }
                g.dynamics.validate().map_err(bad)?;
            }
        }
        let n = buses.len();
        for (k, l) in lines.iter().enumerate() {
            for e in [l.i, l.j] {
                if e >= n {
                    return Err(ModelError::EndpointOutOfRange {
                        line: k,
                        endpoint: e,
                        buses: n,
                    });
                }
            }
            if l.i == l.j {
                return Err(ModelError::SelfLoop { line: k, bus: l.i });
            }
            if !(l.susceptance_abs.is_finite() && l.susceptance_abs > 0.0) {
                return Err(ModelError::NonPositiveSusceptance {
                    line: k,
                    i: l.i,
                    j: l.j,
                    value: l.susceptance_abs,
                });
            }
        }
        lines.sort_by_key(Line::key);
        for w in lines.windows(2) {
            if w[0].key() == w[1].key() {
                let (a, b) = w[0].key();
                return Err(ModelError::DuplicateLine(a, b));
            }
        }
        Ok(NetworkModel { buses, lines })
    }

    pub fn buses(&self) -> &[BusParams] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn generator_indices(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].is_generator()).collect()
    }

    pub fn load_indices(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| !self.buses[i].is_generator()).collect()
    }

    pub fn has_loads(&self) -> bool {
        self.buses.iter().any(|b| !b.is_generator())
    }

    /// Index of the bus with the given label.
    pub fn bus_index(&self, label: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.label == label)
    }

    /// Rebuilds the model with one bus replaced.
    pub fn with_bus(&self, index: usize, bus: BusParams) -> Result<Self, ModelError> {
        let mut buses = self.buses.clone();
        buses[index] = bus;
        NetworkModel::new(buses, self.lines.clone())
    }

    pub fn with_lines(&self, lines: Vec<Line>) -> Result<Self, ModelError> {
        NetworkModel::new(self.buses.clone(), lines)
    }

    /// Connected components as sorted bus-index lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for l in &self.lines {
            let (a, b) = (find(&mut parent, l.i), find(&mut parent, l.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; n];
        for v in 0..n {
            let r = find(&mut parent, v);
            if root_slot[r] == usize::MAX {
                root_slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_slot[r]].push(v);
        }
        groups
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    pub fn ensure_connected(&self) -> Result<(), ModelError> {
        let components = self.components();
        if components.len() == 1 {
            Ok(())
        } else {
            Err(ModelError::Disconnected { components })
        }
    }

    /// Incidence matrix without the connectivity check.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.buses.len(), self.lines.len());
        for (k, l) in self.lines.iter().enumerate() {
            let (src, sink) = l.oriented();
            r[(src, k)] = -1.0;
            r[(sink, k)] = 1.0;
        }
        r
    }

    /// Incidence matrix `R` ((n+1) x m): `-1` at the source and `+1` at the
    /// sink of each edge.
    pub fn build_incidence(&self) -> Result<DMatrix<f64>, ModelError> {
        self.ensure_connected()?;
        Ok(self.incidence_matrix())
    }

    /// `R` with the reference (bus 0) row removed.
    pub fn reduced_incidence(&self) -> DMatrix<f64> {
        self.incidence_matrix().remove_row(0)
    }

    pub fn edge_weights(&self) -> EdgeWeights {
        EdgeWeights(
            self.lines
                .iter()
                .map(|l| l.susceptance_abs * self.buses[l.i].voltage * self.buses[l.j].voltage)
                .collect(),
        )
    }

    /// Edge angle differences `R^T theta` (sink minus source).
    pub fn edge_angles(&self, theta: &[f64]) -> Vec<f64> {
        self.lines
            .iter()
            .map(|l| {
                let (src, sink) = l.oriented();
                theta[sink] - theta[src]
            })
            .collect()
    }

    /// Line flows `gamma_k sin(eta_k)` for the given edge angles.
    pub fn line_flows(&self, eta: &[f64]) -> Vec<f64> {
        self.edge_weights().iter().zip(eta).map(|(g, e)| g * e.sin()).collect()
    }

    /// Scatters per-edge quantities `f` to buses: returns `R f`.
    pub fn scatter(&self, edge_values: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.buses.len()];
        for (l, f) in self.lines.iter().zip(edge_values) {
            let (src, sink) = l.oriented();
            p[src] -= f;
            p[sink] += f;
        }
        p
    }

    /// Active power drawn from each bus: `p(theta) = R Gamma sin(R^T theta)`.
    pub fn active_power(&self, theta: &[f64]) -> Vec<f64> {
        self.scatter(&self.line_flows(&self.edge_angles(theta)))
    }

    /// `sigma_i = 2 * sum_{j in N_i} |beta_ij| V_i V_j`, the smallest coupling
    /// bound accepted by the Popov-type certificate.
    pub fn coupling_bound_sigma(&self) -> Vec<f64> {
        let mut sigma = vec![0.0; self.buses.len()];
        for (l, g) in self.lines.iter().zip(self.edge_weights().iter()) {
            sigma[l.i] += 2.0 * g;
            sigma[l.j] += 2.0 * g;
        }
        sigma
    }

    /// Weighted Laplacian `R Gamma [cos(eta)] R^T`; `eta = 0` gives `R Gamma R^T`.
    pub fn laplacian(&self, eta: Option<&[f64]>) -> DMatrix<f64> {
        let n = self.buses.len();
        let mut l = DMatrix::zeros(n, n);
        for (k, (line, g)) in self.lines.iter().zip(self.edge_weights().iter()).enumerate() {
            let w = g * eta.map_or(1.0, |e| e[k].cos());
            let (a, b) = (line.i, line.j);
            l[(a, a)] += w;
            l[(b, b)] += w;
            l[(a, b)] -= w;
            l[(b, a)] -= w;
        }
        l
    }

    /// `sum_k gamma_k cos(eta_k)`; the angle potential is its negative.
    pub fn cos_energy(&self, eta: &[f64]) -> f64 {
        self.edge_weights().iter().zip(eta).map(|(g, e)| g * e.cos()).sum()
    }

    pub fn p_star(&self) -> DVector<f64> {
        DVector::from_iterator(self.buses.len(), self.buses.iter().map(|b| b.p_star))
    }
}
