//! Secant test on the cyclic cascade formed by the swing equation and the
//! generator sub-blocks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{entry, BusParameters, CertificateError, CertificateReport, TestKind};
use crate::network::{GenerationDynamics, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeBlock {
    pub kind: BlockKind,
    /// Output-strict passivity index of the block.
    pub q: f64,
    pub storage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeDecomposition {
    pub blocks: Vec<CascadeBlock>,
}

impl CascadeDecomposition {
    pub fn n_p(&self) -> usize {
        self.blocks.len()
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.q).collect()
    }

    pub fn q_product(&self) -> f64 {
        self.blocks.iter().map(|b| b.q).product()
    }
}

/// Treatment of a second-order block's output map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMapMode {
    /// Absorbed into the last dynamic block through a Bregman storage.
    #[default]
    Refined,
    /// Kept as a fourth, static block.
    SeparateBlock,
}

fn block(kind: BlockKind, q: f64, storage: &str) -> CascadeBlock {
    CascadeBlock {
        kind,
        q,
        storage: storage.into(),
    }
}

pub fn cascade_decompose(dynamics: &GenerationDynamics, mode: OutputMapMode) -> Result<CascadeDecomposition, CertificateError> {
    use BlockKind::*;
    let blocks = match dynamics {
        GenerationDynamics::StaticMonotone { map } => vec![block(Static, 1.0 / map.max_slope(), "none")],
        GenerationDynamics::FirstOrder { map, .. } => vec![
            block(Static, 1.0 / map.max_slope(), "none"),
            block(Dynamic, 1.0, "tau/2 (xi - xi_bar)^2"),
        ],
        GenerationDynamics::SecondOrder {
            cost_gradient,
            input_map,
            output_map,
            ..
        } => {
            let mut b = vec![
                block(Static, 1.0 / input_map.max_slope(), "none"),
                block(Dynamic, cost_gradient.min_slope(), "tau_alpha/2 (alpha - alpha_bar)^2"),
            ];
            match (output_map, mode) {
                (None, _) => b.push(block(Dynamic, 1.0, "tau_beta/2 (beta - beta_bar)^2")),
                (Some(h), OutputMapMode::Refined) => {
                    b.push(block(Dynamic, 1.0 / h.max_slope(), "tau_beta * Bregman distance of int h"))
                }
                (Some(h), OutputMapMode::SeparateBlock) => {
                    b.push(block(Dynamic, 1.0, "tau_beta/2 (beta - beta_bar)^2"));
                    b.push(block(Static, 1.0 / h.max_slope(), "none"));
                }
            }
            b
        }
        GenerationDynamics::LinearSs(_) => {
            return Err(CertificateError::Unsupported {
                bus: String::new(),
                kind: dynamics.kind_name().into(),
            })
        }
    };
    Ok(CascadeDecomposition { blocks })
}

/// `sec(pi / (n + 1))^(n + 1)`; infinite for a single block.
pub fn secant_factor(n_p: usize) -> f64 {
    assert!(n_p >= 1, "a cascade has at least one block");
    if n_p == 1 {
        return f64::INFINITY;
    }
    let n = (n_p + 1) as f64;
    (PI / n).cos().powf(-n)
}

/// `pass[i]` iff `1/D_i < prod_j Q_ij * secant_factor(n_P)`.
pub fn secant_check(model: &NetworkModel, mode: OutputMapMode) -> Result<CertificateReport, CertificateError> {
    let mut entries = Vec::new();
    for (i, bus) in model.buses().iter().enumerate() {
        let Some(g) = &bus.generator else { continue };
        let dec = cascade_decompose(&g.dynamics, mode).map_err(|e| match e {
            CertificateError::Unsupported { kind, .. } => CertificateError::Unsupported {
                bus: bus.label.clone(),
                kind,
            },
            other => other,
        })?;
        let factor = secant_factor(dec.n_p());
        let rhs = dec.q_product() * factor;
        entries.push(entry(i, &bus.label, TestKind::Secant, rhs - 1.0 / g.damping, BusParameters {
            q: dec.q_values(),
            secant_factor: Some(factor),
            ..Default::default()
        }));
    }
    Ok(CertificateReport::from_entries(TestKind::Secant, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{BusParams, ScalarMap};

    #[test]
    fn factor_identities() {
        assert!((secant_factor(2) - 8.0).abs() < 1e-12);
        assert!((secant_factor(3) - 4.0).abs() < 1e-12);
        let f4 = secant_factor(4);
        assert!((2.88..2.89).contains(&f4), "{f4}");
        for n in 1..20 {
            assert!(secant_factor(n + 1) < secant_factor(n));
        }
    }

    #[test]
    fn decompositions() {
        let fo = GenerationDynamics::FirstOrder {
            tau: 1.0,
            map: ScalarMap::Linear { gain: 2.0 },
        };
        assert_eq!(cascade_decompose(&fo, OutputMapMode::Refined).unwrap().q_values(), vec![0.5, 1.0]);
        let so = |h: Option<f64>| GenerationDynamics::SecondOrder {
            tau_alpha: 1.0,
            tau_beta: 1.0,
            cost_gradient: ScalarMap::Linear { gain: 3.0 },
            input_map: ScalarMap::Linear { gain: 2.0 },
            output_map: h.map(|gain| ScalarMap::Linear { gain }),
        };
        assert_eq!(cascade_decompose(&so(None), OutputMapMode::Refined).unwrap().q_values(), vec![0.5, 3.0, 1.0]);
        assert_eq!(cascade_decompose(&so(Some(2.0)), OutputMapMode::Refined).unwrap().q_values(), vec![0.5, 3.0, 0.5]);
        let sep = cascade_decompose(&so(Some(2.0)), OutputMapMode::SeparateBlock).unwrap();
        assert_eq!(sep.n_p(), 4);
        assert_eq!(sep.blocks[3].kind, BlockKind::Static);
    }

    #[test]
    fn deadband_threshold() {
        let check = |rho: f64| {
            let m = NetworkModel::new(
                vec![BusParams::generator("g", 1.0, 0.5, 0.0, GenerationDynamics::FirstOrder {
                    tau: 2.0,
                    map: ScalarMap::Deadband { gain: rho, width: 0.05 },
                })],
                vec![],
            )
            .unwrap();
            secant_check(&m, OutputMapMode::Refined).unwrap().pass
        };
        assert!(check(4.0 - 1e-6));
        assert!(!check(4.0 + 1e-6));
    }
}
