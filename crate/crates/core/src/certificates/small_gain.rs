//! Incremental small-gain test: the generator block's incremental L2 gain
//! must stay below the bus damping.

use super::{entry, BusParameters, CertificateError, CertificateReport, TestKind};
use crate::network::{GenerationDynamics, NetworkModel};

/// Incremental L2-gain bound of a generator block from `-omega` to `u`.
pub fn block_l2_gain(dynamics: &GenerationDynamics) -> Result<f64, CertificateError> {
    match dynamics {
        GenerationDynamics::StaticMonotone { map } | GenerationDynamics::FirstOrder { map, .. } => Ok(map.max_slope()),
        GenerationDynamics::SecondOrder {
            cost_gradient,
            input_map,
            output_map,
            ..
        } => {
            let base = input_map.max_slope() / cost_gradient.min_slope();
            Ok(output_map.as_ref().map_or(base, |h| base * h.max_slope()))
        }
        GenerationDynamics::LinearSs(_) => Err(CertificateError::Unsupported {
            bus: String::new(),
            kind: dynamics.kind_name().into(),
        }),
    }
}

/// `pass[i]` iff `delta_i < D_i`, with `gains[i]` the gain of bus `i`
/// (ignored for loads).
pub fn small_gain_check(model: &NetworkModel, gains: &[Option<f64>]) -> Result<CertificateReport, CertificateError> {
    let mut entries = Vec::new();
    for (i, bus) in model.buses().iter().enumerate() {
        let Some(g) = &bus.generator else { continue };
        let delta = gains
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| CertificateError::IncompleteGains { bus: bus.label.clone() })?;
        entries.push(entry(i, &bus.label, TestKind::SmallGain, g.damping - delta, BusParameters {
            delta: Some(delta),
            ..Default::default()
        }));
    }
    Ok(CertificateReport::from_entries(TestKind::SmallGain, entries))
}

/// [`small_gain_check`] with gains from [`block_l2_gain`].
pub fn small_gain_check_auto(model: &NetworkModel) -> Result<CertificateReport, CertificateError> {
    let gains = model
        .buses()
        .iter()
        .map(|bus| match &bus.generator {
            Some(g) => block_l2_gain(&g.dynamics)
                .map(Some)
                .map_err(|e| match e {
                    CertificateError::Unsupported { kind, .. } => CertificateError::Unsupported {
                        bus: bus.label.clone(),
                        kind,
                    },
                    other => other,
                }),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    small_gain_check(model, &gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::Verdict;
    use crate::network::{BusParams, ScalarMap};

    fn second_order(rk: f64, rc: f64, rh: Option<f64>) -> GenerationDynamics {
        GenerationDynamics::SecondOrder {
            tau_alpha: 1.0,
            tau_beta: 1.0,
            cost_gradient: ScalarMap::Linear { gain: rc },
            input_map: ScalarMap::Linear { gain: rk },
            output_map: rh.map(|g| ScalarMap::Linear { gain: g }),
        }
    }

    fn one_bus(d: f64, dynamics: GenerationDynamics) -> NetworkModel {
        NetworkModel::new(vec![BusParams::generator("g", 1.0, d, 0.0, dynamics)], vec![]).unwrap()
    }

    #[test]
    fn gains() {
        let fo = GenerationDynamics::FirstOrder {
            tau: 1.0,
            map: ScalarMap::Deadband { gain: 3.0, width: 0.1 },
        };
        assert_eq!(block_l2_gain(&fo).unwrap(), 3.0);
        assert_eq!(block_l2_gain(&second_order(2.0, 4.0, None)).unwrap(), 0.5);
        assert_eq!(block_l2_gain(&second_order(2.0, 4.0, Some(2.0))).unwrap(), 1.0);
    }

    #[test]
    fn second_order_examples() {
        let r = small_gain_check_auto(&one_bus(0.9, second_order(1.0, 1.0, None))).unwrap();
        assert!(!r.pass);
        let r = small_gain_check_auto(&one_bus(0.6, second_order(1.0, 2.0, None))).unwrap();
        assert!(r.pass);
        assert!((r.buses[0].margin - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_margin_is_damping() {
        let m = one_bus(0.7, second_order(1.0, 1.0, None));
        let r = small_gain_check(&m, &[Some(0.0)]).unwrap();
        assert_eq!(r.buses[0].margin, 0.7);
        assert_eq!(r.buses[0].verdict, Verdict::Pass);
        assert!(matches!(
            small_gain_check(&m, &[None]),
            Err(CertificateError::IncompleteGains { .. })
        ));
    }
}
