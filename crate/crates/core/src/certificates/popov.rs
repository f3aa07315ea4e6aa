//! Popov-type certificate: every bus function
//! `H_i(s) = 1/sigma_i + (1 + rho s) G_i(s) / s` positive real for one
//! common `rho`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{BusEntry, BusParameters, CertificateError, CertificateReport, NetworkEntry, TestKind, Verdict, STRICT_MARGIN};
use crate::lti::{self, LtiError, RationalTransfer};
use crate::network::NetworkModel;

/// Multiplier parameter; `Infinity` is the passivity limit in which the
/// condition reduces to positive realness of `G_i` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho {
    Finite(f64),
    Infinity,
}

impl std::fmt::Display for Rho {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rho::Finite(r) => write!(f, "{r}"),
            Rho::Infinity => write!(f, "inf"),
        }
    }
}

/// Logarithmically spaced grid `min .. max` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for RhoGrid {
    fn default() -> Self {
        RhoGrid {
            min: 1e-3,
            max: 1e3,
            points: 61,
        }
    }
}

impl RhoGrid {
    pub fn validate(&self) -> Result<(), CertificateError> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(CertificateError::InvalidGrid(format!("need 0 < min <= max, got [{}, {}]", self.min, self.max)));
        }
        if self.points == 0 || (self.points == 1 && self.min != self.max) {
            return Err(CertificateError::InvalidGrid(format!("{} points cannot span [{}, {}]", self.points, self.min, self.max)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopovOptions {
    pub grid: RhoGrid,
    /// Also try the `rho -> infinity` limit.
    pub include_limit: bool,
}

impl Default for PopovOptions {
    fn default() -> Self {
        PopovOptions {
            grid: RhoGrid::default(),
            include_limit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoRow {
    pub rho: Rho,
    /// Positive-realness margin per generator bus; `None` where no verdict
    /// was reached (borderline or pole conflict).
    #[serde(with = "crate::serde_float::vec_option")]
    pub margins: Vec<Option<f64>>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Result {
    pub psd: bool,
    /// Smallest eigenvalue of `Gamma^-1 - R^T Sigma^-1 R`; `None` without lines.
    #[serde(with = "crate::serde_float::option")]
    pub min_eig: Option<f64>,
    /// Buses whose sigma lies below the coupling bound.
    pub below_bound: Vec<usize>,
}

/// Smallest eigenvalue of `Gamma^-1 - R^T Sigma^-1 R`.
pub fn lemma3_psd_check(model: &NetworkModel, sigma: &[f64]) -> Result<Lemma3Result, CertificateError> {
    check_sigma_len(model, sigma)?;
    let r = model.incidence_matrix();
    let m = model.line_count();
    for (i, s) in sigma.iter().enumerate() {
        if *s == 0.0 && (0..m).any(|k| r[(i, k)] != 0.0) {
            return Err(CertificateError::DivisionByZeroSigma { bus: i });
        }
    }
    let below_bound = below_bound(model, sigma);
    if m == 0 {
        return Ok(Lemma3Result {
            psd: true,
            min_eig: None,
            below_bound,
        });
    }
    let gamma = model.edge_weights();
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        mat[(k, k)] = 1.0 / gamma[k];
    }
    for (i, s) in sigma.iter().enumerate() {
        if *s == 0.0 {
            continue;
        }
        for a in 0..m {
            for b in 0..m {
                mat[(a, b)] -= r[(i, a)] * r[(i, b)] / s;
            }
        }
    }
    let min_eig = SymmetricEigen::new(mat).eigenvalues.min();
    Ok(Lemma3Result {
        psd: min_eig >= -1e-10,
        min_eig: Some(min_eig),
        below_bound,
    })
}

fn check_sigma_len(model: &NetworkModel, sigma: &[f64]) -> Result<(), CertificateError> {
    if sigma.len() != model.bus_count() {
        return Err(CertificateError::SigmaLength {
            expected: model.bus_count(),
            got: sigma.len(),
        });
    }
    Ok(())
}

fn below_bound(model: &NetworkModel, sigma: &[f64]) -> Vec<usize> {
    model
        .coupling_bound_sigma()
        .iter()
        .zip(sigma)
        .enumerate()
        .filter(|(_, (b, s))| **s < **b * (1.0 - 1e-12))
        .map(|(i, _)| i)
        .collect()
}

struct BusResult {
    verdict: Verdict,
    margin: Option<f64>,
    note: Option<String>,
}

fn evaluate_bus(g: &RationalTransfer, sigma: f64, rho: Rho) -> Result<BusResult, CertificateError> {
    let isolated = sigma == 0.0;
    let h = match rho {
        Rho::Finite(r) => {
            let sigma_eff = if isolated { f64::INFINITY } else { sigma };
            match lti::popov_transform(g, sigma_eff, r) {
                Ok(h) => h,
                Err(LtiError::PolePlacementConflict { pole }) => {
                    return Ok(BusResult {
                        verdict: Verdict::Fail,
                        margin: None,
                        note: Some(format!("-1/rho = {pole} is a pole of G")),
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        Rho::Infinity => g.clone(),
    };
    let verdict = if isolated {
        lti::positive_real_poles_only(&h)
    } else {
        lti::is_positive_real(&h)
    };
    match verdict {
        Ok(v) if v.is_pr => {
            // the limit is a passivity statement about G; its margin is
            // zero at infinite frequency by construction
            let pass = matches!(rho, Rho::Infinity) || v.margin > STRICT_MARGIN;
            Ok(BusResult {
                verdict: if pass { Verdict::Pass } else { Verdict::Borderline },
                margin: Some(v.margin),
                note: None,
            })
        }
        Ok(v) => Ok(BusResult {
            verdict: Verdict::Fail,
            margin: Some(v.margin).filter(|m| m.is_finite()),
            note: v.failure.map(|f| f.to_string()),
        }),
        Err(LtiError::Borderline(w)) => Ok(BusResult {
            verdict: Verdict::Borderline,
            margin: None,
            note: Some(format!("borderline: {w}")),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Searches a common `rho` for which every bus passes. `sigma[i] = 0` marks
/// an isolated bus whose real-part condition is void.
pub fn popov_check(model: &NetworkModel, sigma: &[f64], opts: &PopovOptions) -> Result<CertificateReport, CertificateError> {
    opts.grid.validate()?;
    check_sigma_len(model, sigma)?;
    let loads: Vec<String> = model.load_indices().iter().map(|&i| model.buses()[i].label.clone()).collect();
    if !loads.is_empty() {
        return Err(CertificateError::UnsupportedTopologyForPopov { loads });
    }
    let mut warnings = Vec::new();
    let bounds = model.coupling_bound_sigma();
    for i in below_bound(model, sigma) {
        warnings.push(format!(
            "sigma[{i}] = {} is below the coupling bound {} of bus {}",
            sigma[i], bounds[i], model.buses()[i].label
        ));
    }
    let lemma3 = match lemma3_psd_check(model, sigma) {
        Ok(r) => Some(r),
        Err(CertificateError::DivisionByZeroSigma { bus }) => {
            warnings.push(format!("coupling matrix check skipped: sigma[{bus}] = 0 on a bus with lines"));
            None
        }
        Err(e) => return Err(e),
    };

    let gens = model.generator_indices();
    let mut transfers = Vec::with_capacity(gens.len());
    let mut a3_notes: Vec<Option<String>> = Vec::with_capacity(gens.len());
    for &i in &gens {
        let bus = &model.buses()[i];
        let unsupported = |e: LtiError| match e {
            LtiError::UnsupportedDynamics { bus, kind } => CertificateError::Unsupported { bus, kind },
            other => other.into(),
        };
        transfers.push(lti::bus_transfer_g(bus).map_err(unsupported)?);
        a3_notes.push(match lti::assumption3_check(bus) {
            Ok(r) if r.ok => None,
            Ok(r) => Some(format!(
                "internal dynamics assumption violated (imaginary modes {:?}, dc gain {})",
                r.imaginary_eigenvalues, r.dc_gain
            )),
            Err(e) => Some(e.to_string()),
        });
    }

    let mut rhos: Vec<Rho> = opts.grid.values().into_iter().map(Rho::Finite).collect();
    if opts.include_limit {
        rhos.push(Rho::Infinity);
    }
    let mut rows = Vec::with_capacity(rhos.len());
    let mut results: Vec<Vec<BusResult>> = Vec::with_capacity(rhos.len());
    for &rho in &rhos {
        let mut row = Vec::with_capacity(gens.len());
        for (k, &i) in gens.iter().enumerate() {
            let r = match &a3_notes[k] {
                Some(note) => BusResult {
                    verdict: Verdict::Fail,
                    margin: None,
                    note: Some(note.clone()),
                },
                None => evaluate_bus(&transfers[k], sigma[i], rho)?,
            };
            row.push(r);
        }
        rows.push(RhoRow {
            rho,
            margins: row.iter().map(|r| r.margin).collect(),
            all_pass: row.iter().all(|r| r.verdict.passed()),
        });
        results.push(row);
    }

    // best common rho: largest worst-bus margin, finite rho preferred
    let min_margin = |row: &RhoRow| row.margins.iter().map(|m| m.unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
    let mut found: Option<usize> = None;
    for (j, row) in rows.iter().enumerate() {
        if !row.all_pass {
            continue;
        }
        found = match found {
            None => Some(j),
            Some(b) if rows[b].rho == Rho::Infinity => Some(j),
            Some(b) if row.rho != Rho::Infinity && min_margin(row) > min_margin(&rows[b]) => Some(j),
            keep => keep,
        };
    }

    let mut entries = Vec::with_capacity(gens.len());
    for (k, &i) in gens.iter().enumerate() {
        let pick = found.unwrap_or_else(|| {
            // best individual rho as a diagnostic
            (0..rows.len())
                .max_by(|&a, &b| {
                    let key = |j: usize| (results[j][k].verdict.passed(), results[j][k].margin.unwrap_or(f64::NEG_INFINITY));
                    key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0)
        });
        let r = &results[pick][k];
        let mut note = r.note.clone();
        if found.is_none() {
            note = Some(match note {
                Some(n) => format!("no common rho; best individual rho {}: {n}", rows[pick].rho),
                None => format!("no common rho; best individual rho {}", rows[pick].rho),
            });
        }
        entries.push(BusEntry {
            bus: i,
            label: model.buses()[i].label.clone(),
            test: TestKind::Popov,
            verdict: r.verdict,
            pass: found.is_some() && r.verdict.passed(),
            margin: r.margin.unwrap_or(f64::NEG_INFINITY),
            parameters: BusParameters {
                sigma: Some(sigma[i]),
                rho: Some(rows[pick].rho),
                ..Default::default()
            },
            note,
        });
    }
    Ok(CertificateReport {
        test: TestKind::Popov,
        pass: found.is_some(),
        buses: entries,
        network: NetworkEntry {
            lemma3_psd: lemma3,
            rho_found: found.map(|j| rows[j].rho),
        },
        rho_table: rows,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopSearch {
    /// Largest gain certified by the search.
    pub k_max: f64,
    /// Smallest gain found not to be certified.
    pub k_fail: f64,
    pub evaluations: usize,
    pub rho_at_k_max: Option<Rho>,
}

/// Bisection on the droop gain of `bus` for the largest value that still
/// passes [`popov_check`], to absolute tolerance `tol`.
pub fn max_droop_search(
    model: &NetworkModel,
    bus: usize,
    sigma: &[f64],
    bracket: (f64, f64),
    tol: f64,
    opts: &PopovOptions,
) -> Result<DroopSearch, CertificateError> {
    let params = model.buses().get(bus).ok_or(CertificateError::NotADroopBus { bus })?;
    let generator = params.generator.as_ref().ok_or(CertificateError::NotADroopBus { bus })?;
    let check = |k: f64| -> Result<CertificateReport, CertificateError> {
        let mut b = params.clone();
        b.generator.as_mut().expect("checked above").dynamics = generator.dynamics.with_droop_gain(k);
        let m = model.with_bus(bus, b).map_err(|e| CertificateError::BracketError {
            lo: bracket.0,
            hi: bracket.1,
            reason: format!("gain {k} gives an invalid model: {e}"),
        })?;
        popov_check(&m, sigma, opts)
    };
    let (mut lo, mut hi) = bracket;
    let lo_report = check(lo)?;
    let hi_report = check(hi)?;
    let mut evaluations = 2;
    if !lo_report.pass || hi_report.pass {
        return Err(CertificateError::BracketError {
            lo,
            hi,
            reason: format!("lower end passes: {}, upper end passes: {}", lo_report.pass, hi_report.pass),
        });
    }
    let mut rho_at = lo_report.network.rho_found;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let r = check(mid)?;
        evaluations += 1;
        if r.pass {
            lo = mid;
            rho_at = r.network.rho_found;
        } else {
            hi = mid;
        }
    }
    Ok(DroopSearch {
        k_max: lo,
        k_fail: hi,
        evaluations,
        rho_at_k_max: rho_at,
    })
}
