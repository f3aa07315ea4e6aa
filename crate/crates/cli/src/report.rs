//! Report documents written by the commands.

use gridcert::certificates::{CertificateReport, Rho};
use gridcert::equilibrium::SynchronousSolution;
use gridcert::simulator::{InputMode, SimStats, Termination};
use serde::{Deserialize, Serialize};

use crate::scenario::{CertificateKind, SimMode, Spacing, SweepParameter};

/// Full-precision value plus a three-significant-figure rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    #[serde(with = "gridcert::serde_float")]
    pub value: f64,
    pub display: String,
}

impl Quantity {
    pub fn new(value: f64) -> Quantity {
        Quantity {
            value,
            display: sig3(value),
        }
    }
}

impl From<f64> for Quantity {
    fn from(value: f64) -> Self {
        Quantity::new(value)
    }
}

/// Rounds to three significant figures, printed without an exponent.
pub fn sig3(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let magnitude = |v: f64| v.abs().log10().floor() as i32;
    let round = |v: f64, decimals: i32| {
        let f = 10f64.powi(decimals);
        (v * f).round() / f
    };
    let mut decimals = 2 - magnitude(x);
    let mut r = round(x, decimals);
    // 9.996 rounds up to 10.0, which has one more integer digit
    if magnitude(r) != magnitude(x) {
        decimals = 2 - magnitude(r);
        r = round(x, decimals);
    }
    format!("{:.*}", decimals.max(0) as usize, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Hex SHA-256 of the scenario file.
    pub scenario_hash: String,
}

impl Metadata {
    pub fn new(command: &str, scenario_hash: &str) -> Metadata {
        Metadata {
            tool: "gridcert".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            scenario_hash: scenario_hash.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBlock {
    pub omega_star: Quantity,
    pub residual_norm: Quantity,
    pub security_ok: bool,
    pub solution: SynchronousSolution,
}

impl EquilibriumBlock {
    pub fn new(solution: SynchronousSolution) -> EquilibriumBlock {
        EquilibriumBlock {
            omega_star: solution.omega_star.into(),
            residual_norm: solution.residual_norm.into(),
            security_ok: solution.security_ok,
            solution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBlock {
    pub certificate: CertificateKind,
    pub pass: bool,
    /// Smallest bus margin.
    pub margin: Quantity,
    pub report: CertificateReport,
}

impl CertificateBlock {
    pub fn new(certificate: CertificateKind, report: CertificateReport) -> CertificateBlock {
        CertificateBlock {
            certificate,
            pass: report.pass,
            margin: min_margin(&report).into(),
            report,
        }
    }
}

pub fn min_margin(report: &CertificateReport) -> f64 {
    report.buses.iter().map(|b| b.margin).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationStatus {
    /// No state moved by more than the settling tolerance.
    Stationary,
    Converged,
    NotConverged,
    SingularityStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub mode: SimMode,
    pub input: InputMode,
    pub horizon: f64,
    pub samples: usize,
    pub status: SimulationStatus,
    pub termination: Termination,
    pub settling_time: Option<Quantity>,
    /// `max_i |omega_i(T) - omega_star|`.
    pub final_frequency_deviation: Quantity,
    pub max_drift: Quantity,
    /// Largest mismatch between the sampled storage derivative and the
    /// dissipation rate.
    pub passivity_residual: Option<Quantity>,
    pub stats: SimStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Column {
    #[serde(with = "gridcert::serde_float")]
    pub sigma: f64,
    pub k_max: Option<Quantity>,
    #[serde(with = "gridcert::serde_float::option")]
    pub k_fail: Option<f64>,
    pub rho: Option<Rho>,
    pub evaluations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Block {
    pub bus: String,
    pub bracket: [f64; 2],
    pub tol: f64,
    pub columns: Vec<Table2Column>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub pass: bool,
    /// Smallest bus margin of the certificate.
    pub margin: Quantity,
    /// Margin of the swept bus.
    pub bus_margin: Quantity,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub bus: String,
    pub certificate: CertificateKind,
    pub spacing: Spacing,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub metadata: Metadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table2: Option<Table2Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ReportDocument {
    pub fn new(metadata: Metadata) -> ReportDocument {
        ReportDocument {
            metadata,
            equilibrium: None,
            certificates: Vec::new(),
            simulation: None,
            table2: None,
            sweep: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<ReportDocument, serde_json::Error> {
        serde_json::from_str(s)
    }
}
