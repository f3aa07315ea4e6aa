//! Decentralized stability certificates: incremental small-gain, secant and
//! Popov-type positive realness, plus the coupling bound check they rely on.

mod popov;
mod secant;
mod small_gain;

pub use popov::{
    lemma3_psd_check, max_droop_search, popov_check, DroopSearch, Lemma3Result, PopovOptions, Rho, RhoGrid, RhoRow,
};
pub use secant::{cascade_decompose, secant_check, secant_factor, BlockKind, CascadeBlock, CascadeDecomposition, OutputMapMode};
pub use small_gain::{block_l2_gain, small_gain_check, small_gain_check_auto};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::LtiError;

/// Margins at or below this value do not certify anything.
pub const STRICT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("bus {bus}: {kind} dynamics are not covered by this certificate")]
    Unsupported { bus: String, kind: String },
    #[error("no gain supplied for generator bus {bus}")]
    IncompleteGains { bus: String },
    #[error("the Popov-type certificate needs every bus to carry inertia; load buses: {loads:?}")]
    UnsupportedTopologyForPopov { loads: Vec<String> },
    #[error("sigma is zero on bus {bus}, which has incident lines")]
    DivisionByZeroSigma { bus: usize },
    #[error("expected {expected} sigma values, got {got}")]
    SigmaLength { expected: usize, got: usize },
    #[error("droop search bracket [{lo}, {hi}]: {reason}")]
    BracketError { lo: f64, hi: f64, reason: String },
    #[error("bus {bus} has no adjustable droop gain")]
    NotADroopBus { bus: usize },
    #[error("invalid rho grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    SmallGain,
    Secant,
    Popov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Margin within [`STRICT_MARGIN`] of zero.
    Borderline,
}

impl Verdict {
    pub fn from_margin(margin: f64) -> Verdict {
        if margin > STRICT_MARGIN {
            Verdict::Pass
        } else if margin >= -STRICT_MARGIN {
            Verdict::Borderline
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Parameters that entered a bus-level decision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BusParameters {
    #[serde(skip_serializing_if = "Option::is_none", default, with = "crate::serde_float::option")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "crate::serde_float::option")]
    pub secant_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "crate::serde_float::option")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Rho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusEntry {
    pub bus: usize,
    pub label: String,
    pub test: TestKind,
    pub verdict: Verdict,
    pub pass: bool,
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    pub parameters: BusParameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma3_psd: Option<Lemma3Result>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_found: Option<Rho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub test: TestKind,
    pub pass: bool,
    pub buses: Vec<BusEntry>,
    pub network: NetworkEntry,
    /// Per-rho bus margins for the Popov search.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rho_table: Vec<RhoRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl CertificateReport {
    fn from_entries(test: TestKind, buses: Vec<BusEntry>) -> Self {
        CertificateReport {
            test,
            pass: buses.iter().all(|b| b.pass),
            buses,
            network: NetworkEntry::default(),
            rho_table: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn bus(&self, index: usize) -> Option<&BusEntry> {
        self.buses.iter().find(|b| b.bus == index)
    }
}

fn entry(bus: usize, label: &str, test: TestKind, margin: f64, parameters: BusParameters) -> BusEntry {
    let verdict = Verdict::from_margin(margin);
    BusEntry {
        bus,
        label: label.to_string(),
        test,
        verdict,
        pass: verdict.passed(),
        margin,
        parameters,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_verdicts() {
        assert_eq!(Verdict::from_margin(1e-6), Verdict::Pass);
        assert_eq!(Verdict::from_margin(1e-10), Verdict::Borderline);
        assert_eq!(Verdict::from_margin(0.0), Verdict::Borderline);
        assert_eq!(Verdict::from_margin(-1e-6), Verdict::Fail);
        assert_eq!(Verdict::from_margin(f64::INFINITY), Verdict::Pass);
    }
}
