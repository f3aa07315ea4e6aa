use std::path::PathBuf;

use gridcert::certificates::CertificateError;
use gridcert::equilibrium::EquilibriumError;
use gridcert::network::ModelError;
use gridcert::simulator::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}{}: {message}", path.display(), location_suffix(*.location))]
    Scenario {
        path: PathBuf,
        /// One-based line and column, when the problem has a source position.
        location: Option<(usize, usize)>,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("equilibrium: {0}")]
    Equilibrium(#[from] EquilibriumError),
    #[error("certificate: {0}")]
    Certificate(#[from] CertificateError),
    #[error("simulation: {0}")]
    Simulation(#[from] SimError),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn location_suffix(location: Option<(usize, usize)>) -> String {
    location.map_or_else(String::new, |(l, c)| format!(":{l}:{c}"))
}

impl CliError {
    /// Process exit status: every error maps to 2.
    pub fn exit_code(&self) -> u8 {
        2
    }
}
