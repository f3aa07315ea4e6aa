//! Decentralized frequency-stability certificates for structure-preserving
//! power network models.

pub mod certificates;
pub mod equilibrium;
pub mod lti;
pub mod network;
pub mod poly;
pub mod serde_float;
pub mod simulator;
