//! Random access over the Gaussian multiple-access channel with
//! physical-layer network coding.
//!
//! - [`field`]: prime-field arithmetic and dense matrices (rank, solve).
//! - [`analytics`]: closed-form throughput of ALOHA, multipacket reception,
//!   CSI-ignorant coding, network coding, and the full-CSI upper bound.
//! - [`protocol`]: equation-level simulation of the network-coded scheme.
//! - [`monte_carlo`]: reproducible estimation of decoding success.
//! - [`cli`]: the `plnc` command-line front end producing CSV tables.

pub mod analytics;
pub mod cli;
pub mod field;
pub mod monte_carlo;
pub mod protocol;

pub use analytics::{evaluate_all, SystemParams, ThroughputReport};
pub use field::{FieldElement, FieldError, FieldMatrix, PrimeField};
pub use protocol::{ProtocolConfig, ProtocolError};
