//! Logical-qubit error simulation for surface codes driven by a cavity-QED
//! photonic network.
//!
//! Atoms trapped in single-sided cavities hold the data qubits; ancillary
//! photons are routed through switches and circulators, reflect off the
//! cavities, and a final polarization measurement reads out a stabilizer
//! parity. The crate models the three error sources that dominate such a
//! network — photon loss, pulse-delay distortion, and `T2` dephasing — maps
//! them onto stochastic Pauli channels with correlated syndrome flips, and
//! estimates logical error rates with a Pauli-frame Monte Carlo engine and a
//! minimum-weight perfect-matching decoder that can exploit heralded photon
//! loss.
//!
//! Modules mirror the pipeline:
//!
//! * [`cavity`] — reflection response functions, delays, pulse-overlap
//!   factors and per-gate loss probabilities.
//! * [`optimize`] — deterministic search for the `(kappa_ex, pulse_length)`
//!   operating point of a given network structure.
//! * [`noise`] — twirled measurement channels, loss backaction and
//!   dephasing rules.
//! * [`layout`] / [`network`] — the planar code lattice, cavity assignment,
//!   photon paths and measurement schedules.
//! * [`sim`] — Pauli-frame shot simulation.
//! * [`decoder`] — detector graphs, blossom matching, uniform and
//!   loss-weighted decoding.
//! * [`harness`] — campaign orchestration, requirement-boundary search and
//!   result/manifest emission.

pub mod cavity;
pub mod config;
pub mod decoder;
pub mod harness;
pub mod layout;
pub mod manifest;
pub mod network;
pub mod noise;
pub mod optimize;
pub mod report;
pub mod sim;

pub use cavity::{CavityParams, DelayProfile, PulseParams};
pub use config::ExperimentConfig;
pub use layout::CodeLayout;
pub use network::{NetworkStructure, StructureKind};
pub use noise::{NoiseBudget, TwirledChannel};
pub use sim::{RunConfig, ShotRecord};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
