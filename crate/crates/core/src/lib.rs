//! Scan-chain locking, oracle simulation and SAT-based key recovery.
//!
//! The pipeline: [`defense`] locks a design's scan path, [`oracle::Oracle`]
//! plays the manufactured chip, [`model::LockedModel`] turns the keyed scan
//! transaction into a combinational locked circuit, and [`attack`] runs the
//! oracle-guided SAT attack on it.

pub mod attack;
pub mod bench;
pub mod circuits;
pub mod cnf;
pub mod defense;
pub mod model;
pub mod netlist;
pub mod oracle;
pub mod scanarch;
pub mod solver;

pub use attack::{AttackConfig, AttackMode, AttackResult, Outcome};
pub use defense::{GoldenSecret, ObfuscatedDesign};
pub use model::{LockedModel, ModelKind};
pub use netlist::Netlist;
pub use oracle::Oracle;
