//! Fidelity freeze and decay in two-level bosonic k-body embedded random-matrix ensembles.

pub mod dynamics;
pub mod ensemble;
pub mod experiments;
pub mod error;
pub mod fock;

pub use error::{Error, Result};
