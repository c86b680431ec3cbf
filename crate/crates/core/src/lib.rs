//! Entropy production and memory effects for a qubit coupled to a single
//! thermal bosonic mode.

pub mod eprod;
pub mod error;
pub mod jcdyn;
pub mod memdiv;
pub mod qstate;
pub mod rates;
pub mod runner;

pub use error::{Error, Result};
