//! AC optimal power flow toolkit.
//!
//! Pipeline: parse MATPOWER-style case files into per-unit network models
//! ([`grid`]), solve power flow by Newton-Raphson and check operating limits
//! ([`powerflow`]), label load samples with a primal-dual interior-point OPF
//! oracle ([`opf`]), generate reproducible datasets ([`dataset`]), train a
//! unified elastic-layer voltage-prediction network ([`nn`]), and score it
//! ([`eval`]).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod nn;
pub mod opf;
pub mod par;
pub mod powerflow;

pub use error::{Error, Result};
