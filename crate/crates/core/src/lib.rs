//! Volterra polynomial models: identification from piecewise-constant test
//! signals, simulation, amplitude design, first-kind equation inversion with
//! blow-up estimation, and delayed-feedback regulation.

pub mod amplitude;
pub mod control;
pub mod error;
pub mod grid;
pub mod identification;
pub mod io;
pub mod lambert;
pub mod polyeq;
pub mod reference;
pub mod signals;
pub mod simulation;
pub mod suite;

pub use error::{Error, ErrorKind, Result};
