//! Numerical toolkit for Lévy-type operators whose measures have
//! O-regularly varying tails: measure families and their scale functions,
//! index estimation, Fourier symbols, transition densities, Monte Carlo
//! simulation, function-space norms and a spectral solver for the
//! associated non-local parabolic problem.

pub mod coefficient;
pub mod density;
pub mod error;
pub mod expr;
pub mod grid;
pub mod io;
pub mod measures;
pub mod orv;
pub mod profile;
pub mod quad;
pub mod simulate;
pub mod solver;
pub mod spaces;
pub mod symbol;
pub mod verify;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
