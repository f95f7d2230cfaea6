//! Mutant establishment in the two-type Bare Bones binary-splitting model.
//!
//! The crate is organised around five modules:
//!
//! * [`model`]: parameters, the density map `f`, its translation `g`,
//!   fixed points and Jacobian analysis.
//! * [`flow`]: deterministic orbits, the scaling-limit function `H`,
//!   the scalar Schröder recursion and grid exports.
//! * [`sim`]: exact simulation of the density-dependent process `Z`,
//!   the Galton–Watson approximation `Y`, their shared-uniform coupling
//!   and the glued path.
//! * [`experiments`]: Monte Carlo harnesses comparing simulations with
//!   the limit theorems, plus the statistics they rely on.
//! * [`io`] and [`cli`]: serialization and the command-line surface.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod io;
pub mod model;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
pub use model::{DensityPoint, Deviation, ModelParams};
