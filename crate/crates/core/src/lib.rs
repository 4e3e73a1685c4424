//! q-umbral calculus engine.
//!
//! * [`qcore`]: q-brackets, umbral factors and arcsinh coefficients.
//! * [`opspace`]: truncated coefficient spaces and operator matrices
//!   (`T`, `Δ`, `x`, `β x`, Euler) with interior bookkeeping.
//! * [`qfun`]: umbral q-exponentials, q-gaussians, shifted powers and the
//!   generalized Hermite solutions.
//! * [`lattice`]: geometric lattices and the recurrence marchers used as
//!   independent oracles.
//! * [`heat`]: the q-heat equation, its polynomial and series solutions and
//!   its six symmetry generators.
//! * [`cli`]: the `qumbra` command line.

pub mod cli;
pub mod error;
pub mod heat;
pub mod lattice;
pub mod opspace;
pub mod qcore;
pub mod qfun;

pub use error::{Error, Result};
pub use opspace::{BiCoeffSeries, CoeffSeries, OperatorMatrix};
pub use qcore::{QContext, Variant};
