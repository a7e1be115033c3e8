//! Certified lower and upper expectation bounds for imprecise continuous-time Markov
//! chains.
//!
//! The lower expectation `h_t = lowT_t h` solves `dh_t/dt = lowQ h_t`, where `lowQ` is
//! the componentwise minimum of `Qh` over a polyhedral set of rate matrices. The
//! adaptive solver advances with matrix exponentials of a single minimising matrix for
//! as long as the trajectory provably stays in that matrix's normal cone, and accounts
//! for every deviation with a certified error bound.

pub mod cones;
pub mod error;
pub mod expstep;
pub mod fixtures;
mod linalg;
pub mod lp;
pub mod model;
mod simplex;
pub mod solver;
pub mod tol;

pub use error::{Error, Result};
pub use model::{Gamble, ImpreciseQMatrix, Metrics, QMatrix};
