//! Discrete linear Hamiltonian systems on integer lattices.
//!
//! The crate works with systems
//!
//! ```text
//! Δu(t) = A(t) u(t+1) + B(t) v(t)
//! Δv(t) = (C(t) − λ W(t)) u(t+1) − A*(t) v(t)
//! ```
//!
//! on a finite window of the lattice, standing in for a half-line. It builds
//! recessive solutions, tests disconjugacy, counts square-summable solutions
//! and describes the Friedrichs extension through boundary conditions at the
//! left endpoint and a limit functional at infinity.

pub mod error;
pub mod linalg;
pub mod lattice;
pub mod propagation;
pub mod conjoined;
pub mod convert;
pub mod disconjugacy;
pub mod extension;
pub mod io;
pub mod report;

pub use error::{Error, Result};
pub use lattice::{ConjoinedBasis, HamiltonianSystem, LatticeWindow, Tolerances, Trajectory};
