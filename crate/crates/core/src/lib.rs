//! Richardson eigenvector purification with chaos-control shift scheduling.
//!
//! Given a real symmetric operator `H` and its eigenvalues, the eigenvector
//! of a chosen level is obtained by repeatedly applying `H - e_j` for the
//! other eigenvalues `e_j`. Applied in a fixed order this product is
//! violently unstable in floating point; [`richardson::run_stabilized`]
//! instead chooses each shift from a weight array that tracks which
//! unwanted components are currently largest.
//!
//! Modules:
//! * [`la`]: state vectors, symmetric operators, shifted products
//! * [`eigensolve`]: implicit QL eigenvalues, spectrum statistics, a Jacobi
//!   reference decomposition
//! * [`richardson`]: naive and stabilized purification
//! * [`diagnostics`]: error measures, Lyapunov estimates, ratio bounds
//! * [`su2`]: total angular momentum of coupled spins
//! * [`io`]: text formats for matrices, vectors and eigenvalues
//! * [`rng`]: the seeded generator behind every random draw

pub mod diagnostics;
pub mod eigensolve;
pub mod io;
pub mod la;
pub mod richardson;
pub mod rng;
pub mod su2;

pub use eigensolve::{Spectrum, TridiagonalMatrix};
pub use la::{HermitianOperator, StateVector};
pub use richardson::{Reference, RunConfig, RunResult, WeightScale};
