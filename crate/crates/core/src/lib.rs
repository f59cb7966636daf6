//! Numerical laboratory for the Born–Infeld scalar: an `M`-dimensional membrane
//! described as a graph `z(t, x)` in `(M+2)`-dimensional Minkowski space, with
//! `M ∈ {1, 2}` on periodic lattices.
//!
//! * [`grid`]: lattices, stencils, quadrature, refinement.
//! * [`field`]: slices `(z, p = z_t)`, gradients and `Γ = 1 − p² + |∇z|²`, initial data.
//! * [`stress`]: the conserved currents `H^{αβ}` and their algebraic identities.
//! * [`charges`]: translation and Lorentz charges, energy moments.
//! * [`evolve`]: method-of-lines evolution and run records.
//! * [`hyper1d`]: first-order form for `M = 1`: characteristics and flux-form solvers.
//! * [`lab`]: conservation residuals, file formats, convergence harness, CLI.

pub mod charges;
pub mod error;
pub mod evolve;
pub mod field;
pub mod grid;
pub mod hyper1d;
pub mod lab;
pub mod stress;

pub use error::{LabError, Result};
pub use evolve::{simulate, RunRecord, Scheme, SolverConfig};
pub use field::{make_initial, FieldState, InitialKind, InitialSpec};
pub use grid::{Grid, ScalarLattice, StencilOrder};
