//! Sparse Krylov solvers and simple preconditioners.

mod krylov;
mod precond;
pub mod vector;

pub use krylov::{
    cg, cg_with_guess, gmres, gmres_with_guess, minres, minres_with_guess, SolverReport,
};
pub use precond::{
    make_preconditioner, BlockDiag, Identity, Jacobi, Preconditioner, PreconditionerInput,
    PreconditionerKind, Ssor, SCHUR_SWEEPS, SSOR_OMEGA,
};

/// Relative tolerance for inner (velocity-pressure, potential) solves.
pub const INNER_TOL: f64 = 1e-10;
/// Relative tolerance for mass-matrix and projection solves.
pub const MASS_TOL: f64 = 1e-13;
/// GMRES restart length for the singular potential solve.
pub const GMRES_RESTART: usize = 200;
