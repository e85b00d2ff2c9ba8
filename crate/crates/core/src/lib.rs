//! Distributed HPCG-style solver: a 27-point stencil problem decomposed over
//! a 3D process grid, halo exchange, SpMV and symmetric Gauss-Seidel
//! kernels, a multigrid preconditioner and conjugate gradients.

mod error;
pub mod geometry;
pub mod halo;
pub mod kernels;
pub mod multigrid;
pub mod problem;
pub mod solver;

pub use error::{CoreError, Result};
pub use geometry::{factor_process_grid, rank_coords, Geometry};
pub use halo::{exchange_halo, setup_halo, HaloPlan};
pub use kernels::{dot, spmv, symgs, waxpby, waxpby_in_place};
pub use multigrid::{mg_precondition, prolong_add, restrict_residual, MgConfig, MgLevel};
pub use problem::{
    fill_deterministic, generate_coarse_problem, generate_matrix, generate_problem, CsrMatrix, DistVector,
    Problem,
};
pub use solver::{cg_solve, verify_against_serial, CgOptions, CgResult, PhaseTimes, VerifyReport, VerifyRequest};
