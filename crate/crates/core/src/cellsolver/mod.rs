//! Discretized Dirichlet cell problems on two-dimensional boxes.
//!
//! [`solve_ld`] minimizes over continuous bilinear fields on a uniform
//! quadrilateral mesh; [`solve_sbd`] over element-wise bilinear fields whose
//! facet jumps pay a surface energy. Both use 2×2 Gauss quadrature, a smoothed
//! integrand and L-BFGS, with seeded multistarts reduced deterministically.

pub mod grid;
pub mod integrand;
pub mod lbfgs;
pub mod ld;
pub mod sbd;

pub use grid::{BoundaryData, Grid, GridDisplacement};
pub use integrand::{
    check_flags, integrand_from_id, surface_from_id, Flags, Integrand, SurfaceIntegrand,
};
pub use ld::{
    boundary_l1_gap, m_continuity_check, solve_ld, solve_ld_warm, solve_periodic, CellSpec,
    ContinuityReport, Diagnostics, LdProblem, LdSolution, SolverOptions,
};
pub use sbd::{solve_sbd, Facet, SbdField, SbdSolution};
