//! Variational solvers and a verification suite for periodic orbits near
//! heteroclinic connections: T-periodic brake orbits of u'' = W_u(u) and
//! L-periodic-in-x solutions of Delta u = W_u(u) on a strip, computed by
//! direct minimization of the action on symmetry-reduced domains, plus
//! quantitative checks of the identities and decay estimates the solutions
//! satisfy.

pub mod brake1d;
pub mod diagnostics;
pub mod eig;
pub mod error;
pub mod fiber;
pub mod grid;
pub mod interp;
pub mod minimize;
pub mod potential;
pub mod profile1d;
pub mod strip2d;
mod sum;

pub use error::{Error, Result};
pub use grid::{Field2D, Grid1D, Grid2D, Path1D};
pub use minimize::{gradient_check, minimize, MinimizeConfig, MinimizeResult};
pub use potential::{
    check_h1, nondegeneracy_constants, sigma_and_m, NondegeneracyConstants, Potential,
    PotentialKind, PotentialSpec,
};
pub use profile1d::{solve_connection, Connection, Sign};
pub use sum::{pairwise, pairwise_by};
