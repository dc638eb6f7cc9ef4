//! Piecewise linear finite elements: assembly, boundary conditions and linear solves.

mod assemble;
pub mod dense;
mod solve;
mod sparse;

pub use assemble::{
    apply_dirichlet, assemble_elasticity, assemble_mass, assemble_stiffness, body_load,
    boundary_load, l2_norm, lumped_mass, node_mask_to_dofs, p1_gradients, BoundaryData,
};
pub use solve::{solve_bordered, solve_spd, solve_spd_with, solve_zero_mean, SolverOptions};
pub use sparse::SparseMatrix;
