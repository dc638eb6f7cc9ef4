//! Shape optimization on deforming triangular meshes.
//!
//! The crate computes shape gradients of PDE-constrained objectives with respect to
//! Sobolev-type outer metrics `(id - A Δ)^s`, realized as a cascade of `s` vector
//! Helmholtz solves, and with respect to the Steklov–Poincaré inner metric (a linear
//! elasticity form with a spatially varying Lamé parameter). A Riemannian
//! steepest-descent loop moves the mesh nodes along the negative gradient.
//!
//! Two model problems ship with the crate:
//!
//! * [`problems::InterfaceProblem`]: identify the interface between two conductivities
//!   from interior measurements of a pure-Neumann diffusion state.
//! * [`problems::ComplianceProblem`]: minimize the compliance plus a volume penalty of a
//!   plane linear-elastic structure by moving the boundaries of its holes.
//!
//! Everything is discretized with piecewise linear (P1) finite elements.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod field;
pub mod mesh;
pub mod metrics;
pub mod optimizer;
pub mod par;
pub mod problems;

#[cfg(test)]
mod testutil;

pub use error::{Error, MeshError, SolveError};
pub use field::{Arity, LinearFunctional, NodalField};
pub use mesh::{BoundaryEdge, Marker, Mesh, Point};
pub use metrics::MetricSpec;
pub use optimizer::{DescentConfig, History, IterationRecord, StopRule, Termination};

pub type Result<T, E = Error> = std::result::Result<T, E>;
