//! PDE-constrained shape functionals and their shape derivatives.
//!
//! Shape derivatives are assembled as the exact derivative of the discrete objective
//! with respect to the node coordinates, so `J(X + tW) - J(X) = t DJ[W] + O(t²)` holds
//! for the discretized problem itself.

mod compliance;
mod interface;

pub use compliance::{ComplianceProblem, ComplianceState};
pub use interface::{InterfaceProblem, InterfaceState, Target};

use crate::error::Error;
use crate::field::{LinearFunctional, NodalField};
use crate::mesh::Mesh;

/// A shape functional `J(Ω)` constrained by a PDE solved on the current mesh.
pub trait ShapeProblem: Sync {
    type State: Clone + Send + Sync;

    /// Solves the state (and adjoint, if needed) on `mesh`.
    fn solve(&self, mesh: &Mesh) -> Result<Self::State, Error>;

    fn objective(&self, mesh: &Mesh, state: &Self::State) -> f64;

    /// `W ↦ DJ(Ω)[W]` over nodal vector fields.
    fn shape_derivative(&self, mesh: &Mesh, state: &Self::State) -> Result<LinearFunctional, Error>;

    /// Nodes whose deformation is held at zero: every boundary node off the moving shape.
    fn fixed_nodes(&self, mesh: &Mesh) -> Vec<bool> {
        mesh.frame_nodes()
    }

    /// Named nodal fields worth exporting alongside a mesh.
    fn export_fields(&self, state: &Self::State) -> Vec<(String, NodalField)>;

    fn evaluate(&self, mesh: &Mesh) -> Result<(Self::State, f64), Error> {
        let state = self.solve(mesh)?;
        let j = self.objective(mesh, &state);
        Ok((state, j))
    }
}

/// Unit tangent and length of the segment `a → b`.
pub(crate) fn tangent(a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = d[0].hypot(d[1]);
    ([d[0] / len, d[1] / len], len)
}

/// Adds per-element vertex coefficients into a vector functional, in element order.
pub(crate) fn scatter_vertex_coeffs(mesh: &Mesh, per_element: &[[[f64; 2]; 3]], out: &mut LinearFunctional) {
    let c = out.coeffs_mut();
    for (tri, coeffs) in mesh.triangles().iter().zip(per_element) {
        for (a, &node) in tri.iter().enumerate() {
            c[2 * node] += coeffs[a][0];
            c[2 * node + 1] += coeffs[a][1];
        }
    }
}

#[cfg(test)]
mod tests;
