use super::{scatter_vertex_coeffs, tangent, ShapeProblem};
use crate::error::Error;
use crate::fem::{
    apply_dirichlet, assemble_elasticity, body_load, boundary_load, node_mask_to_dofs, p1_gradients,
    solve_spd_with, BoundaryData, SolverOptions,
};
use crate::field::{dot, Arity, LinearFunctional, NodalField};
use crate::mesh::{Marker, Mesh};
use crate::par;

/// Compliance of a clamped plane-elastic structure plus a volume penalty:
/// `J(Ω) = ∫ f·y + ∫_{Γ_N} g·y + ℓ|Ω|`.
#[derive(Clone, Debug)]
pub struct ComplianceProblem {
    pub body_force: [f64; 2],
    pub traction: [f64; 2],
    pub young: f64,
    pub poisson: f64,
    pub volume_weight: f64,
    pub solver: SolverOptions,
}

#[derive(Clone, Debug)]
pub struct ComplianceState {
    pub y: NodalField,
}

impl ComplianceProblem {
    pub fn new(
        body_force: [f64; 2],
        traction: [f64; 2],
        young: f64,
        poisson: f64,
        volume_weight: f64,
    ) -> Result<ComplianceProblem, Error> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::InvalidParameter(format!("Young's modulus {young}")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::InvalidParameter(format!("Poisson ratio {poisson}")));
        }
        if !(volume_weight >= 0.0 && volume_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("volume weight {volume_weight}")));
        }
        if !body_force.iter().chain(&traction).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite load".into()));
        }
        Ok(ComplianceProblem {
            body_force,
            traction,
            young,
            poisson,
            volume_weight,
            solver: SolverOptions::default(),
        })
    }

    /// First Lamé parameter.
    pub fn lame_lambda(&self) -> f64 {
        self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
    }

    /// Shear modulus.
    pub fn lame_mu(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// `v ↦ ∫ f·v + ∫_{Γ_N} g·v`.
    pub fn load(&self, mesh: &Mesh) -> Result<LinearFunctional, Error> {
        let mut l = body_load(mesh, self.body_force);
        if mesh.has_marker(Marker::Neumann) {
            l.add_scaled(1.0, &boundary_load(mesh, Marker::Neumann, BoundaryData::Vector(self.traction))?);
        } else if self.traction != [0.0, 0.0] {
            return Err(Error::InvalidParameter("traction given but mesh has no neumann boundary".into()));
        }
        Ok(l)
    }

    /// Displacement clamped on the Dirichlet boundary.
    pub fn state(&self, mesh: &Mesh) -> Result<NodalField, Error> {
        let clamped = mesh.nodes_with(Marker::Dirichlet);
        if !clamped.iter().any(|&c| c) {
            return Err(Error::InvalidParameter("no dirichlet boundary, elasticity system is singular".into()));
        }
        let mu = NodalField::scalar(vec![self.lame_mu(); mesh.node_count()]);
        let k = assemble_elasticity(mesh, &mu, self.lame_lambda())?;
        let f = self.load(mesh)?;
        let (k, b) = apply_dirichlet(&k, f.coeffs(), &node_mask_to_dofs(&clamped, Arity::Vector2));
        Ok(NodalField::from_values(Arity::Vector2, solve_spd_with(&k, &b, &self.solver)?))
    }

    pub fn objective_value(&self, mesh: &Mesh, y: &NodalField) -> Result<f64, Error> {
        let f = self.load(mesh)?;
        Ok(dot(f.coeffs(), y.values()) + self.volume_weight * mesh.area())
    }

    pub fn derivative(&self, mesh: &Mesh, y: &NodalField) -> LinearFunctional {
        let (mu, lambda) = (self.lame_mu(), self.lame_lambda());
        let yv = y.values();
        let f = self.body_force;
        let ell = self.volume_weight;
        let per_element = par::map_range(mesh.triangle_count(), |t| {
            let tri = mesh.triangles()[t];
            let (area, g) = p1_gradients(mesh.triangle_points(t));
            // grad[i][k] = ∂_k y_i
            let mut grad = [[0.0; 2]; 2];
            let mut mean = [0.0; 2];
            for a in 0..3 {
                for i in 0..2 {
                    let v = yv[2 * tri[a] + i];
                    mean[i] += v / 3.0;
                    for k in 0..2 {
                        grad[i][k] += v * g[a][k];
                    }
                }
            }
            let eps = [
                [grad[0][0], 0.5 * (grad[0][1] + grad[1][0])],
                [0.5 * (grad[0][1] + grad[1][0]), grad[1][1]],
            ];
            let tr = eps[0][0] + eps[1][1];
            let mut s = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] = 2.0 * mu * eps[i][j] + if i == j { lambda * tr } else { 0.0 };
                }
            }
            let energy = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| s[i][j] * eps[i][j]).sum::<f64>();
            let div_coeff = -energy + ell + 2.0 * (f[0] * mean[0] + f[1] * mean[1]);
            let mut out = [[0.0; 2]; 3];
            for a in 0..3 {
                let sg = [s[0][0] * g[a][0] + s[0][1] * g[a][1], s[1][0] * g[a][0] + s[1][1] * g[a][1]];
                for k in 0..2 {
                    let gts = grad[0][k] * sg[0] + grad[1][k] * sg[1];
                    out[a][k] = area * (2.0 * gts + div_coeff * g[a][k]);
                }
            }
            out
        });
        let mut dj = LinearFunctional::zeros(Arity::Vector2, mesh.node_count());
        scatter_vertex_coeffs(mesh, &per_element, &mut dj);
        if self.traction != [0.0, 0.0] {
            let nodes = mesh.nodes();
            let c = dj.coeffs_mut();
            for edge in mesh.edges_with(Marker::Neumann) {
                let [a, b] = edge.nodes;
                let (t, _) = tangent(nodes[a], nodes[b]);
                let gy = 0.5
                    * (self.traction[0] * (yv[2 * a] + yv[2 * b]) + self.traction[1] * (yv[2 * a + 1] + yv[2 * b + 1]));
                for d in 0..2 {
                    c[2 * a + d] -= 2.0 * gy * t[d];
                    c[2 * b + d] += 2.0 * gy * t[d];
                }
            }
        }
        dj
    }
}

impl ShapeProblem for ComplianceProblem {
    type State = ComplianceState;

    fn solve(&self, mesh: &Mesh) -> Result<ComplianceState, Error> {
        Ok(ComplianceState { y: self.state(mesh)? })
    }

    fn objective(&self, mesh: &Mesh, state: &ComplianceState) -> f64 {
        self.objective_value(mesh, &state.y).unwrap_or(f64::NAN)
    }

    fn shape_derivative(&self, mesh: &Mesh, state: &ComplianceState) -> Result<LinearFunctional, Error> {
        Ok(self.derivative(mesh, &state.y))
    }

    fn export_fields(&self, state: &ComplianceState) -> Vec<(String, NodalField)> {
        vec![("y".into(), state.y.clone())]
    }
}
