use super::{scatter_vertex_coeffs, tangent, ShapeProblem};
use crate::error::Error;
use crate::fem::{
    assemble_mass, assemble_stiffness, boundary_load, p1_gradients, solve_bordered, BoundaryData,
    SolverOptions,
};
use crate::field::{dot, Arity, LinearFunctional, NodalField};
use crate::mesh::{Marker, Mesh, PointLocator, REGION_INSIDE};
use crate::par;

/// Means below this fraction of the sup norm are treated as roundoff.
const MEAN_SLACK: f64 = 1e-13;

/// Measurement data: a state computed on a reference mesh, evaluated anywhere by P1
/// interpolation.
#[derive(Clone, Debug)]
pub struct Target {
    locator: PointLocator,
    values: Vec<f64>,
}

impl Target {
    pub fn new(reference: &Mesh, values: NodalField) -> Result<Target, Error> {
        values.check_nodes(Arity::Scalar, reference.node_count())?;
        Ok(Target {
            locator: PointLocator::new(reference),
            values: values.into_values(),
        })
    }

    pub fn reference_values(&self) -> &[f64] {
        &self.values
    }

    /// Target values at the nodes of `mesh`, shifted to zero mean on `mesh`.
    pub fn on_mesh(&self, mesh: &Mesh) -> NodalField {
        self.on_mesh_with_gradient(mesh).0
    }

    /// Zero-mean target values and interpolant gradients at the nodes of `mesh`.
    ///
    /// The shift does not enter the shape derivative: its derivative multiplies
    /// `∫(y − ȳ)`, which vanishes.
    pub fn on_mesh_with_gradient(&self, mesh: &Mesh) -> (NodalField, Vec<[f64; 2]>) {
        let vg = par::map(mesh.nodes(), |&p| self.locator.value_and_gradient(&self.values, p));
        let (v, g): (Vec<f64>, Vec<[f64; 2]>) = vg.into_iter().unzip();
        let mut v = NodalField::scalar(v);
        let m = mean(mesh, &v);
        if m.abs() > MEAN_SLACK * v.max_abs() {
            for x in v.values_mut() {
                *x -= m;
            }
        }
        (v, g)
    }
}

/// Identify the interface between two conductivities from interior data:
/// minimize `½∫(y − ȳ)² + ν|∂Ω_in|` subject to `−div(κ∇y) = 0`, `κ ∂y/∂n = g` on the
/// outer boundary, `∫y = 0`.
#[derive(Clone, Debug)]
pub struct InterfaceProblem {
    pub kappa_in: f64,
    pub kappa_out: f64,
    /// Constant normal flux on the outer boundary.
    pub flux: f64,
    /// Perimeter weight.
    pub nu: f64,
    pub target: Option<Target>,
    pub solver: SolverOptions,
}

#[derive(Clone, Debug)]
pub struct InterfaceState {
    pub y: NodalField,
    /// Multiplier of the zero-mean constraint in the state equation.
    pub lambda: f64,
    pub ybar: NodalField,
    pub ybar_grad: Vec<[f64; 2]>,
    pub p: NodalField,
    /// Multiplier of the zero-mean constraint in the adjoint equation.
    pub mu: f64,
}

impl InterfaceProblem {
    pub fn new(kappa_in: f64, kappa_out: f64, flux: f64, nu: f64) -> Result<InterfaceProblem, Error> {
        for (name, k) in [("kappa_in", kappa_in), ("kappa_out", kappa_out)] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {k}")));
            }
        }
        if kappa_in == kappa_out {
            return Err(Error::InvalidParameter(
                "kappa_in equals kappa_out, the interface is not identifiable".into(),
            ));
        }
        if !(nu >= 0.0) || !flux.is_finite() {
            return Err(Error::InvalidParameter(format!("nu = {nu}, flux = {flux}")));
        }
        Ok(InterfaceProblem {
            kappa_in,
            kappa_out,
            flux,
            nu,
            target: None,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }

    pub fn cell_kappa(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.cell_region()
            .iter()
            .map(|&r| if r == REGION_INSIDE { self.kappa_in } else { self.kappa_out })
            .collect()
    }

    /// State `y` and the multiplier absorbing the net boundary flux.
    pub fn state(&self, mesh: &Mesh) -> Result<(NodalField, f64), Error> {
        let k = assemble_stiffness(mesh, Arity::Scalar, &self.cell_kappa(mesh))?;
        let b = if self.flux == 0.0 {
            LinearFunctional::zeros(Arity::Scalar, mesh.node_count())
        } else {
            boundary_load(mesh, Marker::Outer, BoundaryData::Scalar(self.flux))?
        };
        Ok(solve_bordered(&k, &b, mesh, &self.solver)?)
    }

    /// Solves the state on `reference` and wraps it as measurement data.
    pub fn generate_target(&self, reference: &Mesh) -> Result<Target, Error> {
        let (y, _) = self.state(reference)?;
        Target::new(reference, y)
    }

    /// Adjoint `p` with `∫κ∇φ·∇p = −∫(y − ȳ)φ` for all zero-mean `φ`, and its multiplier.
    pub fn adjoint(&self, mesh: &Mesh, y: &NodalField, ybar: &NodalField) -> Result<(NodalField, f64), Error> {
        y.check_nodes(Arity::Scalar, mesh.node_count())?;
        ybar.check_nodes(Arity::Scalar, mesh.node_count())?;
        let k = assemble_stiffness(mesh, Arity::Scalar, &self.cell_kappa(mesh))?;
        let m = assemble_mass(mesh, Arity::Scalar);
        let e: Vec<f64> = y.values().iter().zip(ybar.values()).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = m.mul_vec(&e).iter().map(|v| -v).collect();
        Ok(solve_bordered(&k, &LinearFunctional::from_coeffs(Arity::Scalar, rhs), mesh, &self.solver)?)
    }

    fn target(&self) -> Result<&Target, Error> {
        self.target
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("interface problem has no target".into()))
    }

    /// `½ (y − ȳ)ᵀ M (y − ȳ) + ν |shape|`.
    pub fn objective_value(&self, mesh: &Mesh, y: &NodalField, ybar: &NodalField) -> f64 {
        let m = assemble_mass(mesh, Arity::Scalar);
        let e: Vec<f64> = y.values().iter().zip(ybar.values()).map(|(a, b)| a - b).collect();
        0.5 * m.bilinear(&e, &e) + self.nu * mesh.shape_length()
    }

    /// Assembled shape derivative for a consistent state/adjoint pair.
    pub fn derivative(&self, mesh: &Mesh, s: &InterfaceState) -> LinearFunctional {
        let n = mesh.node_count();
        let kappa = self.cell_kappa(mesh);
        let y = s.y.values();
        let p = s.p.values();
        let e: Vec<f64> = y.iter().zip(s.ybar.values()).map(|(a, b)| a - b).collect();
        let (lambda, mu) = (s.lambda, s.mu);

        let per_element = par::map_range(mesh.triangle_count(), |t| {
            let tri = mesh.triangles()[t];
            let (area, g) = p1_gradients(mesh.triangle_points(t));
            let grad = |v: &[f64]| {
                let mut out = [0.0; 2];
                for a in 0..3 {
                    out[0] += v[tri[a]] * g[a][0];
                    out[1] += v[tri[a]] * g[a][1];
                }
                out
            };
            let (gy, gp) = (grad(y), grad(p));
            let ev = [e[tri[0]], e[tri[1]], e[tri[2]]];
            // Exact ∫_T e² for P1 e.
            let e2 = area / 6.0
                * (ev[0] * ev[0] + ev[1] * ev[1] + ev[2] * ev[2] + ev[0] * ev[1] + ev[1] * ev[2] + ev[0] * ev[2]);
            let y_t = (y[tri[0]] + y[tri[1]] + y[tri[2]]) / 3.0;
            let pbar_t = (p[tri[0]] + p[tri[1]] + p[tri[2]]) / 3.0;
            let div_coeff = 0.5 * e2 + area * (lambda * pbar_t + mu * y_t);
            let k_area = kappa[t] * area;
            let gy_gp = gy[0] * gp[0] + gy[1] * gp[1];
            let mut out = [[0.0; 2]; 3];
            for a in 0..3 {
                let ga = g[a];
                let ga_gp = ga[0] * gp[0] + ga[1] * gp[1];
                let ga_gy = ga[0] * gy[0] + ga[1] * gy[1];
                for c in 0..2 {
                    out[a][c] = div_coeff * ga[c] + k_area * (gy_gp * ga[c] - ga_gp * gy[c] - ga_gy * gp[c]);
                }
            }
            out
        });
        let mut dj = LinearFunctional::zeros(Arity::Vector2, n);
        scatter_vertex_coeffs(mesh, &per_element, &mut dj);

        let me = assemble_mass(mesh, Arity::Scalar).mul_vec(&e);
        let c = dj.coeffs_mut();
        for j in 0..n {
            c[2 * j] -= me[j] * s.ybar_grad[j][0];
            c[2 * j + 1] -= me[j] * s.ybar_grad[j][1];
        }
        let nodes = mesh.nodes();
        if self.flux != 0.0 {
            for edge in mesh.edges_with(Marker::Outer) {
                let [a, b] = edge.nodes;
                let (t, _) = tangent(nodes[a], nodes[b]);
                let w = self.flux * 0.5 * (p[a] + p[b]);
                for d in 0..2 {
                    c[2 * a + d] += w * t[d];
                    c[2 * b + d] -= w * t[d];
                }
            }
        }
        if self.nu != 0.0 {
            for edge in mesh.edges_with(Marker::Shape) {
                let [a, b] = edge.nodes;
                let (t, _) = tangent(nodes[a], nodes[b]);
                for d in 0..2 {
                    c[2 * a + d] -= self.nu * t[d];
                    c[2 * b + d] += self.nu * t[d];
                }
            }
        }
        dj
    }
}

impl ShapeProblem for InterfaceProblem {
    type State = InterfaceState;

    fn solve(&self, mesh: &Mesh) -> Result<InterfaceState, Error> {
        let (ybar, ybar_grad) = self.target()?.on_mesh_with_gradient(mesh);
        let (y, lambda) = self.state(mesh)?;
        let (p, mu) = self.adjoint(mesh, &y, &ybar)?;
        Ok(InterfaceState {
            y,
            lambda,
            ybar,
            ybar_grad,
            p,
            mu,
        })
    }

    fn objective(&self, mesh: &Mesh, state: &InterfaceState) -> f64 {
        self.objective_value(mesh, &state.y, &state.ybar)
    }

    fn shape_derivative(&self, mesh: &Mesh, state: &InterfaceState) -> Result<LinearFunctional, Error> {
        Ok(self.derivative(mesh, state))
    }

    fn export_fields(&self, state: &InterfaceState) -> Vec<(String, NodalField)> {
        vec![
            ("y".into(), state.y.clone()),
            ("ybar".into(), state.ybar.clone()),
            ("p".into(), state.p.clone()),
        ]
    }
}

/// Discrete mean `∫ v dx / |Ω|` of a scalar field.
pub(crate) fn mean(mesh: &Mesh, v: &NodalField) -> f64 {
    dot(&crate::fem::lumped_mass(mesh), v.values()) / mesh.area()
}
