//! Riesz representatives of shape derivatives.
//!
//! `Hs` solves `(B M⁻¹)^{s−1} B V = dJ` with `B = M + A K` as a cascade of `s` vector
//! Helmholtz problems. `SteklovPoincare` solves an elasticity system whose shear modulus
//! is harmonic between `mu_min` on the shape and `mu_max` on the rest of the boundary.
//! Both constrain the deformation to zero at the fixed nodes.

use std::fmt;

use crate::error::Error;
use crate::fem::{
    apply_dirichlet, assemble_elasticity, assemble_mass, assemble_stiffness, node_mask_to_dofs, solve_spd_with,
    SolverOptions, SparseMatrix,
};
use crate::field::{dot, Arity, LinearFunctional, NodalField};
use crate::mesh::{Marker, Mesh};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricSpec {
    /// `(id − AΔ)^s`.
    Hs { order: u32, a: f64 },
    SteklovPoincare { mu_min: f64, mu_max: f64 },
}

impl MetricSpec {
    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            MetricSpec::Hs { order, a } => {
                if order == 0 || !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidParameter(format!("H^s metric with s = {order}, A = {a}")));
                }
            }
            MetricSpec::SteklovPoincare { mu_min, mu_max } => {
                if !(mu_min > 0.0 && mu_min < mu_max && mu_max.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Steklov-Poincare metric with mu_min = {mu_min}, mu_max = {mu_max}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Short name: `sp`, `h1`, `h2`, ...
    pub fn name(&self) -> String {
        match self {
            MetricSpec::Hs { order, .. } => format!("h{order}"),
            MetricSpec::SteklovPoincare { .. } => "sp".into(),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Hs { order, a } => write!(f, "H{order}(A={a})"),
            MetricSpec::SteklovPoincare { mu_min, mu_max } => write!(f, "SP(mu={mu_min}..{mu_max})"),
        }
    }
}

/// Solver tolerance for gradients. Higher-order cascades amplify the residual of each
/// stage, so the default of the linear solver is too loose here.
const GRADIENT_TOL: f64 = 1e-13;
const REFINEMENT_SWEEPS: usize = 4;
const REFINEMENT_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
enum Operator {
    Hs { order: u32, b: SparseMatrix, m: SparseMatrix },
    Sp { k: SparseMatrix },
}

/// A metric assembled on one mesh, with Dirichlet elimination already applied.
#[derive(Clone, Debug)]
pub struct Metric {
    spec: MetricSpec,
    constrained: Vec<bool>,
    op: Operator,
    pub solver: SolverOptions,
}

impl Metric {
    /// `fixed` flags the nodes where gradients must vanish.
    pub fn assemble(spec: MetricSpec, mesh: &Mesh, fixed: &[bool]) -> Result<Metric, Error> {
        spec.validate()?;
        if fixed.len() != mesh.node_count() {
            return Err(Error::InvalidParameter(format!(
                "{} fixed flags for {} nodes",
                fixed.len(),
                mesh.node_count()
            )));
        }
        let constrained = node_mask_to_dofs(fixed, Arity::Vector2);
        let zeros = vec![0.0; constrained.len()];
        let op = match spec {
            MetricSpec::Hs { order, a } => {
                let m = assemble_mass(mesh, Arity::Vector2);
                let k = assemble_stiffness(mesh, Arity::Vector2, &vec![1.0; mesh.triangle_count()])?;
                let b = m.add_scaled(a, &k);
                Operator::Hs {
                    order,
                    b: apply_dirichlet(&b, &zeros, &constrained).0,
                    m: apply_dirichlet(&m, &zeros, &constrained).0,
                }
            }
            MetricSpec::SteklovPoincare { mu_min, mu_max } => {
                let mu = sp_mu_field(mu_min, mu_max, mesh)?;
                let k = assemble_elasticity(mesh, &mu, 0.0)?;
                Operator::Sp {
                    k: apply_dirichlet(&k, &zeros, &constrained).0,
                }
            }
        };
        Ok(Metric {
            spec,
            constrained,
            op,
            solver: SolverOptions::with_tolerance(GRADIENT_TOL),
        })
    }

    pub fn spec(&self) -> MetricSpec {
        self.spec
    }

    fn masked(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.constrained)
            .map(|(&x, &c)| if c { 0.0 } else { x })
            .collect()
    }

    fn check(&self, dj: &LinearFunctional) -> Result<(), Error> {
        if dj.arity() != Arity::Vector2 || dj.coeffs().len() != self.constrained.len() {
            return Err(Error::Solve(crate::error::SolveError::DimensionMismatch {
                expected: self.constrained.len(),
                got: dj.coeffs().len(),
            }));
        }
        Ok(())
    }

    /// The Riesz representative `V` of `dJ`, zero at the fixed nodes.
    pub fn gradient(&self, dj: &LinearFunctional) -> Result<NodalField, Error> {
        self.check(dj)?;
        let rhs = self.masked(dj.coeffs());
        let v = match &self.op {
            Operator::Sp { k } => solve_spd_with(k, &rhs, &self.solver)?,
            Operator::Hs { order, b, m } => {
                let mut x = self.cascade(*order, b, m, &rhs)?;
                if *order > 1 {
                    // The last stage residual is amplified by (B M⁻¹)^(s−1) in g(V, ·);
                    // refine against the composed form until the defect stops shrinking.
                    let scale = dot(&rhs, &rhs).sqrt();
                    let mut last = f64::INFINITY;
                    for _ in 0..REFINEMENT_SWEEPS {
                        let gx = self.apply(&NodalField::from_values(Arity::Vector2, x.clone()))?;
                        let defect: Vec<f64> = rhs.iter().zip(&gx).map(|(r, g)| r - g).collect();
                        let d = dot(&defect, &defect).sqrt();
                        if d <= REFINEMENT_TOL * scale || d >= 0.5 * last {
                            break;
                        }
                        last = d;
                        let dx = self.cascade(*order, b, m, &defect)?;
                        x.iter_mut().zip(&dx).for_each(|(a, c)| *a += c);
                    }
                }
                x
            }
        };
        Ok(NodalField::from_values(Arity::Vector2, self.masked(&v)))
    }

    /// The split system: s solves with `B`, chained through `M`.
    fn cascade(&self, order: u32, b: &SparseMatrix, m: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, Error> {
        let mut x = solve_spd_with(b, rhs, &self.solver)?;
        for _ in 1..order {
            x = solve_spd_with(b, &m.mul_vec(&x), &self.solver)?;
        }
        Ok(self.masked(&x))
    }

    /// `g(V, ·)` as a coefficient vector over the free DoFs.
    fn apply(&self, v: &NodalField) -> Result<Vec<f64>, Error> {
        let v = self.masked(v.values());
        Ok(match &self.op {
            Operator::Sp { k } => self.masked(&k.mul_vec(&v)),
            Operator::Hs { order, b, m } => {
                let tight = SolverOptions {
                    rel_tol: self.solver.rel_tol.min(1e-13),
                    ..self.solver
                };
                let mut z = self.masked(&b.mul_vec(&v));
                for _ in 1..*order {
                    let u = solve_spd_with(m, &z, &tight)?;
                    z = self.masked(&b.mul_vec(&u));
                }
                z
            }
        })
    }

    /// The metric `g(V, W)`.
    pub fn inner(&self, v: &NodalField, w: &NodalField) -> Result<f64, Error> {
        Ok(dot(&self.apply(v)?, &self.masked(w.values())))
    }

    /// `max_W |g(V, W) − dJ[W]| / |dJ[W]|` over the probe fields.
    pub fn riesz_residual(&self, v: &NodalField, dj: &LinearFunctional, probes: &[NodalField]) -> Result<f64, Error> {
        self.check(dj)?;
        let gv = self.apply(v)?;
        Ok(probes
            .iter()
            .map(|w| {
                let w = self.masked(w.values());
                let lhs = dot(&gv, &w);
                let rhs = dot(dj.coeffs(), &w);
                (lhs - rhs).abs() / rhs.abs().max(1e-300)
            })
            .fold(0.0, f64::max))
    }
}

/// Gradient of `dj` under `spec`, vanishing at the `fixed` nodes.
pub fn gradient(spec: MetricSpec, mesh: &Mesh, dj: &LinearFunctional, fixed: &[bool]) -> Result<NodalField, Error> {
    Metric::assemble(spec, mesh, fixed)?.gradient(dj)
}

/// H^s gradient with every boundary node off the shape held fixed.
pub fn hs_gradient(order: u32, a: f64, mesh: &Mesh, dj: &LinearFunctional) -> Result<NodalField, Error> {
    gradient(MetricSpec::Hs { order, a }, mesh, dj, &mesh.frame_nodes())
}

/// Steklov-Poincaré gradient with every boundary node off the shape held fixed.
pub fn sp_gradient(mu_min: f64, mu_max: f64, mesh: &Mesh, dj: &LinearFunctional) -> Result<NodalField, Error> {
    gradient(MetricSpec::SteklovPoincare { mu_min, mu_max }, mesh, dj, &mesh.frame_nodes())
}

/// Harmonic field equal to `mu_min` on shape nodes and `mu_max` on the other boundary nodes.
pub fn sp_mu_field(mu_min: f64, mu_max: f64, mesh: &Mesh) -> Result<NodalField, Error> {
    if !(mu_min > 0.0 && mu_max > 0.0 && mu_min.is_finite() && mu_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu_min = {mu_min}, mu_max = {mu_max}")));
    }
    if !mesh.has_marker(Marker::Shape) {
        return Err(Error::InvalidParameter("mesh has no shape boundary".into()));
    }
    let shape = mesh.node_is_shape();
    let frame = mesh.frame_nodes();
    if !frame.iter().any(|&f| f) {
        return Err(Error::InvalidParameter("mesh has no fixed boundary".into()));
    }
    let n = mesh.node_count();
    let dirichlet: Vec<bool> = (0..n).map(|i| shape[i] || frame[i]).collect();
    let lift: Vec<f64> = (0..n)
        .map(|i| if shape[i] { mu_min } else if frame[i] { mu_max } else { 0.0 })
        .collect();
    if mu_min == mu_max {
        return Ok(NodalField::scalar(vec![mu_min; n]));
    }
    let k = assemble_stiffness(mesh, Arity::Scalar, &vec![1.0; mesh.triangle_count()])?;
    let rhs: Vec<f64> = k.mul_vec(&lift).iter().map(|v| -v).collect();
    let (kc, rc) = apply_dirichlet(&k, &rhs, &dirichlet);
    let u = solve_spd_with(&kc, &rc, &SolverOptions::default())?;
    Ok(NodalField::scalar(
        (0..n).map(|i| if dirichlet[i] { lift[i] } else { u[i] }).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_interface_mesh, Rect};
    use crate::testutil::{dense_lu_solve, noise};

    fn small_mesh() -> Mesh {
        let m = generate_interface_mesh(Rect::new([-1.0, -0.5], [0.0, 0.5]), [-0.5, 0.0], 0.2, 0.17).unwrap();
        assert!(m.node_count() <= 100);
        m
    }

    fn random_functional(mesh: &Mesh, seed: u64) -> LinearFunctional {
        LinearFunctional::from_coeffs(Arity::Vector2, noise(2 * mesh.node_count(), seed))
    }

    fn random_probe(mesh: &Mesh, seed: u64) -> NodalField {
        let fixed = node_mask_to_dofs(&mesh.frame_nodes(), Arity::Vector2);
        let v = noise(2 * mesh.node_count(), seed)
            .into_iter()
            .zip(fixed)
            .map(|(x, c)| if c { 0.0 } else { x })
            .collect();
        NodalField::from_values(Arity::Vector2, v)
    }

    /// Dense free-DoF block of an assembled (unconstrained) matrix.
    fn free_block(m: &SparseMatrix, free: &[usize]) -> Vec<Vec<f64>> {
        let d = m.to_dense();
        free.iter().map(|&i| free.iter().map(|&j| d[i][j]).collect()).collect()
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
            .collect()
    }

    /// `M⁻¹ B` column by column.
    fn solve_columns(m: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = m.len();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| dense_lu_solve(m, &(0..n).map(|i| b[i][j]).collect::<Vec<_>>()))
            .collect();
        (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
    }

    #[test]
    fn zero_derivative_gives_zero_gradient() {
        let mesh = small_mesh();
        let dj = LinearFunctional::zeros(Arity::Vector2, mesh.node_count());
        for spec in [
            MetricSpec::Hs { order: 1, a: 0.1 },
            MetricSpec::Hs { order: 3, a: 0.2 },
            MetricSpec::SteklovPoincare { mu_min: 5.0, mu_max: 20.0 },
        ] {
            assert_eq!(gradient(spec, &mesh, &dj, &mesh.frame_nodes()).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn split_system_matches_composed_operator() {
        let mesh = small_mesh();
        let a = 0.3;
        let dj = random_functional(&mesh, 7);
        let mut metric = Metric::assemble(MetricSpec::Hs { order: 2, a }, &mesh, &mesh.frame_nodes()).unwrap();
        metric.solver = SolverOptions::with_tolerance(1e-14);
        let v = metric.gradient(&dj).unwrap();

        let fixed = node_mask_to_dofs(&mesh.frame_nodes(), Arity::Vector2);
        let free: Vec<usize> = (0..fixed.len()).filter(|&i| !fixed[i]).collect();
        let m = assemble_mass(&mesh, Arity::Vector2);
        let k = assemble_stiffness(&mesh, Arity::Vector2, &vec![1.0; mesh.triangle_count()]).unwrap();
        let b = free_block(&m.add_scaled(a, &k), &free);
        let mf = free_block(&m, &free);
        let op = matmul(&b, &solve_columns(&mf, &b));
        let rhs: Vec<f64> = free.iter().map(|&i| dj.coeffs()[i]).collect();
        let oracle = dense_lu_solve(&op, &rhs);
        let mut diff: f64 = 0.0;
        for (k, &i) in free.iter().enumerate() {
            diff = diff.max((v.values()[i] - oracle[k]).abs());
        }
        assert!(diff < 1e-8, "max diff {diff:e}");
        for (i, &c) in fixed.iter().enumerate() {
            if c {
                assert_eq!(v.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn small_a_limit_is_the_mass_representative() {
        let mesh = small_mesh();
        let dj = random_functional(&mesh, 3);
        let v = hs_gradient(1, 1e-8, &mesh, &dj).unwrap();
        let fixed = node_mask_to_dofs(&mesh.frame_nodes(), Arity::Vector2);
        let rhs: Vec<f64> = dj.coeffs().iter().zip(&fixed).map(|(&x, &c)| if c { 0.0 } else { x }).collect();
        let (m, r) = apply_dirichlet(&assemble_mass(&mesh, Arity::Vector2), &rhs, &fixed);
        let u = solve_spd_with(&m, &r, &SolverOptions::with_tolerance(1e-13)).unwrap();
        let num: f64 = u.iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-4, "{}", num / den);
    }

    #[test]
    fn riesz_identification_for_every_metric() {
        let mesh = small_mesh();
        let dj = random_functional(&mesh, 11);
        let probes: Vec<NodalField> = (0..20).map(|s| random_probe(&mesh, 100 + s)).collect();
        for spec in [
            MetricSpec::Hs { order: 1, a: 0.0625 },
            MetricSpec::Hs { order: 2, a: 0.5 },
            MetricSpec::Hs { order: 3, a: 0.2 },
            MetricSpec::Hs { order: 4, a: 0.05 },
            MetricSpec::SteklovPoincare { mu_min: 5.0, mu_max: 20.0 },
        ] {
            let mut metric = Metric::assemble(spec, &mesh, &mesh.frame_nodes()).unwrap();
            metric.solver = SolverOptions::with_tolerance(1e-13);
            let v = metric.gradient(&dj).unwrap();
            let r = metric.riesz_residual(&v, &dj, &probes).unwrap();
            assert!(r < 1e-8, "{spec}: {r:e}");
            let zero = NodalField::zeros(Arity::Vector2, mesh.node_count());
            assert!((metric.riesz_residual(&zero, &dj, &probes).unwrap() - 1.0).abs() < 1e-12);
            let mut bumped = v.clone();
            let free = (0..bumped.values().len()).find(|&i| !metric.constrained[i]).unwrap();
            bumped.values_mut()[free] += 1e-2;
            assert!(metric.riesz_residual(&bumped, &dj, &probes).unwrap() > 1e-6);
        }
    }

    #[test]
    fn descent_property_and_linearity() {
        let mesh = small_mesh();
        let dj = random_functional(&mesh, 5);
        for spec in [
            MetricSpec::Hs { order: 2, a: 0.5 },
            MetricSpec::SteklovPoincare { mu_min: 5.0, mu_max: 20.0 },
        ] {
            let metric = Metric::assemble(spec, &mesh, &mesh.frame_nodes()).unwrap();
            let v = metric.gradient(&dj).unwrap();
            let djv = dj.apply(&v);
            let norm2 = metric.inner(&v, &v).unwrap();
            assert!(djv > 0.0);
            assert!((djv - norm2).abs() <= 1e-8 * norm2);
            let v3 = metric.gradient(&dj.scaled(-3.0)).unwrap();
            for (a, b) in v.values().iter().zip(v3.values()) {
                assert!((b + 3.0 * a).abs() <= 1e-12 * v.max_abs());
            }
        }
    }

    #[test]
    fn mu_field_bounds() {
        let mesh = generate_interface_mesh(Rect::new([-1.0, -0.5], [0.0, 0.5]), [-0.5, 0.0], 0.2, 0.05).unwrap();
        let mu = sp_mu_field(5.0, 20.0, &mesh).unwrap();
        let (lo, hi) = mu.values().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo >= 5.0 - 1e-8 && hi <= 20.0 + 1e-8);
        for (i, &s) in mesh.node_is_shape().iter().enumerate() {
            if s {
                assert_eq!(mu.values()[i], 5.0);
            }
        }
        let c = sp_mu_field(7.0, 7.0, &mesh).unwrap();
        assert!(c.values().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn mu_field_needs_a_shape() {
        let mesh = crate::testutil::unit_square_grid(3);
        assert!(sp_mu_field(5.0, 20.0, &mesh).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(MetricSpec::Hs { order: 0, a: 1.0 }.validate().is_err());
        assert!(MetricSpec::Hs { order: 2, a: 0.0 }.validate().is_err());
        assert!(MetricSpec::SteklovPoincare { mu_min: 20.0, mu_max: 5.0 }.validate().is_err());
        assert_eq!(MetricSpec::Hs { order: 3, a: 0.2 }.name(), "h3");
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let mesh = small_mesh();
        let dj = LinearFunctional::zeros(Arity::Scalar, mesh.node_count());
        assert!(hs_gradient(1, 1.0, &mesh, &dj).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn gradient_is_linear(order in 1u32..5, a in 0.01f64..1.0, s1 in 0u64..500, alpha in -3.0f64..3.0) {
            let mesh = small_mesh();
            let (f, g) = (random_functional(&mesh, s1), random_functional(&mesh, s1 + 1000));
            let combo = LinearFunctional::from_coeffs(
                Arity::Vector2,
                f.coeffs().iter().zip(g.coeffs()).map(|(x, y)| alpha * x + y).collect(),
            );
            let vf = hs_gradient(order, a, &mesh, &f).unwrap();
            let vg = hs_gradient(order, a, &mesh, &g).unwrap();
            let vc = hs_gradient(order, a, &mesh, &combo).unwrap();
            let scale = vc.max_abs().max(vf.max_abs()).max(vg.max_abs());
            for ((c, x), y) in vc.values().iter().zip(vf.values()).zip(vg.values()) {
                proptest::prop_assert!((c - (alpha * x + y)).abs() <= 1e-8 * scale);
            }
        }
    }
}
