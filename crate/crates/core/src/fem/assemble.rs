use super::SparseMatrix;
use crate::error::Error;
use crate::field::{Arity, LinearFunctional, NodalField};
use crate::mesh::{distance, Marker, Mesh, Point};
use crate::par;

/// Area and constant gradients of the three P1 basis functions of a triangle.
pub fn p1_gradients(p: [Point; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let grads = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (0.5 * det, grads)
}

/// Local DoF `c * 3 + a` of vertex `a`, component `c`, mapped to the global index.
fn scatter<const L: usize>(m: &mut SparseMatrix, tri: [usize; 3], arity: Arity, local: &[[f64; L]; L]) {
    let k = arity.components();
    let dof = |l: usize| k * tri[l % 3] + l / 3;
    for (r, row) in local.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m.add_to(dof(r), dof(c), v);
        }
    }
}

fn assemble_scalar_blocks(mesh: &Mesh, arity: Arity, elem: impl Fn(usize) -> [[f64; 3]; 3] + Sync + Send) -> SparseMatrix {
    let locals = par::map_range(mesh.triangle_count(), elem);
    let mut m = SparseMatrix::with_mesh_pattern(mesh, arity);
    for (t, local) in locals.iter().enumerate() {
        let tri = mesh.triangles()[t];
        match arity {
            Arity::Scalar => scatter(&mut m, tri, arity, local),
            Arity::Vector2 => {
                let mut big = [[0.0; 6]; 6];
                for a in 0..3 {
                    for b in 0..3 {
                        big[a][b] = local[a][b];
                        big[3 + a][3 + b] = local[a][b];
                    }
                }
                scatter(&mut m, tri, arity, &big);
            }
        }
    }
    m
}

/// Consistent P1 mass matrix; componentwise block-diagonal for vector arity.
pub fn assemble_mass(mesh: &Mesh, arity: Arity) -> SparseMatrix {
    assemble_scalar_blocks(mesh, arity, |t| {
        let a = mesh.triangle_area(t) / 12.0;
        let mut local = [[a; 3]; 3];
        for (i, row) in local.iter_mut().enumerate() {
            row[i] = 2.0 * a;
        }
        local
    })
}

/// Stiffness matrix of `∫ c ∇u·∇v` with `c` constant per cell.
pub fn assemble_stiffness(mesh: &Mesh, arity: Arity, cell_coeff: &[f64]) -> Result<SparseMatrix, Error> {
    if cell_coeff.len() != mesh.triangle_count() {
        return Err(Error::InvalidParameter(format!(
            "{} cell coefficients for {} triangles",
            cell_coeff.len(),
            mesh.triangle_count()
        )));
    }
    if let Some((t, c)) = cell_coeff.iter().enumerate().find(|(_, &c)| !(c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter(format!("cell coefficient {c} on triangle {t}")));
    }
    Ok(assemble_scalar_blocks(mesh, arity, |t| {
        let (area, g) = p1_gradients(mesh.triangle_points(t));
        let s = cell_coeff[t] * area;
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                local[a][b] = s * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        local
    }))
}

/// Matrix of `2 ∫ μ ε(u):ε(v) + λ ∫ div u div v`, with μ nodal and evaluated at centroids.
pub fn assemble_elasticity(mesh: &Mesh, mu: &NodalField, lambda: f64) -> Result<SparseMatrix, Error> {
    mu.check_nodes(Arity::Scalar, mesh.node_count())?;
    if let Some((i, m)) = mu.values().iter().enumerate().find(|(_, &m)| !(m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidParameter(format!("mu = {m} at node {i}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let muv = mu.values();
    let locals = par::map_range(mesh.triangle_count(), |t| {
        let tri = mesh.triangles()[t];
        let (area, g) = p1_gradients(mesh.triangle_points(t));
        let mu_t = (muv[tri[0]] + muv[tri[1]] + muv[tri[2]]) / 3.0;
        let mut local = [[0.0; 6]; 6];
        for m in 0..2 {
            for n in 0..2 {
                for a in 0..3 {
                    for b in 0..3 {
                        let dd = if m == n { g[a][0] * g[b][0] + g[a][1] * g[b][1] } else { 0.0 };
                        local[3 * m + a][3 * n + b] =
                            area * (mu_t * (dd + g[a][n] * g[b][m]) + lambda * (g[a][m] * g[b][n]));
                    }
                }
            }
        }
        local
    });
    let mut mat = SparseMatrix::with_mesh_pattern(mesh, Arity::Vector2);
    for (t, local) in locals.iter().enumerate() {
        scatter(&mut mat, mesh.triangles()[t], Arity::Vector2, local);
    }
    Ok(mat)
}

/// Constant boundary data: a scalar flux or a traction vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryData {
    Scalar(f64),
    Vector([f64; 2]),
}

/// `v ↦ ∫ g·v ds` over the edges carrying `marker` (exact for constant `g`).
pub fn boundary_load(mesh: &Mesh, marker: Marker, g: BoundaryData) -> Result<LinearFunctional, Error> {
    if !mesh.has_marker(marker) {
        return Err(Error::InvalidParameter(format!(
            "mesh has no {} boundary",
            marker.name()
        )));
    }
    let n = mesh.node_count();
    let (arity, comps) = match g {
        BoundaryData::Scalar(s) => (Arity::Scalar, vec![s]),
        BoundaryData::Vector(v) => (Arity::Vector2, v.to_vec()),
    };
    let k = comps.len();
    let mut l = LinearFunctional::zeros(arity, n);
    let c = l.coeffs_mut();
    for e in mesh.edges_with(marker) {
        let half = 0.5 * distance(mesh.nodes()[e.nodes[0]], mesh.nodes()[e.nodes[1]]);
        for &node in &e.nodes {
            for (d, gd) in comps.iter().enumerate() {
                c[k * node + d] += half * gd;
            }
        }
    }
    Ok(l)
}

/// `v ↦ ∫ f·v dx` for a constant body force `f`.
pub fn body_load(mesh: &Mesh, f: [f64; 2]) -> LinearFunctional {
    let mut l = LinearFunctional::zeros(Arity::Vector2, mesh.node_count());
    let c = l.coeffs_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let w = mesh.triangle_area(t) / 3.0;
        for &a in tri {
            c[2 * a] += w * f[0];
            c[2 * a + 1] += w * f[1];
        }
    }
    l
}

/// Row sums of the scalar mass matrix, `∫ φ_i dx`.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &i in tri {
            w[i] += a;
        }
    }
    w
}

/// `√(vᵀ M v)` with `M` the consistent mass matrix of the field's arity.
pub fn l2_norm(mesh: &Mesh, field: &NodalField) -> f64 {
    let m = assemble_mass(mesh, field.arity());
    m.bilinear(field.values(), field.values()).max(0.0).sqrt()
}

/// Expands a per-node flag to a per-DoF flag.
pub fn node_mask_to_dofs(mask: &[bool], arity: Arity) -> Vec<bool> {
    let k = arity.components();
    mask.iter().flat_map(|&b| std::iter::repeat_n(b, k)).collect()
}

/// Symmetric elimination of the DoFs flagged in `constrained`: rows and columns are
/// zeroed, the diagonal set to one and the right-hand side zeroed there.
pub fn apply_dirichlet(matrix: &SparseMatrix, rhs: &[f64], constrained: &[bool]) -> (SparseMatrix, Vec<f64>) {
    assert_eq!(constrained.len(), matrix.dim());
    assert_eq!(rhs.len(), matrix.dim());
    let mut m = matrix.clone();
    let mut cols_of_row = Vec::with_capacity(m.dim());
    for i in 0..m.dim() {
        let (cols, _) = m.row(i);
        cols_of_row.push(cols.to_vec());
    }
    let values = m.values_mut();
    let mut p = 0;
    for (i, cols) in cols_of_row.iter().enumerate() {
        for &j in cols {
            if constrained[i] || constrained[j] {
                values[p] = if i == j { 1.0 } else { 0.0 };
            }
            p += 1;
        }
    }
    let b = rhs
        .iter()
        .zip(constrained)
        .map(|(&v, &c)| if c { 0.0 } else { v })
        .collect();
    (m, b)
}
