use super::{dense, lumped_mass, SparseMatrix};
use crate::error::SolveError;
use crate::field::{dot, Arity, LinearFunctional, NodalField};
use crate::mesh::Mesh;

/// Compatibility slack for pure-Neumann right-hand sides, relative to `Σ|b_i|`.
const COMPAT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Required relative residual `‖Ax − b‖ / ‖b‖`.
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the dimension.
    pub max_iter_factor: usize,
    /// Largest dimension for which a stalled iteration falls back to a dense factorization.
    pub dense_fallback_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-10,
            max_iter_factor: 10,
            dense_fallback_max: 2000,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(rel_tol: f64) -> Self {
        SolverOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= m;
    }
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
///
/// With `singular` set the matrix may have the constant vector as kernel; residuals are
/// then kept orthogonal to it.
fn pcg(a: &SparseMatrix, b: &[f64], opts: &SolverOptions, singular: bool) -> Result<Vec<f64>, SolveError> {
    let n = a.dim();
    let bnorm = norm(b);
    let target = opts.rel_tol * bnorm;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let cap = (opts.max_iter_factor * n).max(10);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if singular {
        remove_mean(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while it < cap {
        if norm(&r) <= target {
            let mut true_r = residual(a, &x, b);
            if singular {
                remove_mean(&mut true_r);
            }
            if norm(&true_r) <= target {
                return Ok(x);
            }
            r = true_r;
            z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if singular {
            remove_mean(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    let mut true_r = residual(a, &x, b);
    if singular {
        remove_mean(&mut true_r);
    }
    let rel = norm(&true_r) / bnorm;
    if rel <= opts.rel_tol {
        return Ok(x);
    }
    Err(SolveError::NotConverged {
        iterations: it,
        residual: rel,
    })
}

/// Dense Cholesky solve with a few steps of iterative refinement.
fn dense_solve(a: &SparseMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>, SolveError> {
    let l = dense::cholesky(a.to_dense())?;
    let mut x = dense::cholesky_solve(&l, b);
    for _ in 0..3 {
        let r = residual(a, &x, b);
        let dx = dense::cholesky_solve(&l, &r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    let rel = norm(&residual(a, &x, b)) / norm(b);
    if rel <= opts.rel_tol {
        Ok(x)
    } else {
        Err(SolveError::NotConverged {
            iterations: 0,
            residual: rel,
        })
    }
}

/// Solves `A x = b` for symmetric positive definite `A` with default options.
pub fn solve_spd(matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    solve_spd_with(matrix, rhs, &SolverOptions::default())
}

pub fn solve_spd_with(matrix: &SparseMatrix, rhs: &[f64], opts: &SolverOptions) -> Result<Vec<f64>, SolveError> {
    if rhs.len() != matrix.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: matrix.dim(),
            got: rhs.len(),
        });
    }
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; rhs.len()]);
    }
    match pcg(matrix, rhs, opts, false) {
        Err(SolveError::NotConverged { iterations, residual }) if matrix.dim() <= opts.dense_fallback_max => {
            log::warn!(
                "CG stalled after {iterations} iterations (residual {residual:e}); using dense factorization"
            );
            dense_solve(matrix, rhs, opts)
        }
        other => other,
    }
}

/// Solves the pure-Neumann problem `K y = b` in the zero-mean space.
///
/// `b` must satisfy `⟨b, 1⟩ = 0` up to a relative slack of 1e-10; the returned field has
/// `∫ y dx = 0`.
pub fn solve_zero_mean(stiffness: &SparseMatrix, rhs: &LinearFunctional, mesh: &Mesh) -> Result<NodalField, SolveError> {
    let b = rhs.coeffs();
    let sum: f64 = b.iter().sum();
    let scale: f64 = b.iter().map(|v| v.abs()).sum();
    if sum.abs() > COMPAT_TOL * scale {
        return Err(SolveError::Incompatible { sum });
    }
    solve_bordered(stiffness, rhs, mesh, &SolverOptions::default()).map(|(y, _)| y)
}

/// Solves the bordered system `K y + λ c = b`, `cᵀ y = 0` with `c = M 1`.
///
/// Returns `y` and the multiplier `λ = ⟨b, 1⟩ / |Ω|`, which absorbs any violation of the
/// Neumann compatibility condition.
pub fn solve_bordered(
    stiffness: &SparseMatrix,
    rhs: &LinearFunctional,
    mesh: &Mesh,
    opts: &SolverOptions,
) -> Result<(NodalField, f64), SolveError> {
    let n = mesh.node_count();
    if rhs.arity() != Arity::Scalar || rhs.coeffs().len() != n || stiffness.dim() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: rhs.coeffs().len(),
        });
    }
    let c = lumped_mass(mesh);
    let total: f64 = c.iter().sum();
    let lambda = rhs.coeffs().iter().sum::<f64>() / total;
    let b: Vec<f64> = rhs.coeffs().iter().zip(&c).map(|(bi, ci)| bi - lambda * ci).collect();
    if b.iter().all(|&v| v == 0.0) {
        return Ok((NodalField::zeros(Arity::Scalar, n), lambda));
    }
    // The tolerance refers to the caller's right-hand side, not the deflated one.
    let scale = (norm(rhs.coeffs()) / norm(&b)).min(1.0);
    let inner = SolverOptions {
        rel_tol: opts.rel_tol * scale,
        ..*opts
    };
    let mut y = match pcg(stiffness, &b, &inner, true) {
        Ok(y) => y,
        Err(SolveError::NotConverged { iterations, residual: stalled }) if n <= opts.dense_fallback_max => {
            log::warn!(
                "CG stalled after {iterations} iterations (residual {stalled:e}); using dense factorization"
            );
            // Rank-one term s·c cᵀ removes the constant kernel without changing the
            // solution in the zero-mean space.
            let diag_max = stiffness.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
            let c_max = c.iter().fold(0.0f64, |m, v| m.max(*v));
            let s = diag_max / (c_max * c_max);
            let mut d = stiffness.to_dense();
            for i in 0..n {
                for j in 0..n {
                    d[i][j] += s * c[i] * c[j];
                }
            }
            let l = dense::cholesky(d)?;
            let mut y = dense::cholesky_solve(&l, &b);
            for _ in 0..3 {
                let r = residual(stiffness, &y, &b);
                let dy = dense::cholesky_solve(&l, &r);
                for (yi, di) in y.iter_mut().zip(&dy) {
                    *yi += di;
                }
            }
            let rel = norm(&residual(stiffness, &y, &b)) / norm(&b);
            if rel > inner.rel_tol {
                return Err(SolveError::NotConverged {
                    iterations: 0,
                    residual: rel,
                });
            }
            y
        }
        Err(e) => return Err(e),
    };
    let shift = dot(&c, &y) / total;
    for v in &mut y {
        *v -= shift;
    }
    Ok((NodalField::scalar(y), lambda))
}
