//! Helpers shared by unit tests.

use crate::mesh::{rectangle_grid, BoundaryEdge, Marker, Mesh, Rect};

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_lu_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    x
}

pub fn unit_square_grid(n: usize) -> Mesh {
    rectangle_grid(Rect::new([0.0, 0.0], [1.0, 1.0]), n, n).unwrap()
}

pub fn reference_triangle() -> Mesh {
    Mesh::new(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
        vec![0],
        vec![
            BoundaryEdge { nodes: [0, 1], marker: Marker::Outer },
            BoundaryEdge { nodes: [1, 2], marker: Marker::Outer },
            BoundaryEdge { nodes: [2, 0], marker: Marker::Outer },
        ],
    )
    .unwrap()
}

/// Deterministic pseudo-random numbers in [-1, 1].
pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}
