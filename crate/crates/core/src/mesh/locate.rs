//! Point location and P1 interpolation on a fixed mesh.

use super::{Mesh, Point};
use crate::field::{Arity, NodalField};

/// Barycentric slack for points lying on element edges.
const SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub barycentric: [f64; 3],
    /// The query point was outside the mesh and moved to the closest point of `triangle`.
    pub clamped: bool,
}

/// Uniform-grid bucket index over the triangles of a mesh.
#[derive(Clone, Debug)]
pub struct PointLocator {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    origin: Point,
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
    /// Exact coordinates of each node mapped to (triangle, local vertex).
    vertex_lookup: std::collections::HashMap<(u64, u64), (usize, usize)>,
}

fn barycentric(p: Point, t: [Point; 3]) -> [f64; 3] {
    let [a, b, c] = t;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn closest_on_segment(p: Point, a: Point, b: Point) -> (Point, f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + s * d[0], a[1] + s * d[1]];
    (q, (p[0] - q[0]).hypot(p[1] - q[1]))
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> PointLocator {
        let nodes = mesh.nodes().to_vec();
        let triangles = mesh.triangles().to_vec();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let target_cells = (triangles.len() as f64 / 2.0).max(1.0);
        let cell = (((hi[0] - lo[0]) * (hi[1] - lo[1])) / target_cells).sqrt().max(extent * 1e-6);
        let dims = [
            (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(4096),
            (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(4096),
        ];
        let mut loc = PointLocator {
            nodes,
            triangles,
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
            vertex_lookup: Default::default(),
        };
        for (t, tri) in loc.triangles.iter().enumerate() {
            let pts = tri.map(|i| loc.nodes[i]);
            let min = [
                pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
                pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
            ];
            let max = [
                pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
                pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
            ];
            let (i0, j0) = loc.cell_of(min);
            let (i1, j1) = loc.cell_of(max);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * dims[0] + i].push(t as u32);
                }
            }
        }
        for (t, tri) in loc.triangles.iter().enumerate() {
            for (k, &i) in tri.iter().enumerate() {
                let p = loc.nodes[i];
                loc.vertex_lookup.entry((p[0].to_bits(), p[1].to_bits())).or_insert((t, k));
            }
        }
        loc
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |k: usize| {
            let v = ((p[k] - self.origin[k]) / self.cell).floor();
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(self.dims[k] - 1)
            }
        };
        (f(0), f(1))
    }

    fn points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.nodes[i])
    }

    /// Finds the element containing `p`, or the closest element if `p` lies outside.
    pub fn locate(&self, p: Point) -> Location {
        if let Some(&(t, k)) = self.vertex_lookup.get(&(p[0].to_bits(), p[1].to_bits())) {
            let mut bary = [0.0; 3];
            bary[k] = 1.0;
            return Location {
                triangle: t,
                barycentric: bary,
                clamped: false,
            };
        }
        let (i, j) = self.cell_of(p);
        for &t in &self.buckets[j * self.dims[0] + i] {
            let t = t as usize;
            let l = barycentric(p, self.points(t));
            if l[0].min(l[1]).min(l[2]) >= -SLACK {
                return Location {
                    triangle: t,
                    barycentric: l,
                    clamped: false,
                };
            }
        }
        self.clamp(p)
    }

    fn clamp(&self, p: Point) -> Location {
        let mut best = (f64::INFINITY, 0usize, p);
        for t in 0..self.triangles.len() {
            let pts = self.points(t);
            for k in 0..3 {
                let (q, d) = closest_on_segment(p, pts[k], pts[(k + 1) % 3]);
                if d < best.0 {
                    best = (d, t, q);
                }
            }
        }
        let (d, t, q) = best;
        let mut l = barycentric(q, self.points(t));
        for v in &mut l {
            *v = v.clamp(0.0, 1.0);
        }
        let s: f64 = l.iter().sum();
        Location {
            triangle: t,
            barycentric: l.map(|v| v / s),
            clamped: d > 0.0,
        }
    }

    /// Value at `p` of the scalar P1 function with nodal `values`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> f64 {
        let loc = self.locate(p);
        let tri = self.triangles[loc.triangle];
        let l = loc.barycentric;
        l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
    }

    /// Constant gradient of the scalar P1 function on element `t`.
    pub fn gradient(&self, values: &[f64], t: usize) -> [f64; 2] {
        let tri = self.triangles[t];
        let [a, b, c] = self.points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let (u0, u1, u2) = (values[tri[0]], values[tri[1]], values[tri[2]]);
        [
            ((u1 - u0) * (c[1] - a[1]) - (u2 - u0) * (b[1] - a[1])) / det,
            ((u2 - u0) * (b[0] - a[0]) - (u1 - u0) * (c[0] - a[0])) / det,
        ]
    }

    /// Value and gradient at `p` of the scalar P1 function with nodal `values`.
    pub fn value_and_gradient(&self, values: &[f64], p: Point) -> (f64, [f64; 2]) {
        let loc = self.locate(p);
        let tri = self.triangles[loc.triangle];
        let l = loc.barycentric;
        let v = l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]];
        (v, self.gradient(values, loc.triangle))
    }

    /// Interpolates a scalar field of the located mesh at every point of `points`.
    pub fn transfer(&self, field: &NodalField, points: &[Point]) -> NodalField {
        assert_eq!(field.arity(), Arity::Scalar);
        let values = field.values();
        NodalField::scalar(crate::par::map(points, |&p| self.interpolate(values, p)))
    }
}
