use super::{distance, signed_area, Mesh, Point};
use crate::error::MeshError;

/// Twice the inradius over the circumradius: 1 for an equilateral triangle, 0 when degenerate.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct TriangleQuality(f64);

impl TriangleQuality {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `2 r / R` with `r = area / s` and `R = abc / (4 area)`, i.e. `8 area² / (s a b c)`.
///
/// Orientation is ignored. Collinear or coincident points give 0.
pub fn triangle_quality(p0: Point, p1: Point, p2: Point) -> TriangleQuality {
    let a = distance(p1, p2);
    let b = distance(p0, p2);
    let c = distance(p0, p1);
    let area = signed_area(p0, p1, p2).abs();
    let s = 0.5 * (a + b + c);
    let denom = s * a * b * c;
    if area == 0.0 || denom == 0.0 {
        return TriangleQuality(0.0);
    }
    TriangleQuality((8.0 * area * area / denom).clamp(0.0, 1.0))
}

/// Minimum triangle quality over the mesh.
pub fn mesh_quality(mesh: &Mesh) -> Result<f64, MeshError> {
    if mesh.triangle_count() == 0 {
        return Err(MeshError::Empty);
    }
    Ok((0..mesh.triangle_count())
        .map(|t| {
            let [p0, p1, p2] = mesh.triangle_points(t);
            triangle_quality(p0, p1, p2).value()
        })
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equilateral_is_one() {
        for &s in &[1e-3, 1.0, 250.0] {
            let q = triangle_quality([0.0, 0.0], [s, 0.0], [0.5 * s, 0.5 * 3f64.sqrt() * s]);
            assert!((q.value() - 1.0).abs() < 1e-12, "{}", q.value());
        }
    }

    #[test]
    fn right_isoceles() {
        // Incircle radius (2 - √2)/2, circumradius √2/2.
        let expected = 2.0 * (2.0 - 2f64.sqrt()) / 2.0 / (2f64.sqrt() / 2.0);
        let q = triangle_quality([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]).value();
        assert!((q - expected).abs() < 1e-14);
        assert!((q - 0.8284).abs() < 1e-4);
    }

    #[test]
    fn collinear_is_zero() {
        assert_eq!(triangle_quality([0.0, 0.0], [1.0, 0.0], [2.0, 0.0]).value(), 0.0);
    }

    proptest! {
        #[test]
        fn similarity_invariant(
            pts in prop::array::uniform6(-1.0f64..1.0),
            angle in 0.0f64..std::f64::consts::TAU,
            scale in 0.01f64..100.0,
            shift in prop::array::uniform2(-10.0f64..10.0),
        ) {
            let p = [[pts[0], pts[1]], [pts[2], pts[3]], [pts[4], pts[5]]];
            let q0 = triangle_quality(p[0], p[1], p[2]).value();
            prop_assume!(q0 > 1e-3);
            let (s, c) = angle.sin_cos();
            let map = |x: Point| [scale * (c * x[0] - s * x[1]) + shift[0], scale * (s * x[0] + c * x[1]) + shift[1]];
            let q1 = triangle_quality(map(p[0]), map(p[1]), map(p[2])).value();
            prop_assert!((q1 - q0).abs() <= 1e-12 * q0.max(1e-300) * 10.0, "{} vs {}", q0, q1);
            prop_assert!(q0 > 0.0 && q0 <= 1.0);
        }
    }
}
