//! Nodal P1 coefficient vectors and linear functionals over them.
//!
//! Vector-valued data is stored interleaved: degree of freedom `2 * node + component`.

use crate::error::SolveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arity {
    Scalar,
    Vector2,
}

impl Arity {
    pub fn components(self) -> usize {
        match self {
            Arity::Scalar => 1,
            Arity::Vector2 => 2,
        }
    }

    pub fn dofs(self, nodes: usize) -> usize {
        nodes * self.components()
    }

    pub fn name(self) -> &'static str {
        match self {
            Arity::Scalar => "scalar",
            Arity::Vector2 => "vector2",
        }
    }

    pub fn parse(s: &str) -> Option<Arity> {
        match s {
            "scalar" | "1" => Some(Arity::Scalar),
            "vector2" | "vector" | "2" => Some(Arity::Vector2),
            _ => None,
        }
    }
}

/// Piecewise linear field given by its values at the mesh nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    arity: Arity,
    values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(arity: Arity, nodes: usize) -> Self {
        NodalField {
            arity,
            values: vec![0.0; arity.dofs(nodes)],
        }
    }

    pub fn from_values(arity: Arity, values: Vec<f64>) -> Self {
        assert!(
            values.len().is_multiple_of(arity.components()),
            "value count {} incompatible with arity {:?}",
            values.len(),
            arity
        );
        NodalField { arity, values }
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        Self::from_values(Arity::Scalar, values)
    }

    pub fn vector(values: Vec<[f64; 2]>) -> Self {
        let flat = values.iter().flat_map(|v| [v[0], v[1]]).collect();
        Self::from_values(Arity::Vector2, flat)
    }

    /// Evaluates `f` at every node position.
    pub fn from_fn_vector(nodes: &[[f64; 2]], f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self::vector(nodes.iter().map(|&p| f(p)).collect())
    }

    pub fn from_fn_scalar(nodes: &[[f64; 2]], f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::scalar(nodes.iter().map(|&p| f(p)).collect())
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.arity.components()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn vector_at(&self, node: usize) -> [f64; 2] {
        debug_assert_eq!(self.arity, Arity::Vector2);
        [self.values[2 * node], self.values[2 * node + 1]]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        NodalField {
            arity: self.arity,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_nodes(&self, arity: Arity, nodes: usize) -> Result<(), SolveError> {
        let expected = arity.dofs(nodes);
        if self.arity != arity || self.values.len() != expected {
            return Err(SolveError::DimensionMismatch {
                expected,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// A linear functional `W ↦ Σ coeff_k W_k` over the nodal degrees of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFunctional {
    arity: Arity,
    coeffs: Vec<f64>,
}

impl LinearFunctional {
    pub fn zeros(arity: Arity, nodes: usize) -> Self {
        LinearFunctional {
            arity,
            coeffs: vec![0.0; arity.dofs(nodes)],
        }
    }

    pub fn from_coeffs(arity: Arity, coeffs: Vec<f64>) -> Self {
        assert!(coeffs.len().is_multiple_of(arity.components()));
        LinearFunctional { arity, coeffs }
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn node_count(&self) -> usize {
        self.coeffs.len() / self.arity.components()
    }

    /// Evaluates the functional at `field`.
    pub fn apply(&self, field: &NodalField) -> f64 {
        assert_eq!(self.arity, field.arity(), "arity mismatch");
        assert_eq!(self.coeffs.len(), field.values().len(), "length mismatch");
        dot(&self.coeffs, field.values())
    }

    /// Adds `alpha * other` in place.
    pub fn add_scaled(&mut self, alpha: f64, other: &LinearFunctional) {
        assert_eq!(self.arity, other.arity);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += alpha * o;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        LinearFunctional {
            arity: self.arity,
            coeffs: self.coeffs.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sequential dot product; the fixed summation order keeps results reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_layout_is_interleaved() {
        let f = NodalField::vector(vec![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.vector_at(1), [3.0, 4.0]);
        assert_eq!(f.node_count(), 2);
    }

    #[test]
    fn functional_application() {
        let l = LinearFunctional::from_coeffs(Arity::Scalar, vec![1.0, -2.0, 0.5]);
        let f = NodalField::scalar(vec![2.0, 1.0, 4.0]);
        assert_eq!(l.apply(&f), 2.0);
    }

    #[test]
    fn dimension_check() {
        let f = NodalField::scalar(vec![0.0; 3]);
        assert!(f.check_nodes(Arity::Scalar, 3).is_ok());
        assert!(f.check_nodes(Arity::Vector2, 3).is_err());
        assert!(f.check_nodes(Arity::Scalar, 4).is_err());
    }
}
