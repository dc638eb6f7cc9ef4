//! Triangular meshes with boundary and interface markers.

mod generate;
mod io;
mod locate;
mod quality;

pub use generate::{
    circle_loop, generate_bridge_mesh, generate_interface_mesh, generate_interface_mesh_with_loop,
    rectangle_grid, remesh, Rect,
};
pub use io::{read_mesh, read_mesh_with_fields, write_mesh, write_mesh_with_fields};
pub use locate::{Location, PointLocator};
pub use quality::{mesh_quality, triangle_quality, TriangleQuality};

use std::collections::HashMap;

use crate::error::MeshError;
use crate::field::{Arity, NodalField};

pub type Point = [f64; 2];

/// Cells outside an interface loop, or every cell of a mesh without interface.
pub const REGION_OUTSIDE: u32 = 0;
/// Cells enclosed by an interface loop.
pub const REGION_INSIDE: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Marker {
    Outer,
    Dirichlet,
    Neumann,
    Shape,
}

impl Marker {
    pub fn name(self) -> &'static str {
        match self {
            Marker::Outer => "outer",
            Marker::Dirichlet => "dirichlet",
            Marker::Neumann => "neumann",
            Marker::Shape => "shape",
        }
    }

    pub fn parse(s: &str) -> Option<Marker> {
        match s {
            "outer" => Some(Marker::Outer),
            "dirichlet" => Some(Marker::Dirichlet),
            "neumann" => Some(Marker::Neumann),
            "shape" => Some(Marker::Shape),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: Marker,
}

/// A closed polyline assembled from consecutive boundary edges.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLoop {
    /// Node indices in traversal order; the loop closes back to `nodes[0]`.
    pub nodes: Vec<usize>,
    /// `markers[i]` belongs to the edge `nodes[i] -> nodes[i + 1]`.
    pub markers: Vec<Marker>,
    /// True when every edge of the loop is shared by two triangles.
    pub interior: bool,
}

impl BoundaryLoop {
    pub fn is_shape(&self) -> bool {
        self.markers.iter().all(|&m| m == Marker::Shape)
    }
}

/// An immutable conforming triangulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    cell_region: Vec<u32>,
    boundary: Vec<BoundaryEdge>,
    node_is_shape: Vec<bool>,
}

pub(crate) fn signed_area(p0: Point, p1: Point, p2: Point) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh after checking indices, orientation and boundary consistency.
    ///
    /// `node_is_shape` is derived from the SHAPE-marked edges.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        cell_region: Vec<u32>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Mesh, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if cell_region.len() != triangles.len() {
            return Err(MeshError::InvalidInput(format!(
                "{} region labels for {} triangles",
                cell_region.len(),
                triangles.len()
            )));
        }
        let n = nodes.len();
        if let Some(p) = nodes.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(MeshError::InvalidInput(format!("non-finite node {:?}", p)));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(MeshError::InvalidInput(format!(
                    "triangle {t} references a node out of range (nodes: {n})"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::InvalidInput(format!(
                    "triangle {t} repeats a node"
                )));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area <= 0.0 {
                return Err(MeshError::InvertedElement { triangle: t, area });
            }
        }
        let mut seen = HashMap::new();
        for (e, edge) in boundary.iter().enumerate() {
            let [a, b] = edge.nodes;
            if a >= n || b >= n || a == b {
                return Err(MeshError::InvalidInput(format!(
                    "boundary edge {e} has invalid nodes {a} {b}"
                )));
            }
            if let Some(prev) = seen.insert((a.min(b), a.max(b)), e) {
                return Err(MeshError::InvalidInput(format!(
                    "boundary edges {prev} and {e} duplicate ({a}, {b})"
                )));
            }
        }
        let mut node_is_shape = vec![false; n];
        for edge in boundary.iter().filter(|e| e.marker == Marker::Shape) {
            node_is_shape[edge.nodes[0]] = true;
            node_is_shape[edge.nodes[1]] = true;
        }
        let mesh = Mesh {
            nodes,
            triangles,
            cell_region,
            boundary,
            node_is_shape,
        };
        mesh.check_boundary_topology()?;
        Ok(mesh)
    }

    /// Every topological boundary edge must be marked, and every marked edge must
    /// exist in the triangulation.
    fn check_boundary_topology(&self) -> Result<(), MeshError> {
        let counts = self.edge_counts();
        for (&(a, b), &c) in &counts {
            if c > 2 {
                return Err(MeshError::InvalidInput(format!(
                    "edge ({a}, {b}) shared by {c} triangles"
                )));
            }
        }
        let marked: HashMap<(usize, usize), Marker> = self
            .boundary
            .iter()
            .map(|e| ((e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])), e.marker))
            .collect();
        for (&key, &c) in &counts {
            if c == 1 && !marked.contains_key(&key) {
                return Err(MeshError::InvalidInput(format!(
                    "boundary edge {:?} carries no marker",
                    key
                )));
            }
        }
        for (&key, &marker) in &marked {
            match counts.get(&key) {
                None => {
                    return Err(MeshError::InvalidInput(format!(
                        "marked edge {:?} is not an edge of the triangulation",
                        key
                    )))
                }
                Some(2) if marker != Marker::Shape => {
                    return Err(MeshError::InvalidInput(format!(
                        "interior edge {:?} marked {}",
                        key,
                        marker.name()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 2);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn cell_region(&self) -> &[u32] {
        &self.cell_region
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn node_is_shape(&self) -> &[bool] {
        &self.node_is_shape
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_points(t);
        signed_area(p0, p1, p2)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn has_marker(&self, marker: Marker) -> bool {
        self.boundary.iter().any(|e| e.marker == marker)
    }

    pub fn edges_with(&self, marker: Marker) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary.iter().filter(move |e| e.marker == marker)
    }

    /// Nodes lying on a boundary edge carrying `marker`.
    pub fn nodes_with(&self, marker: Marker) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in self.edges_with(marker) {
            flags[e.nodes[0]] = true;
            flags[e.nodes[1]] = true;
        }
        flags
    }

    /// Nodes on the fixed frame of the hold-all domain: every boundary node that is
    /// not on a SHAPE edge. Deformation fields vanish here.
    pub fn frame_nodes(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in self.boundary.iter().filter(|e| e.marker != Marker::Shape) {
            flags[e.nodes[0]] = true;
            flags[e.nodes[1]] = true;
        }
        flags
    }

    /// Total length of the edges carrying `marker`.
    pub fn marker_length(&self, marker: Marker) -> f64 {
        self.edges_with(marker)
            .map(|e| distance(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]))
            .sum()
    }

    pub fn shape_length(&self) -> f64 {
        self.marker_length(Marker::Shape)
    }

    pub fn minimum_signed_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Chains the boundary edges into closed loops.
    pub fn boundary_loops(&self) -> Result<Vec<BoundaryLoop>, MeshError> {
        let counts = self.edge_counts();
        let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
        for (e, edge) in self.boundary.iter().enumerate() {
            outgoing.entry(edge.nodes[0]).or_default().push(e);
        }
        let mut used = vec![false; self.boundary.len()];
        let mut loops = Vec::new();
        for start in 0..self.boundary.len() {
            if used[start] {
                continue;
            }
            let first_node = self.boundary[start].nodes[0];
            let mut nodes = Vec::new();
            let mut markers = Vec::new();
            let mut interior = true;
            let mut e = start;
            loop {
                used[e] = true;
                let edge = self.boundary[e];
                nodes.push(edge.nodes[0]);
                markers.push(edge.marker);
                let key = (edge.nodes[0].min(edge.nodes[1]), edge.nodes[0].max(edge.nodes[1]));
                interior &= counts.get(&key) == Some(&2);
                let next_node = edge.nodes[1];
                if next_node == first_node {
                    break;
                }
                let next = outgoing
                    .get(&next_node)
                    .and_then(|cands| cands.iter().copied().find(|&c| !used[c]))
                    .ok_or_else(|| {
                        MeshError::InvalidInput(format!(
                            "boundary polyline is open at node {next_node}"
                        ))
                    })?;
                e = next;
            }
            loops.push(BoundaryLoop {
                nodes,
                markers,
                interior,
            });
        }
        Ok(loops)
    }

    /// Translates node `i` by `t * field(i)`; fails instead of producing an inverted triangle.
    pub fn deform(&self, field: &NodalField, t: f64) -> Result<Mesh, MeshError> {
        if field.arity() != Arity::Vector2 || field.node_count() != self.nodes.len() {
            return Err(MeshError::InvalidInput(format!(
                "deformation field has {} values for {} nodes",
                field.values().len(),
                self.nodes.len()
            )));
        }
        if !t.is_finite() {
            return Err(MeshError::InvalidInput(format!("stepsize {t}")));
        }
        let v = field.values();
        let nodes: Vec<Point> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| [p[0] + t * v[2 * i], p[1] + t * v[2 * i + 1]])
            .collect();
        for (t_idx, tri) in self.triangles.iter().enumerate() {
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::InvertedElement {
                    triangle: t_idx,
                    area,
                });
            }
        }
        Ok(Mesh {
            nodes,
            triangles: self.triangles.clone(),
            cell_region: self.cell_region.clone(),
            boundary: self.boundary.clone(),
            node_is_shape: self.node_is_shape.clone(),
        })
    }

    /// Returns the same mesh with replaced node coordinates, re-checking orientation.
    pub fn with_nodes(&self, nodes: Vec<Point>) -> Result<Mesh, MeshError> {
        Mesh::new(
            nodes,
            self.triangles.clone(),
            self.cell_region.clone(),
            self.boundary.clone(),
        )
    }

    /// True when every SHAPE edge separates cells of different regions (interface
    /// loops) or bounds a single cell (holes).
    pub fn regions_consistent(&self) -> bool {
        let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                owners.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        for (&key, cells) in &owners {
            let is_shape = self.boundary.iter().any(|e| {
                e.marker == Marker::Shape && (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])) == key
            });
            if cells.len() == 2 {
                let differ = self.cell_region[cells[0]] != self.cell_region[cells[1]];
                if differ != is_shape {
                    return false;
                }
            }
        }
        true
    }
}
