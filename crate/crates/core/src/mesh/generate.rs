//! Mesh generation and boundary-preserving remeshing.
//!
//! Boundaries are given as closed polylines. They are fed to a constrained Delaunay
//! triangulation which is refined with Steiner points until every triangle is below a
//! size bound tied to `target_h` and above a 30° minimum-angle bound, then interior nodes
//! are smoothed.

use std::collections::{HashMap, HashSet};

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use super::{distance, mesh_quality, signed_area, triangle_quality, BoundaryEdge, Marker, Mesh, Point};
use super::{REGION_INSIDE, REGION_OUTSIDE};
use crate::error::MeshError;

/// Refinement splits triangles larger than `AREA_FACTOR * target_h²`.
const AREA_FACTOR: f64 = 1.3;
/// Triangles below `MIN_AREA_FACTOR * target_h²` are never split for angle reasons.
const MIN_AREA_FACTOR: f64 = 1e-4;
/// Quality a generated or remeshed mesh is expected to reach.
pub(crate) const QUALITY_GOAL: f64 = 0.3;
const SMOOTHING_SWEEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Rect { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    fn corners(&self) -> [Point; 4] {
        [
            self.min,
            [self.max[0], self.min[1]],
            self.max,
            [self.min[0], self.max[1]],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LoopKind {
    Outer,
    Interface,
    Hole,
}

#[derive(Clone, Debug)]
struct InputLoop {
    points: Vec<Point>,
    /// Marker of the edge `points[i] -> points[i + 1]`.
    markers: Vec<Marker>,
    kind: LoopKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SplitPolicy {
    KeepBoundary,
    AllowSplits,
}

fn check_h(target_h: f64) -> Result<(), MeshError> {
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(MeshError::InvalidInput(format!(
            "target_h must be positive, got {target_h}"
        )));
    }
    Ok(())
}

/// Counter-clockwise polygon with `max(8, ⌈2πr/h⌉)` vertices on the circle.
pub fn circle_loop(center: Point, radius: f64, target_h: f64) -> Vec<Point> {
    let n = ((std::f64::consts::TAU * radius / target_h).ceil() as usize).max(8);
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            [
                center[0] + radius * theta.cos(),
                center[1] + radius * theta.sin(),
            ]
        })
        .collect()
}

fn polygon_area(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            0.5 * (a[0] * b[1] - b[0] * a[1])
        })
        .sum()
}

/// Splits every polygon edge into `max(1, round(len / h))` equal pieces.
fn subdivide(vertices: &[Point], markers: &[Marker], target_h: f64) -> (Vec<Point>, Vec<Marker>) {
    let n = vertices.len();
    let mut points = Vec::new();
    let mut out_markers = Vec::new();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        let pieces = ((distance(a, b) / target_h).round() as usize).max(1);
        for k in 0..pieces {
            let s = k as f64 / pieces as f64;
            points.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            out_markers.push(markers[i]);
        }
    }
    (points, out_markers)
}

fn oriented(mut points: Vec<Point>, mut markers: Vec<Marker>, ccw: bool) -> (Vec<Point>, Vec<Marker>) {
    if (polygon_area(&points) > 0.0) != ccw {
        points.reverse();
        // Edge i -> i+1 of the reversed loop is edge (n-2-i) -> (n-1-i) of the original.
        let n = markers.len();
        let old = markers.clone();
        for i in 0..n {
            markers[i] = old[(2 * n - 2 - i) % n];
        }
    }
    (points, markers)
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return distance(p, a);
    }
    let s = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + s * d[0], a[1] + s * d[1]])
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// True when closed segments `p1p2` and `q1q2` share at least one point.
fn segments_touch(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Rejects any pair of non-adjacent segments that touch, and zero-length segments.
fn check_simple(points: &[Point], segments: &[[usize; 2]]) -> Result<(), MeshError> {
    let boxes: Vec<[f64; 4]> = segments
        .iter()
        .map(|s| {
            let (a, b) = (points[s[0]], points[s[1]]);
            [a[0].min(b[0]), a[1].min(b[1]), a[0].max(b[0]), a[1].max(b[1])]
        })
        .collect();
    for (i, s) in segments.iter().enumerate() {
        if points[s[0]] == points[s[1]] {
            return Err(MeshError::SelfIntersection { first: i, second: i });
        }
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if boxes[j][0] > boxes[i][2] {
                break;
            }
            if boxes[j][1] > boxes[i][3] || boxes[i][1] > boxes[j][3] {
                continue;
            }
            let (s, t) = (segments[i], segments[j]);
            let shared = [s[0], s[1]].iter().filter(|v| t.contains(v)).count();
            let (p1, p2, q1, q2) = (points[s[0]], points[s[1]], points[t[0]], points[t[1]]);
            let hit = match shared {
                0 => segments_touch(p1, p2, q1, q2),
                1 => {
                    // Adjacent segments may only meet at their common node: reject
                    // folding back onto each other.
                    let (far_s, far_t) = if s[0] == t[0] || s[0] == t[1] {
                        (p2, if s[0] == t[0] { q2 } else { q1 })
                    } else {
                        (p1, if s[1] == t[0] { q2 } else { q1 })
                    };
                    let common = if t.contains(&s[0]) { p1 } else { p2 };
                    orient(common, far_s, far_t) == 0.0
                        && (far_t[0] - common[0]) * (far_s[0] - common[0])
                            + (far_t[1] - common[1]) * (far_s[1] - common[1])
                            > 0.0
                }
                _ => true,
            };
            if hit {
                return Err(MeshError::SelfIntersection {
                    first: i.min(j),
                    second: i.max(j),
                });
            }
        }
    }
    Ok(())
}

/// Triangulates the region bounded by `loops`. Loop points are copied verbatim.
fn triangulate(loops: &[InputLoop], target_h: f64, policy: SplitPolicy) -> Result<Mesh, MeshError> {
    let mut points: Vec<Point> = Vec::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();
    let mut seg_markers: Vec<Marker> = Vec::new();
    for lp in loops {
        if lp.points.len() < 3 {
            return Err(MeshError::InvalidInput("boundary loop with fewer than 3 points".into()));
        }
        let base = points.len();
        let n = lp.points.len();
        points.extend_from_slice(&lp.points);
        for i in 0..n {
            segments.push([base + i, base + (i + 1) % n]);
            seg_markers.push(lp.markers[i]);
        }
    }
    check_simple(&points, &segments)?;

    let outer: Vec<&InputLoop> = loops.iter().filter(|l| l.kind == LoopKind::Outer).collect();
    if outer.len() != 1 {
        return Err(MeshError::InvalidInput(format!(
            "expected one outer boundary loop, found {}",
            outer.len()
        )));
    }
    let outer_area = polygon_area(&outer[0].points).abs();
    let has_interface = loops.iter().any(|l| l.kind == LoopKind::Interface);

    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut conflicts = Vec::new();
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(
        vertices,
        segments.clone(),
        |e| conflicts.push(e),
    )
    .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if !conflicts.is_empty() || cdt.num_vertices() != points.len() {
        return Err(MeshError::Triangulation(format!(
            "{} conflicting boundary segments",
            conflicts.len()
        )));
    }

    let h2 = target_h * target_h;
    let expected = (outer_area / (0.4 * h2)).ceil() as usize;
    let mut params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(30.0))
        .with_max_allowed_area(AREA_FACTOR * h2)
        .with_min_required_area(MIN_AREA_FACTOR * h2)
        .with_max_additional_vertices(20 * expected + 10 * points.len())
        .exclude_outer_faces(!has_interface);
    if policy == SplitPolicy::KeepBoundary {
        params = params.keep_constraint_edges();
    }
    let result = cdt.refine(params);
    if !result.refinement_complete {
        log::warn!("mesh refinement hit its vertex budget");
    }
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let holes: Vec<&[Point]> = loops
        .iter()
        .filter(|l| l.kind == LoopKind::Hole)
        .map(|l| l.points.as_slice())
        .collect();
    let interfaces: Vec<&[Point]> = loops
        .iter()
        .filter(|l| l.kind == LoopKind::Interface)
        .map(|l| l.points.as_slice())
        .collect();

    let mut raw_triangles = Vec::new();
    let mut regions = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let idx = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        let pos: Vec<Point> = vs.iter().map(|v| [v.position().x, v.position().y]).collect();
        let c = [
            (pos[0][0] + pos[1][0] + pos[2][0]) / 3.0,
            (pos[0][1] + pos[1][1] + pos[2][1]) / 3.0,
        ];
        if !point_in_polygon(c, &outer[0].points) || holes.iter().any(|h| point_in_polygon(c, h)) {
            continue;
        }
        let region = if interfaces.iter().any(|l| point_in_polygon(c, l)) {
            REGION_INSIDE
        } else {
            REGION_OUTSIDE
        };
        let tri = if signed_area(pos[0], pos[1], pos[2]) > 0.0 {
            idx
        } else {
            [idx[0], idx[2], idx[1]]
        };
        raw_triangles.push(tri);
        regions.push(region);
    }

    // Compact: input points first (in order), then Steiner points in insertion order.
    let all_positions: Vec<Point> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut used = vec![false; all_positions.len()];
    for tri in &raw_triangles {
        for &v in tri {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; all_positions.len()];
    let mut nodes = Vec::new();
    for (i, p) in all_positions.iter().enumerate() {
        if used[i] {
            remap[i] = nodes.len();
            nodes.push(*p);
        }
    }
    let triangles: Vec<[usize; 3]> = raw_triangles
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();

    // Map constraint edges back to the input segments they lie on.
    let n_input = points.len();
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        incident.entry(seg[0]).or_default().push(s);
        incident.entry(seg[1]).or_default().push(s);
    }
    let host_segments = |v: usize, p: Point| -> Vec<usize> {
        if v < n_input {
            return incident.get(&v).cloned().unwrap_or_default();
        }
        segments
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let (a, b) = (points[s[0]], points[s[1]]);
                point_segment_distance(p, a, b) <= 1e-9 * distance(a, b).max(1e-300)
            })
            .map(|(i, _)| i)
            .collect()
    };
    let mut boundary = Vec::new();
    for edge in cdt.undirected_edges() {
        if !cdt.is_constraint_edge(edge.fix()) {
            continue;
        }
        let [va, vb] = edge.vertices();
        let (ia, ib) = (va.fix().index(), vb.fix().index());
        if !used[ia] || !used[ib] {
            continue;
        }
        let (pa, pb) = (all_positions[ia], all_positions[ib]);
        let ha = host_segments(ia, pa);
        let hb = host_segments(ib, pb);
        let seg = match ha.iter().find(|s| hb.contains(s)) {
            Some(&s) => s,
            None => {
                return Err(MeshError::Triangulation(format!(
                    "constraint edge ({ia}, {ib}) does not lie on an input segment"
                )))
            }
        };
        let (sa, sb) = (points[segments[seg][0]], points[segments[seg][1]]);
        let forward = (pb[0] - pa[0]) * (sb[0] - sa[0]) + (pb[1] - pa[1]) * (sb[1] - sa[1]) > 0.0;
        let nodes_ab = if forward {
            [remap[ia], remap[ib]]
        } else {
            [remap[ib], remap[ia]]
        };
        boundary.push(BoundaryEdge {
            nodes: nodes_ab,
            marker: seg_markers[seg],
        });
    }
    boundary.sort_by_key(|e| (e.nodes[0], e.nodes[1]));

    let mut nodes = nodes;
    let mut fixed = vec![false; nodes.len()];
    for e in &boundary {
        fixed[e.nodes[0]] = true;
        fixed[e.nodes[1]] = true;
    }
    smooth(&mut nodes, &triangles, &fixed);
    Mesh::new(nodes, triangles, regions, boundary)
}

/// Smart Laplacian smoothing: moves each free node to the average of its neighbours
/// when that raises the worst quality among its triangles.
fn smooth(nodes: &mut [Point], triangles: &[[usize; 3]], fixed: &[bool]) {
    let mut incident = vec![Vec::new(); nodes.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }
    let worst = |nodes: &[Point], ts: &[usize]| {
        ts.iter()
            .map(|&t| {
                let [a, b, c] = triangles[t].map(|v| nodes[v]);
                if signed_area(a, b, c) <= 0.0 {
                    0.0
                } else {
                    triangle_quality(a, b, c).value()
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    for _ in 0..SMOOTHING_SWEEPS {
        let mut moved = false;
        for v in 0..nodes.len() {
            if fixed[v] || incident[v].is_empty() {
                continue;
            }
            let (mut sum, mut count) = ([0.0, 0.0], 0.0);
            for &t in &incident[v] {
                for &w in &triangles[t] {
                    if w != v {
                        sum[0] += nodes[w][0];
                        sum[1] += nodes[w][1];
                        count += 1.0;
                    }
                }
            }
            let old = nodes[v];
            let before = worst(nodes, &incident[v]);
            // Candidates: the neighbour average, and the apex of the equilateral
            // triangle over the opposite edge of the worst incident triangle.
            let mut targets = vec![[sum[0] / count, sum[1] / count]];
            let t_worst = incident[v]
                .iter()
                .copied()
                .min_by(|&a, &b| worst(nodes, &[a]).total_cmp(&worst(nodes, &[b])))
                .expect("free node has triangles");
            let tri = triangles[t_worst];
            let k = tri.iter().position(|&w| w == v).expect("node in its triangle");
            let (p, q) = (nodes[tri[(k + 1) % 3]], nodes[tri[(k + 2) % 3]]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            // Counter-clockwise triangles put v on the left of p→q.
            let s3 = 0.5 * 3f64.sqrt();
            targets.push([mid[0] - s3 * (q[1] - p[1]), mid[1] + s3 * (q[0] - p[0])]);
            let mut best = (before, old);
            for target in targets {
                for frac in [1.0, 0.5, 0.25] {
                    nodes[v] = [
                        old[0] + frac * (target[0] - old[0]),
                        old[1] + frac * (target[1] - old[1]),
                    ];
                    let q = worst(nodes, &incident[v]);
                    if q > best.0 {
                        best = (q, nodes[v]);
                    }
                }
            }
            nodes[v] = best.1;
            if best.0 > before + 1e-6 {
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Rectangle `bounds` with an interface loop approximating the given circle.
pub fn generate_interface_mesh(
    bounds: Rect,
    circle_center: Point,
    circle_radius: f64,
    target_h: f64,
) -> Result<Mesh, MeshError> {
    check_h(target_h)?;
    if !(circle_radius > 0.0) {
        return Err(MeshError::InvalidInput(format!(
            "circle radius must be positive, got {circle_radius}"
        )));
    }
    let clear = target_h;
    if circle_center[0] - circle_radius < bounds.min[0] + clear
        || circle_center[0] + circle_radius > bounds.max[0] - clear
        || circle_center[1] - circle_radius < bounds.min[1] + clear
        || circle_center[1] + circle_radius > bounds.max[1] - clear
    {
        return Err(MeshError::InvalidInput(format!(
            "circle (center {:?}, radius {}) is not strictly inside the rectangle with clearance {}",
            circle_center, circle_radius, clear
        )));
    }
    let interface = circle_loop(circle_center, circle_radius, target_h);
    generate_interface_mesh_with_loop(bounds, &interface, target_h)
}

/// Rectangle `bounds` with an arbitrary closed interface polyline, kept as given.
pub fn generate_interface_mesh_with_loop(
    bounds: Rect,
    interface: &[Point],
    target_h: f64,
) -> Result<Mesh, MeshError> {
    check_h(target_h)?;
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
        return Err(MeshError::InvalidInput(format!("degenerate rectangle {:?}", bounds)));
    }
    if interface.len() < 3 {
        return Err(MeshError::InvalidInput("interface loop needs at least 3 points".into()));
    }
    for p in interface {
        if p[0] <= bounds.min[0] || p[0] >= bounds.max[0] || p[1] <= bounds.min[1] || p[1] >= bounds.max[1] {
            return Err(MeshError::InvalidInput(format!(
                "interface point {:?} is not strictly inside the rectangle",
                p
            )));
        }
    }
    let corners = bounds.corners();
    let (outer_pts, outer_markers) = subdivide(&corners, &[Marker::Outer; 4], target_h);
    let (shape_pts, shape_markers) = oriented(
        interface.to_vec(),
        vec![Marker::Shape; interface.len()],
        true,
    );
    let loops = [
        InputLoop {
            points: outer_pts,
            markers: outer_markers,
            kind: LoopKind::Outer,
        },
        InputLoop {
            points: shape_pts,
            markers: shape_markers,
            kind: LoopKind::Interface,
        },
    ];
    triangulate(&loops, target_h, SplitPolicy::KeepBoundary)
}

/// Structured `nx × ny` grid of `rect`, each cell split along its rising diagonal, with
/// every boundary edge marked OUTER.
pub fn rectangle_grid(rect: Rect, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 || !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(MeshError::InvalidInput(format!("grid {nx}x{ny} on {:?}", rect)));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                rect.min[0] + rect.width() * i as f64 / nx as f64,
                rect.min[1] + rect.height() * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    let mut push = |a: usize, b: usize| boundary.push(BoundaryEdge { nodes: [a, b], marker: Marker::Outer });
    for i in 0..nx {
        push(id(i, 0), id(i + 1, 0));
        push(id(i + 1, ny), id(i, ny));
    }
    for j in 0..ny {
        push(id(nx, j), id(nx, j + 1));
        push(id(0, j + 1), id(0, j));
    }
    let regions = vec![REGION_OUTSIDE; triangles.len()];
    Mesh::new(nodes, triangles, regions, boundary)
}

const BRIDGE_DIRICHLET: [[Point; 2]; 2] = [[[0.0, 0.0], [1.0, 0.0]], [[9.0, 0.0], [10.0, 0.0]]];
const BRIDGE_NEUMANN: [[Point; 2]; 1] = [[[4.5, 0.0], [5.5, 0.0]]];

fn bridge_marker(a: Point, b: Point) -> Marker {
    let same = |s: &[Point; 2]| (s[0] == a && s[1] == b) || (s[0] == b && s[1] == a);
    if BRIDGE_DIRICHLET.iter().any(same) {
        Marker::Dirichlet
    } else if BRIDGE_NEUMANN.iter().any(same) {
        Marker::Neumann
    } else {
        Marker::Outer
    }
}

/// Polygon `outline` minus circular `holes`.
///
/// Outline edges `(0,0)–(1,0)` and `(9,0)–(10,0)` are marked DIRICHLET, `(4.5,0)–(5.5,0)`
/// NEUMANN, everything else OUTER; hole boundaries are SHAPE.
pub fn generate_bridge_mesh(
    outline: &[Point],
    holes: &[(Point, f64)],
    target_h: f64,
) -> Result<Mesh, MeshError> {
    check_h(target_h)?;
    if outline.len() < 3 {
        return Err(MeshError::InvalidInput("outline needs at least 3 vertices".into()));
    }
    let n = outline.len();
    for (k, &(c, r)) in holes.iter().enumerate() {
        if !(r > 0.0) {
            return Err(MeshError::InvalidInput(format!("hole {k} has radius {r}")));
        }
        if !point_in_polygon(c, outline) {
            return Err(MeshError::InvalidInput(format!("hole {k} center lies outside the outline")));
        }
        let gap = (0..n)
            .map(|i| point_segment_distance(c, outline[i], outline[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        if gap <= r {
            return Err(MeshError::InvalidInput(format!(
                "hole {k} touches the outline (distance {gap}, radius {r})"
            )));
        }
        for (j, &(c2, r2)) in holes.iter().enumerate().take(k) {
            if distance(c, c2) <= r + r2 {
                return Err(MeshError::InvalidInput(format!("holes {j} and {k} intersect")));
            }
        }
    }
    let markers: Vec<Marker> = (0..n).map(|i| bridge_marker(outline[i], outline[(i + 1) % n])).collect();
    let (outline_ccw, markers_ccw) = oriented(outline.to_vec(), markers, true);
    let (outer_pts, outer_markers) = subdivide(&outline_ccw, &markers_ccw, target_h);
    let mut loops = vec![InputLoop {
        points: outer_pts,
        markers: outer_markers,
        kind: LoopKind::Outer,
    }];
    for &(c, r) in holes {
        let pts = circle_loop(c, r, target_h);
        let (pts, mk) = oriented(pts.clone(), vec![Marker::Shape; pts.len()], false);
        loops.push(InputLoop {
            points: pts,
            markers: mk,
            kind: LoopKind::Hole,
        });
    }
    triangulate(&loops, target_h, SplitPolicy::KeepBoundary)
}

fn loops_of(mesh: &Mesh) -> Result<Vec<InputLoop>, MeshError> {
    let nodes = mesh.nodes();
    mesh.boundary_loops()?
        .into_iter()
        .map(|lp| {
            let kind = if !lp.is_shape() {
                LoopKind::Outer
            } else if lp.interior {
                LoopKind::Interface
            } else {
                LoopKind::Hole
            };
            Ok(InputLoop {
                points: lp.nodes.iter().map(|&i| nodes[i]).collect(),
                markers: lp.markers,
                kind,
            })
        })
        .collect()
}

/// Inserts evenly spaced points on loop edges longer than `1.5 * target_h`.
fn presplit(loops: &[InputLoop], target_h: f64) -> Vec<InputLoop> {
    loops
        .iter()
        .map(|lp| {
            let n = lp.points.len();
            let mut points = Vec::with_capacity(n);
            let mut markers = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = (lp.points[i], lp.points[(i + 1) % n]);
                let len = distance(a, b);
                let pieces = if len > 1.5 * target_h {
                    (len / target_h).round() as usize
                } else {
                    1
                };
                points.push(a);
                markers.push(lp.markers[i]);
                for k in 1..pieces {
                    let s = k as f64 / pieces as f64;
                    points.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                    markers.push(lp.markers[i]);
                }
            }
            InputLoop {
                points,
                markers,
                kind: lp.kind,
            }
        })
        .collect()
}

/// Re-triangulates the region bounded by the mesh's boundary polylines.
///
/// Boundary nodes keep their exact coordinates; interior nodes are regenerated. If
/// the boundary alone does not admit a mesh of quality 0.3, overly long boundary
/// edges are subdivided (the polylines stay geometrically the same). The best mesh
/// found is returned even if it falls short of that quality, which happens when the
/// boundary itself has very acute corners.
pub fn remesh(mesh: &Mesh, target_h: f64) -> Result<Mesh, MeshError> {
    check_h(target_h)?;
    let loops = loops_of(mesh)?;
    let first = triangulate(&loops, target_h, SplitPolicy::KeepBoundary)?;
    let q1 = mesh_quality(&first)?;
    if q1 >= QUALITY_GOAL {
        return Ok(first);
    }
    let mut best = (q1, first);
    let split = presplit(&loops, target_h);
    for (lps, policy) in [
        (&split, SplitPolicy::KeepBoundary),
        (&split, SplitPolicy::AllowSplits),
    ] {
        let candidate = triangulate(lps, target_h, policy)?;
        let q = mesh_quality(&candidate)?;
        if q >= QUALITY_GOAL {
            return Ok(candidate);
        }
        if q > best.0 {
            best = (q, candidate);
        }
    }
    log::warn!("remesh reached quality {:.3e} only", best.0);
    Ok(best.1)
}
