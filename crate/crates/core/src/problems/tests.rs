use super::*;
use crate::fem::{assemble_stiffness, p1_gradients, SolverOptions};
use crate::field::{Arity, NodalField};
use crate::mesh::{generate_bridge_mesh, generate_interface_mesh, generate_interface_mesh_with_loop, Marker, Mesh, Rect};

fn unit_box() -> Rect {
    Rect::new([-1.0, -0.5], [0.0, 0.5])
}

fn ellipse(c: [f64; 2], a: f64, b: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            [c[0] + a * th.cos(), c[1] + b * th.sin()]
        })
        .collect()
}

fn interface_setup(h: f64) -> (InterfaceProblem, Mesh) {
    let reference = generate_interface_mesh_with_loop(unit_box(), &ellipse([-0.5, 0.0], 0.14, 0.3, 40), 0.06).unwrap();
    let mut prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
    prob.solver = SolverOptions::with_tolerance(1e-14);
    let target = prob.generate_target(&reference).unwrap();
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, h).unwrap();
    (prob.with_target(target), mesh)
}

/// Smooth bump, zero outside a disc of radius `r` around `c`.
fn bump(mesh: &Mesh, c: [f64; 2], r: f64, dir: [f64; 2]) -> NodalField {
    let fixed = mesh.frame_nodes();
    let mut w = NodalField::from_fn_vector(mesh.nodes(), |p| {
        let d2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (r * r);
        let s = if d2 < 1.0 { (1.0 - d2).powi(2) } else { 0.0 };
        [s * dir[0], s * dir[1]]
    });
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            w.values_mut()[2 * i] = 0.0;
            w.values_mut()[2 * i + 1] = 0.0;
        }
    }
    w
}

fn central_difference<P: ShapeProblem>(prob: &P, mesh: &Mesh, w: &NodalField, t: f64) -> f64 {
    let jp = prob.evaluate(&mesh.deform(w, t).unwrap()).unwrap().1;
    let jm = prob.evaluate(&mesh.deform(w, -t).unwrap()).unwrap().1;
    (jp - jm) / (2.0 * t)
}

#[test]
fn equal_conductivities_without_flux_give_zero_state() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.17).unwrap();
    let prob = InterfaceProblem {
        kappa_in: 1.0,
        kappa_out: 1.0,
        flux: 0.0,
        nu: 0.0,
        target: None,
        solver: SolverOptions::default(),
    };
    let (y, lambda) = prob.state(&mesh).unwrap();
    assert!(y.max_abs() <= 1e-14);
    assert!(lambda.abs() <= 1e-14);
}

#[test]
fn equal_conductivities_ignore_the_interface() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.17).unwrap();
    let flipped: Vec<u32> = mesh.cell_region().iter().map(|&r| 1 - r).collect();
    let other = Mesh::new(mesh.nodes().to_vec(), mesh.triangles().to_vec(), flipped, mesh.boundary_edges().to_vec()).unwrap();
    let prob = InterfaceProblem {
        kappa_in: 2.0,
        kappa_out: 2.0,
        flux: 10.0,
        nu: 0.0,
        target: None,
        solver: SolverOptions::default(),
    };
    let (a, _) = prob.state(&mesh).unwrap();
    let (b, _) = prob.state(&other).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= 1e-8);
    }
}

#[test]
fn constructor_rejects_degenerate_parameters() {
    assert!(InterfaceProblem::new(1.0, 1.0, 10.0, 0.0).is_err());
    assert!(InterfaceProblem::new(0.0, 1.0, 10.0, 0.0).is_err());
    assert!(InterfaceProblem::new(0.05, 1.0, 10.0, -1.0).is_err());
    assert!(ComplianceProblem::new([0.0; 2], [0.0, -0.25], 1.0, 0.5, 0.1).is_err());
    assert!(ComplianceProblem::new([0.0; 2], [0.0, -0.25], -1.0, 0.3, 0.1).is_err());
}

#[test]
fn interface_state_residual_and_mean() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.035).unwrap();
    let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
    let (y, lambda) = prob.state(&mesh).unwrap();
    assert!(y.is_finite());
    assert!(interface::mean(&mesh, &y).abs() <= 1e-12);
    let k = assemble_stiffness(&mesh, Arity::Scalar, &prob.cell_kappa(&mesh)).unwrap();
    let b = crate::fem::boundary_load(&mesh, Marker::Outer, crate::fem::BoundaryData::Scalar(10.0)).unwrap();
    let c = crate::fem::lumped_mass(&mesh);
    let ky = k.mul_vec(y.values());
    let bnorm = crate::field::dot(b.coeffs(), b.coeffs()).sqrt();
    let r: f64 = (0..ky.len()).map(|i| (ky[i] + lambda * c[i] - b.coeffs()[i]).powi(2)).sum::<f64>().sqrt();
    assert!(r <= 1e-10 * bnorm);
    // Net flux 10·4 is absorbed by the multiplier.
    assert!((lambda - 40.0 / mesh.area()).abs() <= 1e-10);
}

#[test]
fn target_on_its_own_mesh_is_bitwise() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.1).unwrap();
    let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
    let target = prob.generate_target(&mesh).unwrap();
    let (y, _) = prob.state(&mesh).unwrap();
    assert_eq!(target.on_mesh(&mesh).values(), y.values());
}

#[test]
fn transferred_target_has_small_mean() {
    let (prob, mesh) = interface_setup(0.035);
    let ybar = prob.target.as_ref().unwrap().on_mesh(&mesh);
    assert!(interface::mean(&mesh, &ybar).abs() <= 1e-6);
}

#[test]
fn adjoint_is_zero_mean_and_vanishes_at_the_target() {
    let (prob, mesh) = interface_setup(0.17);
    let s = prob.solve(&mesh).unwrap();
    assert!(interface::mean(&mesh, &s.p).abs() <= 1e-12);
    let (p, mu) = prob.adjoint(&mesh, &s.y, &s.y).unwrap();
    assert!(p.max_abs() <= 1e-14 && mu.abs() <= 1e-14);
}

#[test]
fn interface_objective_vanishes_on_the_reference_mesh() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.1).unwrap();
    let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
    let target = prob.generate_target(&mesh).unwrap();
    let prob = prob.with_target(target);
    let (_, j) = prob.evaluate(&mesh).unwrap();
    assert_eq!(j, 0.0);
    let mut with_perimeter = prob.clone();
    with_perimeter.nu = 0.5;
    let (_, j) = with_perimeter.evaluate(&mesh).unwrap();
    assert!((j - 0.5 * mesh.shape_length()).abs() <= 1e-14);
}

/// The continuous shape derivative of the tracking functional evaluated element by
/// element with edge-midpoint quadrature and explicit Jacobians.
fn interface_derivative_by_quadrature(prob: &InterfaceProblem, mesh: &Mesh, s: &InterfaceState, w: &NodalField) -> f64 {
    let kappa = prob.cell_kappa(mesh);
    let (y, p, yb) = (s.y.values(), s.p.values(), s.ybar.values());
    let wv = w.values();
    // Nodal values of ∇ȳ·W, interpolated linearly.
    let gw: Vec<f64> = (0..mesh.node_count())
        .map(|j| s.ybar_grad[j][0] * wv[2 * j] + s.ybar_grad[j][1] * wv[2 * j + 1])
        .collect();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = p1_gradients(mesh.triangle_points(t));
        let mut dw = [[0.0; 2]; 2];
        for a in 0..3 {
            for i in 0..2 {
                for k in 0..2 {
                    dw[i][k] += wv[2 * tri[a] + i] * g[a][k];
                }
            }
        }
        let div = dw[0][0] + dw[1][1];
        let mut gy = [0.0; 2];
        let mut gp = [0.0; 2];
        for a in 0..3 {
            for k in 0..2 {
                gy[k] += y[tri[a]] * g[a][k];
                gp[k] += p[tri[a]] * g[a][k];
            }
        }
        // E = div W I − ∇W − ∇Wᵀ
        let mut e_mat = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                e_mat[i][k] = if i == k { div } else { 0.0 } - dw[i][k] - dw[k][i];
            }
        }
        let mut bilinear = 0.0;
        for i in 0..2 {
            for k in 0..2 {
                bilinear += gy[i] * e_mat[i][k] * gp[k];
            }
        }
        total += kappa[t] * area * bilinear;
        let mid = |f: &dyn Fn(usize) -> f64| {
            let v = [f(tri[0]), f(tri[1]), f(tri[2])];
            [(v[0] + v[1]) / 2.0, (v[1] + v[2]) / 2.0, (v[2] + v[0]) / 2.0]
        };
        let e = mid(&|j| y[j] - yb[j]);
        let gwm = mid(&|j| gw[j]);
        let ym = mid(&|j| y[j]);
        let pm = mid(&|j| p[j]);
        for q in 0..3 {
            let wq = area / 3.0;
            total += wq * (0.5 * div * e[q] * e[q] - e[q] * gwm[q] + div * (s.lambda * pm[q] + s.mu * ym[q]));
        }
    }
    let nodes = mesh.nodes();
    for edge in mesh.edges_with(Marker::Shape) {
        let [a, b] = edge.nodes;
        let d = [nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1]];
        let dd = [wv[2 * b] - wv[2 * a], wv[2 * b + 1] - wv[2 * a + 1]];
        total += prob.nu * (d[0] * dd[0] + d[1] * dd[1]) / d[0].hypot(d[1]);
    }
    total
}

#[test]
fn interface_derivative_matches_quadrature_route() {
    let (mut prob, mesh) = interface_setup(0.1);
    prob.nu = 0.3;
    let s = prob.solve(&mesh).unwrap();
    let dj = prob.shape_derivative(&mesh, &s).unwrap();
    for (c, dir) in [([-0.5, 0.2], [1.0, 0.0]), ([-0.35, 0.0], [0.3, -1.0]), ([-0.6, -0.1], [-1.0, 0.5])] {
        let w = bump(&mesh, c, 0.25, dir);
        let a = dj.apply(&w);
        let b = interface_derivative_by_quadrature(&prob, &mesh, &s, &w);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn interface_derivative_matches_finite_differences() {
    let (mut prob, mesh) = interface_setup(0.1);
    prob.nu = 0.01;
    let s = prob.solve(&mesh).unwrap();
    let dj = prob.shape_derivative(&mesh, &s).unwrap();
    for (c, dir) in [([-0.5, 0.2], [1.0, 0.0]), ([-0.3, -0.05], [0.3, -1.0])] {
        let w = bump(&mesh, c, 0.25, dir);
        let exact = dj.apply(&w);
        let fd = central_difference(&prob, &mesh, &w, 1e-5);
        assert!((exact - fd).abs() <= 1e-5 * exact.abs(), "{exact} vs {fd}");
    }
}

fn bridge_setup(h: f64) -> (ComplianceProblem, Mesh) {
    let outline = [
        [0.0, 0.0], [0.0, 1.0], [2.5, 4.0], [5.0, 5.0], [7.5, 4.0], [10.0, 1.0],
        [10.0, 0.0], [9.0, 0.0], [5.5, 0.0], [4.5, 0.0], [1.0, 0.0],
    ];
    let holes = [([2.5, 1.0], 0.5), ([3.5, 3.0], 0.5), ([6.5, 3.0], 0.5), ([7.5, 1.0], 0.5)];
    let mesh = generate_bridge_mesh(&outline, &holes, h).unwrap();
    let mut prob = ComplianceProblem::new([0.0, 0.0], [0.0, -0.25], 1.0, 0.3, 0.099).unwrap();
    prob.solver = SolverOptions::with_tolerance(1e-12);
    (prob, mesh)
}

#[test]
fn lame_parameters() {
    let p = ComplianceProblem::new([0.0; 2], [0.0; 2], 1.0, 0.3, 0.0).unwrap();
    assert!((p.lame_mu() - 1.0 / 2.6).abs() <= 1e-15);
    assert!((p.lame_lambda() - 0.3 / (1.3 * 0.4)).abs() <= 1e-15);
}

#[test]
fn compliance_needs_a_dirichlet_boundary() {
    let mesh = crate::testutil::unit_square_grid(4);
    let prob = ComplianceProblem::new([0.0, -1.0], [0.0; 2], 1.0, 0.3, 0.0).unwrap();
    assert!(matches!(prob.state(&mesh), Err(crate::Error::InvalidParameter(_))));
}

#[test]
fn compliance_is_positive_and_equals_energy() {
    let (prob, mesh) = bridge_setup(0.25);
    let y = prob.state(&mesh).unwrap();
    let clamped = mesh.nodes_with(Marker::Dirichlet);
    for (i, &c) in clamped.iter().enumerate() {
        if c {
            assert_eq!(y.vector_at(i), [0.0, 0.0]);
        }
    }
    let mu = NodalField::scalar(vec![prob.lame_mu(); mesh.node_count()]);
    let k = crate::fem::assemble_elasticity(&mesh, &mu, prob.lame_lambda()).unwrap();
    let energy = k.bilinear(y.values(), y.values());
    let j = prob.objective_value(&mesh, &y).unwrap() - prob.volume_weight * mesh.area();
    assert!(j > 0.0);
    assert!((j - energy).abs() <= 1e-9 * j);
}

/// `DJ[W] = ∫ 2 Hε(y):(∇y ∇W) − Hε(y):ε(y) div W + ℓ div W + 2 f·y div W` with centroid
/// quadrature and explicit tensors.
fn compliance_derivative_by_quadrature(prob: &ComplianceProblem, mesh: &Mesh, y: &NodalField, w: &NodalField) -> f64 {
    let (mu, lambda) = (prob.lame_mu(), prob.lame_lambda());
    let (yv, wv) = (y.values(), w.values());
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = p1_gradients(mesh.triangle_points(t));
        let jac = |v: &[f64]| {
            let mut m = [[0.0; 2]; 2];
            for a in 0..3 {
                for i in 0..2 {
                    for k in 0..2 {
                        m[i][k] += v[2 * tri[a] + i] * g[a][k];
                    }
                }
            }
            m
        };
        let (gy, gw) = (jac(yv), jac(wv));
        let div = gw[0][0] + gw[1][1];
        let eps = |m: [[f64; 2]; 2]| [[m[0][0], 0.5 * (m[0][1] + m[1][0])], [0.5 * (m[0][1] + m[1][0]), m[1][1]]];
        let e = eps(gy);
        let tr = e[0][0] + e[1][1];
        let he = [[2.0 * mu * e[0][0] + lambda * tr, 2.0 * mu * e[0][1]], [2.0 * mu * e[1][0], 2.0 * mu * e[1][1] + lambda * tr]];
        let mut prod = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                prod[i][j] = gy[i][0] * gw[0][j] + gy[i][1] * gw[1][j];
            }
        }
        let ddot = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1];
        let ym = [0, 1].map(|c| (yv[2 * tri[0] + c] + yv[2 * tri[1] + c] + yv[2 * tri[2] + c]) / 3.0);
        let fy = prob.body_force[0] * ym[0] + prob.body_force[1] * ym[1];
        total += area * (2.0 * ddot(he, prod) - ddot(he, e) * div + prob.volume_weight * div + 2.0 * fy * div);
    }
    total
}

#[test]
fn compliance_derivative_matches_quadrature_route() {
    let (mut prob, mesh) = bridge_setup(0.25);
    prob.body_force = [0.05, -0.1];
    let y = prob.state(&mesh).unwrap();
    let dj = prob.derivative(&mesh, &y);
    for (c, dir) in [([3.5, 3.0], [0.0, 1.0]), ([7.0, 1.6], [1.0, 0.4])] {
        let w = bump(&mesh, c, 0.9, dir);
        let a = dj.apply(&w);
        let b = compliance_derivative_by_quadrature(&prob, &mesh, &y, &w);
        assert!((a - b).abs() <= 1e-11 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn compliance_derivative_matches_finite_differences() {
    let (mut prob, mesh) = bridge_setup(0.25);
    prob.body_force = [0.05, -0.1];
    let s = prob.solve(&mesh).unwrap();
    let dj = prob.shape_derivative(&mesh, &s).unwrap();
    for (c, dir) in [([3.5, 3.0], [0.0, 1.0]), ([7.0, 1.6], [1.0, 0.4])] {
        let w = bump(&mesh, c, 0.9, dir);
        let exact = dj.apply(&w);
        let fd = central_difference(&prob, &mesh, &w, 1e-5);
        assert!((exact - fd).abs() <= 1e-6 * exact.abs(), "{exact} vs {fd}");
    }
}

#[test]
fn neumann_term_matches_finite_differences_when_the_load_edge_moves() {
    let (prob, mesh) = bridge_setup(0.25);
    let s = prob.solve(&mesh).unwrap();
    let dj = prob.shape_derivative(&mesh, &s).unwrap();
    // Slide the loaded segment's nodes along the bottom, ignoring the frame constraint.
    let neumann = mesh.nodes_with(Marker::Neumann);
    let w = NodalField::vector(
        mesh.nodes()
            .iter()
            .enumerate()
            .map(|(i, p)| if neumann[i] { [0.2 * (p[0] - 5.0), 0.0] } else { [0.0, 0.0] })
            .collect(),
    );
    let exact = dj.apply(&w);
    let fd = central_difference(&prob, &mesh, &w, 1e-5);
    assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1e-8), "{exact} vs {fd}");
}


#[test]
fn adjoint_pair_is_self_consistent() {
    let (prob, mesh) = interface_setup(0.1);
    let s = prob.solve(&mesh).unwrap();
    let k = assemble_stiffness(&mesh, Arity::Scalar, &prob.cell_kappa(&mesh)).unwrap();
    let lhs = k.bilinear(s.y.values(), s.p.values());
    let m = crate::fem::assemble_mass(&mesh, Arity::Scalar);
    let e: Vec<f64> = s.y.values().iter().zip(s.ybar.values()).map(|(a, b)| a - b).collect();
    let rhs = -m.bilinear(&e, s.y.values());
    assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs(), "{lhs} vs {rhs}");
}

#[test]
fn perimeter_term_approximates_the_circle() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.02).unwrap();
    let mut prob = InterfaceProblem::new(0.05, 1.0, 10.0, 1.0).unwrap();
    let y = NodalField::zeros(Arity::Scalar, mesh.node_count());
    prob.target = None;
    let j = prob.objective_value(&mesh, &y, &y);
    let exact = std::f64::consts::TAU * 0.2;
    assert!((j - exact).abs() <= 1e-3 * exact);
}

#[test]
fn zero_residual_zero_adjoint_gives_zero_derivative() {
    let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.1).unwrap();
    let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
    let target = prob.generate_target(&mesh).unwrap();
    let prob = prob.with_target(target);
    let s = prob.solve(&mesh).unwrap();
    assert!(prob.derivative(&mesh, &s).max_abs() <= 1e-12);
}

#[test]
fn pure_volume_term() {
    let mesh = crate::testutil::unit_square_grid(5);
    let prob = ComplianceProblem::new([0.0; 2], [0.0; 2], 1.0, 0.3, 1.0).unwrap();
    let y = NodalField::zeros(Arity::Vector2, mesh.node_count());
    assert!((prob.objective_value(&mesh, &y).unwrap() - 1.0).abs() <= 1e-14);
    let w = NodalField::from_fn_vector(mesh.nodes(), |p| [p[0], 0.0]);
    assert!((prob.derivative(&mesh, &y).apply(&w) - 1.0).abs() <= 1e-13);
}

#[test]
fn downward_load_deflects_the_deck() {
    let (prob, mesh) = bridge_setup(0.25);
    let y = prob.state(&mesh).unwrap();
    let mid = mesh
        .nodes()
        .iter()
        .position(|p| (p[0] - 5.0).abs() < 1e-12 && p[1].abs() < 1e-12)
        .unwrap();
    assert!(y.vector_at(mid)[1] < 0.0);
    let mut doubled = prob.clone();
    doubled.traction = [0.0, -0.5];
    let (a, b) = (prob.load(&mesh).unwrap().apply(&y), doubled.load(&mesh).unwrap().apply(&y));
    assert_eq!(b, 2.0 * a);
}
