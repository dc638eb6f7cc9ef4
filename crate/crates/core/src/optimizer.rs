//! Riemannian steepest descent on the node coordinates.
//!
//! Each iteration solves the state, assembles `DJ`, takes its Riesz representative `V`
//! under the configured metric and moves the nodes to `x − tV`. A trial step is halved
//! when it inverts an element, more than halves the mesh quality, or fails the
//! decrease test. The run loop remeshes when the quality drops below a threshold.

use crate::error::Error;
use crate::fem::{l2_norm, SolverOptions};
use crate::field::NodalField;
use crate::mesh::{mesh_quality, remesh, Mesh};
use crate::metrics::{Metric, MetricSpec};
use crate::problems::ShapeProblem;

/// A trial mesh whose quality falls below this fraction of the current one is rejected.
pub const QUALITY_DROP_FACTOR: f64 = 0.5;
/// Stepsize factor applied at every remesh.
pub const REMESH_STEP_FACTOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Last gradient L² norm below the tolerance.
    GradNorm(f64),
    /// `max_{m=1..window} J_{k−m} − J_k < eps`.
    Plateau { window: usize, eps: f64 },
}

impl StopRule {
    pub fn plateau(eps: f64) -> StopRule {
        StopRule::Plateau { window: 10, eps }
    }
}

#[derive(Clone, Debug)]
pub struct DescentConfig {
    pub metric: MetricSpec,
    pub stepsize: f64,
    pub max_iters: usize,
    pub stop_rule: StopRule,
    /// Remesh when the quality falls below this value; zero disables remeshing.
    pub remesh_quality_threshold: f64,
    /// Target edge length for remeshing.
    pub remesh_h: f64,
    pub step_halving_cap: usize,
    /// Decrease test on trial steps: `None` accepts any objective value, `Some(c)`
    /// requires `J_new ≤ J − c·t·DJ[V]` (`c = 0` is a plain monotonicity guard).
    pub sufficient_decrease: Option<f64>,
    pub solver: SolverOptions,
}

impl DescentConfig {
    pub fn new(metric: MetricSpec, stepsize: f64, max_iters: usize, stop_rule: StopRule) -> DescentConfig {
        DescentConfig {
            metric,
            stepsize,
            max_iters,
            stop_rule,
            remesh_quality_threshold: 0.0,
            remesh_h: 0.0,
            step_halving_cap: 20,
            sufficient_decrease: Some(0.0),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.metric.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.stepsize > 0.0 && self.stepsize.is_finite()) {
            return bad(format!("stepsize {}", self.stepsize));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        match self.stop_rule {
            StopRule::GradNorm(tol) if !(tol > 0.0) => return bad(format!("tolerance {tol}")),
            StopRule::Plateau { window, eps } if window == 0 || !(eps > 0.0) => {
                return bad(format!("plateau window {window}, eps {eps}"))
            }
            _ => {}
        }
        if !(self.remesh_quality_threshold >= 0.0 && self.remesh_quality_threshold < 1.0) {
            return bad(format!("remesh threshold {}", self.remesh_quality_threshold));
        }
        if self.remesh_quality_threshold > 0.0 && !(self.remesh_h > 0.0) {
            return bad(format!("remesh target h {}", self.remesh_h));
        }
        Ok(())
    }

    fn remeshing(&self) -> bool {
        self.remesh_quality_threshold > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `J` at the iterate the step starts from.
    pub objective: f64,
    /// `‖V‖_{L²}` of the gradient at that iterate.
    pub grad_l2: f64,
    /// Quality of the mesh after the step (and after a remesh, if one happened).
    pub mesh_quality: f64,
    pub stepsize_used: f64,
    pub remeshed: bool,
    /// `DJ[−V]`, negative for a descent direction.
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    StepFailure,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::StepFailure => "step-failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub remesh_count: usize,
}

impl History {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Whether `rule` is satisfied by the records so far.
pub fn stop_check(records: &[IterationRecord], rule: StopRule) -> bool {
    let Some(last) = records.last() else {
        return false;
    };
    match rule {
        StopRule::GradNorm(tol) => last.grad_l2 < tol,
        StopRule::Plateau { window, eps } => {
            if records.len() <= window {
                return false;
            }
            let k = records.len() - 1;
            (1..=window)
                .map(|m| records[k - m].objective - last.objective)
                .fold(f64::NEG_INFINITY, f64::max)
                < eps
        }
    }
}

/// Outcome of one accepted step.
pub struct Step<S> {
    pub mesh: Mesh,
    pub state: S,
    pub objective: f64,
    pub record: IterationRecord,
    pub gradient: NodalField,
}

/// One descent step from `mesh` with known `state` and objective `j`, starting at stepsize `t`.
pub fn step_from<P: ShapeProblem>(
    problem: &P,
    mesh: &Mesh,
    state: &P::State,
    j: f64,
    config: &DescentConfig,
    t: f64,
    iter: usize,
) -> Result<Step<P::State>, Error> {
    let dj = problem.shape_derivative(mesh, state)?;
    let mut metric = Metric::assemble(config.metric, mesh, &problem.fixed_nodes(mesh))?;
    metric.solver = config.solver;
    let v = metric.gradient(&dj)?;
    let grad_l2 = l2_norm(mesh, &v);
    let slope = -dj.apply(&v);
    let quality = mesh_quality(mesh)?;
    let record = |q: f64, tt: f64| IterationRecord {
        iter,
        objective: j,
        grad_l2,
        mesh_quality: q,
        stepsize_used: tt,
        remeshed: false,
        slope,
    };
    if v.max_abs() == 0.0 {
        return Ok(Step {
            mesh: mesh.clone(),
            state: state.clone(),
            objective: j,
            record: record(quality, 0.0),
            gradient: v,
        });
    }
    let mut tt = t;
    let mut reason = String::new();
    for _ in 0..=config.step_halving_cap {
        match try_step(problem, mesh, &v, tt, quality, j, slope, config) {
            Ok((trial, trial_state, jn, q)) => {
                return Ok(Step {
                    mesh: trial,
                    state: trial_state,
                    objective: jn,
                    record: record(q, tt),
                    gradient: v,
                })
            }
            Err(r) => reason = r,
        }
        log::debug!("iteration {iter}: rejected stepsize {tt:e}: {reason}");
        tt *= 0.5;
    }
    Err(Error::StepFailure {
        halvings: config.step_halving_cap,
        stepsize: tt * 2.0,
        reason,
    })
}

#[allow(clippy::too_many_arguments)]
fn try_step<P: ShapeProblem>(
    problem: &P,
    mesh: &Mesh,
    v: &NodalField,
    t: f64,
    quality: f64,
    j: f64,
    slope: f64,
    config: &DescentConfig,
) -> Result<(Mesh, P::State, f64, f64), String> {
    let trial = mesh.deform(v, -t).map_err(|e| e.to_string())?;
    let q = mesh_quality(&trial).map_err(|e| e.to_string())?;
    if q < QUALITY_DROP_FACTOR * quality {
        return Err(format!("quality drops from {quality:.3e} to {q:.3e}"));
    }
    let (state, jn) = problem.evaluate(&trial).map_err(|e| e.to_string())?;
    if !jn.is_finite() {
        return Err("objective is not finite".into());
    }
    if let Some(c) = config.sufficient_decrease {
        if jn > j + c * t * slope {
            return Err(format!("objective rises from {j:e} to {jn:e}"));
        }
    }
    Ok((trial, state, jn, q))
}

/// One descent step from `mesh`, solving the state first.
pub fn step<P: ShapeProblem>(problem: &P, mesh: &Mesh, config: &DescentConfig) -> Result<(Mesh, IterationRecord), Error> {
    config.validate()?;
    let (state, j) = problem.evaluate(mesh)?;
    let s = step_from(problem, mesh, &state, j, config, config.stepsize, 0)?;
    Ok((s.mesh, s.record))
}

/// Final iterate of a run.
pub struct RunResult<S> {
    pub history: History,
    pub mesh: Mesh,
    pub state: S,
    pub objective: f64,
    /// Gradient at the last recorded iterate.
    pub gradient: NodalField,
}

/// Steepest descent until the stop rule, the iteration cap, or an unrecoverable step failure.
pub fn run<P: ShapeProblem>(problem: &P, initial: &Mesh, config: &DescentConfig) -> Result<RunResult<P::State>, Error> {
    config.validate()?;
    let mut mesh = initial.clone();
    let (mut state, mut j) = problem.evaluate(&mesh)?;
    let mut t = config.stepsize;
    let mut records = Vec::new();
    let mut remesh_count = 0;
    let mut gradient = NodalField::zeros(crate::field::Arity::Vector2, mesh.node_count());
    let mut remeshed_for_failure = false;
    let mut termination = Termination::MaxIters;
    while records.len() < config.max_iters {
        let iter = records.len();
        let mut s = match step_from(problem, &mesh, &state, j, config, t, iter) {
            Ok(s) => s,
            Err(Error::StepFailure { reason, .. }) => {
                if config.remeshing() && !remeshed_for_failure {
                    log::info!("iteration {iter}: step failed ({reason}); remeshing");
                    mesh = remesh_checked(&mesh, config.remesh_h)?;
                    (state, j) = problem.evaluate(&mesh)?;
                    t *= REMESH_STEP_FACTOR;
                    remesh_count += 1;
                    remeshed_for_failure = true;
                    continue;
                }
                log::warn!("iteration {iter}: step failed ({reason})");
                termination = Termination::StepFailure;
                break;
            }
            Err(Error::Solve(e)) => {
                log::warn!("iteration {iter}: gradient solve failed ({e})");
                termination = Termination::StepFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        remeshed_for_failure = false;
        if config.remeshing() && s.record.mesh_quality < config.remesh_quality_threshold {
            log::info!("iteration {iter}: quality {:.3e}, remeshing", s.record.mesh_quality);
            s.mesh = remesh_checked(&s.mesh, config.remesh_h)?;
            let (st, jn) = problem.evaluate(&s.mesh)?;
            s.state = st;
            s.objective = jn;
            s.record.mesh_quality = mesh_quality(&s.mesh)?;
            s.record.remeshed = true;
            t *= REMESH_STEP_FACTOR;
            remesh_count += 1;
        }
        log::debug!(
            "iteration {iter}: J = {:.6e}, |V| = {:.3e}, quality = {:.3e}, t = {:.3e}",
            s.record.objective,
            s.record.grad_l2,
            s.record.mesh_quality,
            s.record.stepsize_used
        );
        records.push(s.record);
        mesh = s.mesh;
        state = s.state;
        j = s.objective;
        gradient = s.gradient;
        if stop_check(&records, config.stop_rule) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(RunResult {
        history: History {
            records,
            termination,
            remesh_count,
        },
        mesh,
        state,
        objective: j,
        gradient,
    })
}

fn remesh_checked(mesh: &Mesh, h: f64) -> Result<Mesh, Error> {
    let m = remesh(mesh, h)?;
    if !m.regions_consistent() {
        return Err(Error::InvalidParameter("remeshed regions disagree with the shape boundary".into()));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_interface_mesh, generate_interface_mesh_with_loop, Rect};
    use crate::problems::InterfaceProblem;

    fn rec(objective: f64, grad_l2: f64) -> IterationRecord {
        IterationRecord {
            iter: 0,
            objective,
            grad_l2,
            mesh_quality: 0.5,
            stepsize_used: 1.0,
            remeshed: false,
            slope: -1.0,
        }
    }

    fn unit_box() -> Rect {
        Rect::new([-1.0, -0.5], [0.0, 0.5])
    }

    fn setup() -> (InterfaceProblem, Mesh) {
        let ellipse: Vec<[f64; 2]> = (0..32)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 32.0;
                [-0.5 + 0.14 * th.cos(), 0.3 * th.sin()]
            })
            .collect();
        let reference = generate_interface_mesh_with_loop(unit_box(), &ellipse, 0.06).unwrap();
        let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
        let target = prob.generate_target(&reference).unwrap();
        let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.1).unwrap();
        (prob.with_target(target), mesh)
    }

    #[test]
    fn grad_norm_rule() {
        assert!(stop_check(&[rec(1.0, 1e-4)], StopRule::GradNorm(2e-4)));
        assert!(!stop_check(&[rec(1.0, 3e-4)], StopRule::GradNorm(2e-4)));
        assert!(!stop_check(&[], StopRule::GradNorm(2e-4)));
    }

    #[test]
    fn plateau_rule() {
        let rule = StopRule::plateau(1e-5);
        let flat: Vec<_> = (0..11).map(|_| rec(2.0, 1.0)).collect();
        assert!(stop_check(&flat, rule));
        assert!(!stop_check(&flat[..10], rule));
        let mut dropping = flat.clone();
        for r in &mut dropping[8..] {
            r.objective -= 1e-3;
        }
        assert!(!stop_check(&dropping, rule));
    }

    #[test]
    fn config_validation() {
        let m = MetricSpec::Hs { order: 2, a: 0.5 };
        assert!(DescentConfig::new(m, 0.0, 10, StopRule::GradNorm(1e-3)).validate().is_err());
        assert!(DescentConfig::new(m, 0.1, 0, StopRule::GradNorm(1e-3)).validate().is_err());
        assert!(DescentConfig::new(m, 0.1, 10, StopRule::GradNorm(0.0)).validate().is_err());
        let mut c = DescentConfig::new(m, 0.1, 10, StopRule::plateau(1e-5));
        c.remesh_quality_threshold = 0.1;
        assert!(c.validate().is_err());
        c.remesh_h = 0.1;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn fixed_point_leaves_the_mesh_alone() {
        let mesh = generate_interface_mesh(unit_box(), [-0.5, 0.0], 0.2, 0.1).unwrap();
        let prob = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0).unwrap();
        let target = prob.generate_target(&mesh).unwrap();
        let prob = prob.with_target(target);
        let config = DescentConfig::new(MetricSpec::Hs { order: 2, a: 0.5 }, 0.25, 3, StopRule::GradNorm(1e-12));
        let (next, record) = step(&prob, &mesh, &config).unwrap();
        assert_eq!(next.nodes(), mesh.nodes());
        assert_eq!(record.objective, 0.0);
    }

    #[test]
    fn huge_stepsize_is_halved() {
        let (prob, mesh) = setup();
        let config = DescentConfig::new(MetricSpec::Hs { order: 2, a: 0.5 }, 1e6, 1, StopRule::GradNorm(1e-12));
        let (_, record) = step(&prob, &mesh, &config).unwrap();
        assert!(record.stepsize_used < 1e6);
        assert!(record.slope < 0.0);
    }

    #[test]
    fn single_iteration_history() {
        let (prob, mesh) = setup();
        let config = DescentConfig::new(MetricSpec::Hs { order: 1, a: 0.0625 }, 0.01, 1, StopRule::GradNorm(1e-12));
        let r = run(&prob, &mesh, &config).unwrap();
        assert_eq!(r.history.records.len(), 1);
        assert_eq!(r.history.termination, Termination::MaxIters);
    }

    #[test]
    fn descent_runs_are_monotone_and_deterministic() {
        let (prob, mesh) = setup();
        for metric in [MetricSpec::Hs { order: 2, a: 0.5 }, MetricSpec::SteklovPoincare { mu_min: 5.0, mu_max: 20.0 }] {
            let t = if let MetricSpec::Hs { .. } = metric { 0.25 } else { 0.01 };
            let config = DescentConfig::new(metric, t, 15, StopRule::GradNorm(1e-12));
            let a = run(&prob, &mesh, &config).unwrap();
            let b = run(&prob, &mesh, &config).unwrap();
            assert_eq!(a.history, b.history);
            let recs = &a.history.records;
            for w in recs.windows(2) {
                assert!(w[1].iter == w[0].iter + 1);
                assert!(w[1].objective <= w[0].objective);
            }
            for r in recs {
                assert!(r.slope < 0.0);
                assert!(r.mesh_quality > 0.0 && r.mesh_quality <= 1.0);
            }
            assert!(a.objective < recs[0].objective);
        }
    }
}
