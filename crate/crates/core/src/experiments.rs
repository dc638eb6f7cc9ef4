//! The two benchmark experiments: presets, drivers and output files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::fem::{l2_norm, SolverOptions};
use crate::field::{LinearFunctional, NodalField};
use crate::mesh::{
    generate_bridge_mesh, generate_interface_mesh, generate_interface_mesh_with_loop, mesh_quality,
    write_mesh_with_fields, Mesh, Point, Rect,
};
use crate::metrics::{Metric, MetricSpec};
use crate::optimizer::{run, DescentConfig, History, StopRule, Termination};
use crate::par;
use crate::problems::{ComplianceProblem, InterfaceProblem, ShapeProblem};

pub const INTERFACE_BOUNDS: ([f64; 2], [f64; 2]) = ([-1.0, -0.5], [0.0, 0.5]);
pub const INTERFACE_CENTER: Point = [-0.5, 0.0];
pub const INTERFACE_RADIUS: f64 = 0.2;
/// Semi-axes of the elliptic interface that generates the measurements.
pub const TARGET_SEMI_AXES: [f64; 2] = [0.16, 0.32];
/// Depth and angular width of the notch on the right side of the target.
pub const TARGET_NOTCH: (f64, f64) = (0.1, 0.6);
pub const REFERENCE_H: f64 = 0.02;

pub const BRIDGE_OUTLINE: [Point; 11] = [
    [0.0, 0.0],
    [0.0, 1.0],
    [2.5, 4.0],
    [5.0, 5.0],
    [7.5, 4.0],
    [10.0, 1.0],
    [10.0, 0.0],
    [9.0, 0.0],
    [5.5, 0.0],
    [4.5, 0.0],
    [1.0, 0.0],
];
pub const BRIDGE_HOLES: [(Point, f64); 4] = [
    ([2.5, 1.0], 0.5),
    ([3.5, 3.0], 0.5),
    ([6.5, 3.0], 0.5),
    ([7.5, 1.0], 0.5),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Interface,
    Bridge,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Interface => "interface",
            Experiment::Bridge => "bridge",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        match s {
            "interface" => Some(Experiment::Interface),
            "bridge" => Some(Experiment::Bridge),
            _ => None,
        }
    }

    /// Metric names with published parameters for this experiment.
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            Experiment::Interface => &["sp", "h1", "h2", "h3", "h4"],
            Experiment::Bridge => &["sp", "h2", "h3", "h4"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// `sp` or `h<s>`.
    pub metric: String,
    pub a: f64,
    pub stepsize: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Gradient-norm tolerance (interface) or plateau threshold (bridge).
    pub tol: f64,
    pub max_iters: usize,
    pub target_h: f64,
    pub remesh_threshold: f64,
    /// Decrease test on trial steps, see [`DescentConfig::sufficient_decrease`].
    pub sufficient_decrease: Option<f64>,
    pub output: Option<PathBuf>,
}

fn parse_order(metric: &str) -> Option<u32> {
    metric.strip_prefix('h')?.parse().ok().filter(|&s| s >= 1)
}

impl ExperimentConfig {
    /// Published parameters for `metric` in `experiment`.
    pub fn preset(experiment: Experiment, metric: &str) -> Result<ExperimentConfig, Error> {
        let unknown = || Error::InvalidParameter(format!("unknown metric '{metric}' (expected sp or h<s>)"));
        if metric != "sp" && parse_order(metric).is_none() {
            return Err(unknown());
        }
        let (a, stepsize) = match (experiment, metric) {
            (Experiment::Interface, "sp") => (0.0, 0.01),
            (Experiment::Interface, "h1") => (0.0625, 0.01),
            (Experiment::Interface, "h2") => (0.5, 0.25),
            (Experiment::Interface, "h3") => (0.2, 0.40),
            (Experiment::Interface, "h4") => (0.05, 0.05),
            (Experiment::Interface, _) => (0.1, 0.05),
            (Experiment::Bridge, "h1") => (1.0, 1.0),
            (Experiment::Bridge, "h2") => (0.8, 1.0),
            (Experiment::Bridge, "h3") => (0.25, 1.0),
            (Experiment::Bridge, "h4") => (0.15, 1.0),
            (Experiment::Bridge, _) => (if metric == "sp" { 0.0 } else { 0.15 }, 1.0),
        };
        Ok(match experiment {
            Experiment::Interface => ExperimentConfig {
                experiment,
                metric: metric.into(),
                a,
                stepsize,
                mu_min: 5.0,
                mu_max: 20.0,
                tol: 2e-4,
                max_iters: 500,
                target_h: 0.04,
                remesh_threshold: 0.0,
                sufficient_decrease: None,
                output: None,
            },
            Experiment::Bridge => ExperimentConfig {
                experiment,
                metric: metric.into(),
                a,
                stepsize,
                mu_min: 5.0,
                mu_max: 15.0,
                tol: 1e-5,
                max_iters: 600,
                target_h: 0.1,
                remesh_threshold: 0.1,
                sufficient_decrease: None,
                output: None,
            },
        })
    }

    /// Builds a configuration from ordered `key = value` pairs; later pairs win.
    ///
    /// `experiment` and `metric` select the preset, every other key overrides it.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<ExperimentConfig, Error> {
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let exp = last("experiment").ok_or_else(|| Error::InvalidParameter("missing 'experiment'".into()))?;
        let experiment = Experiment::parse(exp)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment '{exp}'")))?;
        let metric = last("metric").ok_or_else(|| Error::InvalidParameter("missing 'metric'".into()))?;
        let mut config = ExperimentConfig::preset(experiment, &metric.to_ascii_lowercase())?;
        for (k, v) in pairs {
            if k != "experiment" && k != "metric" {
                config.set(k, v)?;
            }
        }
        Ok(config)
    }

    /// Overrides one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let num = || -> Result<f64, Error> {
            value
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("{key} = '{value}' is not a number")))
        };
        match key {
            "A" | "a" => self.a = num()?,
            "t" | "stepsize" => self.stepsize = num()?,
            "mu_min" => self.mu_min = num()?,
            "mu_max" => self.mu_max = num()?,
            "tol" => self.tol = num()?,
            "N_max" | "max_iters" => {
                self.max_iters = value
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("{key} = '{value}' is not an integer")))?
            }
            "target_h" | "h" => self.target_h = num()?,
            "remesh_threshold" => self.remesh_threshold = num()?,
            "sufficient_decrease" => {
                self.sufficient_decrease = if value == "off" { None } else { Some(num()?) }
            }
            "output" | "out" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::InvalidParameter(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn metric_spec(&self) -> Result<MetricSpec, Error> {
        let spec = if self.metric == "sp" {
            MetricSpec::SteklovPoincare {
                mu_min: self.mu_min,
                mu_max: self.mu_max,
            }
        } else {
            let order = parse_order(&self.metric)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown metric '{}'", self.metric)))?;
            MetricSpec::Hs { order, a: self.a }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn descent_config(&self) -> Result<DescentConfig, Error> {
        let stop = match self.experiment {
            Experiment::Interface => StopRule::GradNorm(self.tol),
            Experiment::Bridge => StopRule::plateau(self.tol),
        };
        let mut c = DescentConfig::new(self.metric_spec()?, self.stepsize, self.max_iters, stop);
        c.remesh_quality_threshold = self.remesh_threshold;
        c.remesh_h = self.target_h;
        c.sufficient_decrease = self.sufficient_decrease;
        c.validate()?;
        Ok(c)
    }

    /// Stem used for output file names, e.g. `interface_h2`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.experiment, self.metric)
    }
}

/// Working mesh of the interface experiment, with the circular initial interface.
pub fn interface_mesh(h: f64) -> Result<Mesh, Error> {
    let (lo, hi) = INTERFACE_BOUNDS;
    Ok(generate_interface_mesh(Rect::new(lo, hi), INTERFACE_CENTER, INTERFACE_RADIUS, h)?)
}

/// Closed polygon of the interface that generates the measurements: a vertical
/// ellipse whose right side is pushed in by a Gaussian notch, resampled by arc length.
pub fn target_interface(h: f64) -> Vec<Point> {
    let [a, b] = TARGET_SEMI_AXES;
    let (depth, width) = TARGET_NOTCH;
    let dense: Vec<Point> = (0..4096)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / 4096.0 - std::f64::consts::PI;
            let notch = depth * (-(th / width).powi(2)).exp();
            [INTERFACE_CENTER[0] + a * th.cos() - notch, INTERFACE_CENTER[1] + b * th.sin()]
        })
        .collect();
    let seg = |k: usize| {
        let (p, q) = (dense[k], dense[(k + 1) % dense.len()]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    };
    let perimeter: f64 = (0..dense.len()).map(seg).sum();
    let n = ((perimeter / h).ceil() as usize).max(8);
    let spacing = perimeter / n as f64;
    let mut out = Vec::with_capacity(n);
    let (mut k, mut walked) = (0, 0.0);
    for i in 0..n {
        let s = i as f64 * spacing;
        while walked + seg(k) < s {
            walked += seg(k);
            k += 1;
        }
        let (p, q) = (dense[k], dense[(k + 1) % dense.len()]);
        let r = (s - walked) / seg(k);
        out.push([p[0] + r * (q[0] - p[0]), p[1] + r * (q[1] - p[1])]);
    }
    out
}

/// Interface problem with the published coefficients and its measurement data.
pub fn interface_problem() -> Result<InterfaceProblem, Error> {
    let (lo, hi) = INTERFACE_BOUNDS;
    let reference = generate_interface_mesh_with_loop(Rect::new(lo, hi), &target_interface(REFERENCE_H), REFERENCE_H)?;
    let problem = InterfaceProblem::new(0.05, 1.0, 10.0, 0.0)?;
    let target = problem.generate_target(&reference)?;
    Ok(problem.with_target(target))
}

pub fn bridge_mesh(h: f64) -> Result<Mesh, Error> {
    Ok(generate_bridge_mesh(&BRIDGE_OUTLINE, &BRIDGE_HOLES, h)?)
}

pub fn bridge_problem() -> Result<ComplianceProblem, Error> {
    ComplianceProblem::new([0.0, 0.0], [0.0, -0.25], 1.0, 0.3, 0.099)
}

/// Final values in the layout of the published result tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub experiment: Experiment,
    pub metric: String,
    pub iterations: usize,
    pub objective: f64,
    pub grad_l2: f64,
    pub mesh_quality: f64,
    pub termination: Termination,
    pub remesh_count: usize,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: k = {}  J = {:.4e}  |V|_L2 = {:.4e}  phi = {:.4e}  ({}, {} remeshes)",
            self.experiment,
            self.metric,
            self.iterations,
            self.objective,
            self.grad_l2,
            self.mesh_quality,
            self.termination.name(),
            self.remesh_count
        )
    }
}

pub struct ExperimentRun {
    pub summary: Summary,
    pub history: History,
    pub initial: Mesh,
    pub mesh: Mesh,
}

fn finish<P: ShapeProblem>(
    config: &ExperimentConfig,
    problem: &P,
    initial: Mesh,
) -> Result<ExperimentRun, Error> {
    let descent = config.descent_config()?;
    let result = run(problem, &initial, &descent)?;
    let last = result.history.last();
    let summary = Summary {
        experiment: config.experiment,
        metric: config.metric.clone(),
        iterations: result.history.records.len(),
        objective: last.map_or(result.objective, |r| r.objective),
        grad_l2: last.map_or(0.0, |r| r.grad_l2),
        mesh_quality: mesh_quality(&result.mesh)?,
        termination: result.history.termination,
        remesh_count: result.history.remesh_count,
    };
    if let Some(dir) = &config.output {
        fs::create_dir_all(dir).map_err(crate::error::MeshError::Io)?;
        let stem = config.stem();
        write_history_csv(&result.history, &dir.join(format!("{stem}_history.csv")))?;
        write_mesh_with_fields(&initial, &[], dir.join(format!("{stem}_initial.mesh")))?;
        let mut fields = problem.export_fields(&result.state);
        if result.gradient.node_count() == result.mesh.node_count() {
            fields.push(("V".into(), result.gradient.clone()));
        }
        let refs: Vec<(&str, &NodalField)> = fields.iter().map(|(n, f)| (n.as_str(), f)).collect();
        write_mesh_with_fields(&result.mesh, &refs, dir.join(format!("{stem}_final.mesh")))?;
    }
    Ok(ExperimentRun {
        summary,
        history: result.history,
        initial,
        mesh: result.mesh,
    })
}

/// Runs one experiment; writes history, meshes and fields when an output directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun, Error> {
    match config.experiment {
        Experiment::Interface => finish(config, &interface_problem()?, interface_mesh(config.target_h)?),
        Experiment::Bridge => finish(config, &bridge_problem()?, bridge_mesh(config.target_h)?),
    }
}

pub const HISTORY_HEADER: &str = "iter,objective,norm_felas,msh_quality,stepsize,remeshed";

pub fn history_csv(history: &History) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in &history.records {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.iter, r.objective, r.grad_l2, r.mesh_quality, r.stepsize_used, r.remeshed as u8
        ));
    }
    s
}

pub fn write_history_csv(history: &History, path: &Path) -> Result<(), Error> {
    let mut f = fs::File::create(path).map_err(crate::error::MeshError::Io)?;
    f.write_all(history_csv(history).as_bytes())
        .map_err(crate::error::MeshError::Io)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub metric: String,
    pub spec: MetricSpec,
    pub norm_l2: f64,
    /// Wall time of the metric assembly and gradient solve.
    pub seconds: f64,
}

/// Shape derivative at the initial shape and its gradient under every configured metric.
///
/// All configurations must share the experiment and mesh size. Gradients are computed
/// concurrently; with an output directory, a mesh file holding every gradient is written.
pub fn compare_gradients(configs: &[ExperimentConfig]) -> Result<Vec<GradientReport>, Error> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no metrics to compare".into()))?;
    if configs
        .iter()
        .any(|c| c.experiment != first.experiment || c.target_h != first.target_h)
    {
        return Err(Error::InvalidParameter("compared configurations must share the experiment and mesh".into()));
    }
    let (mesh, dj, fixed) = match first.experiment {
        Experiment::Interface => {
            let p = interface_problem()?;
            let mesh = interface_mesh(first.target_h)?;
            derivative_at(&p, mesh)?
        }
        Experiment::Bridge => {
            let p = bridge_problem()?;
            let mesh = bridge_mesh(first.target_h)?;
            derivative_at(&p, mesh)?
        }
    };
    let specs = configs
        .iter()
        .map(|c| c.metric_spec().map(|s| (c.metric.clone(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    let results = par::run_all(specs, |(name, spec)| -> Result<(GradientReport, NodalField), Error> {
        let start = Instant::now();
        let v = Metric::assemble(spec, &mesh, &fixed)?.gradient(&dj)?;
        let seconds = start.elapsed().as_secs_f64();
        Ok((
            GradientReport {
                metric: name,
                spec,
                norm_l2: l2_norm(&mesh, &v),
                seconds,
            },
            v,
        ))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &first.output {
        fs::create_dir_all(dir).map_err(crate::error::MeshError::Io)?;
        let names: Vec<String> = results.iter().map(|(r, _)| format!("V_{}", r.metric)).collect();
        let refs: Vec<(&str, &NodalField)> = names.iter().map(String::as_str).zip(results.iter().map(|(_, v)| v)).collect();
        write_mesh_with_fields(&mesh, &refs, dir.join(format!("{}_gradients.mesh", first.experiment)))?;
    }
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

fn derivative_at<P: ShapeProblem>(problem: &P, mesh: Mesh) -> Result<(Mesh, LinearFunctional, Vec<bool>), Error> {
    let state = problem.solve(&mesh)?;
    let dj = problem.shape_derivative(&mesh, &state)?;
    let fixed = problem.fixed_nodes(&mesh);
    Ok((mesh, dj, fixed))
}

/// Stepsizes of the finite-difference check.
pub const FD_STEPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Clone, Debug, PartialEq)]
pub struct FdResult {
    pub derivative: f64,
    /// `(t, |DJ[W] − (J(x + tW) − J(x))/t|)`.
    pub errors: Vec<(f64, f64)>,
    /// Least-squares slope of `log error` against `log t`.
    pub order: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.max(1e-300).ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Forward-difference check of the shape derivative along `w`.
pub fn fd_check_field<P: ShapeProblem>(problem: &P, mesh: &Mesh, w: &NodalField) -> Result<FdResult, Error> {
    let (state, j) = problem.evaluate(mesh)?;
    let derivative = problem.shape_derivative(mesh, &state)?.apply(w);
    let errors = FD_STEPS
        .iter()
        .map(|&t| {
            let (_, jt) = problem.evaluate(&mesh.deform(w, t)?)?;
            Ok((t, (derivative - (jt - j) / t).abs()))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let order = log_slope(&errors);
    Ok(FdResult {
        derivative,
        errors,
        order,
    })
}

/// Smooth random field vanishing at the fixed nodes, supported near the moving shape.
///
/// Components are low-frequency trigonometric sums times a cutoff of radius `reach`
/// around the shape. The field is scaled to maximum `reach` so that its gradient stays
/// of order one on every geometry.
pub fn random_smooth_field(mesh: &Mesh, fixed: &[bool], rng: &mut impl Rng) -> NodalField {
    let (lo, hi) = bounding_box(mesh);
    let scale = [hi[0] - lo[0], hi[1] - lo[1]];
    let shape: Vec<Point> = mesh
        .nodes()
        .iter()
        .zip(mesh.node_is_shape())
        .filter(|(_, &s)| s)
        .map(|(p, _)| *p)
        .collect();
    let reach = 0.1 * scale[0].min(scale[1]);
    let coeffs: Vec<[f64; 4]> = (0..2).map(|_| [0; 4].map(|_| rng.random_range(-1.0..1.0))).collect();
    let freq: [f64; 2] = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let mut w = NodalField::from_fn_vector(mesh.nodes(), |p| {
        let d = shape
            .iter()
            .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
            .fold(f64::INFINITY, f64::min);
        let cut = if d < reach { (1.0 - (d / reach).powi(2)).powi(2) } else { 0.0 };
        let x = std::f64::consts::PI * freq[0] * (p[0] - lo[0]) / scale[0];
        let y = std::f64::consts::PI * freq[1] * (p[1] - lo[1]) / scale[1];
        let comp = |c: &[f64; 4]| c[0] + c[1] * x.sin() + c[2] * y.cos() + c[3] * (x + y).sin();
        [cut * comp(&coeffs[0]), cut * comp(&coeffs[1])]
    });
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            w.values_mut()[2 * i] = 0.0;
            w.values_mut()[2 * i + 1] = 0.0;
        }
    }
    let m = w.max_abs();
    if m > 0.0 {
        w = w.scaled(reach / m);
    }
    w
}

fn bounding_box(mesh: &Mesh) -> (Point, Point) {
    mesh.nodes().iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    )
}

/// Tolerance used for state solves during finite-difference checks.
pub fn fd_solver(experiment: Experiment) -> SolverOptions {
    match experiment {
        Experiment::Interface => SolverOptions::with_tolerance(1e-14),
        Experiment::Bridge => SolverOptions::with_tolerance(1e-12),
    }
}

/// Finite-difference validation on `fields` random smooth fields, deterministic in `seed`.
pub fn fd_check(experiment: Experiment, h: f64, fields: usize, seed: u64) -> Result<Vec<FdResult>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match experiment {
        Experiment::Interface => {
            let mut p = interface_problem()?;
            p.solver = fd_solver(experiment);
            let mesh = interface_mesh(h)?;
            fd_fields(&p, &mesh, fields, &mut rng)
        }
        Experiment::Bridge => {
            let mut p = bridge_problem()?;
            p.solver = fd_solver(experiment);
            let mesh = bridge_mesh(h)?;
            fd_fields(&p, &mesh, fields, &mut rng)
        }
    }
}

fn fd_fields<P: ShapeProblem>(problem: &P, mesh: &Mesh, fields: usize, rng: &mut impl Rng) -> Result<Vec<FdResult>, Error> {
    let fixed = problem.fixed_nodes(mesh);
    let ws: Vec<NodalField> = (0..fields).map(|_| random_smooth_field(mesh, &fixed, rng)).collect();
    par::run_all(ws, |w| fd_check_field(problem, mesh, &w)).into_iter().collect()
}
