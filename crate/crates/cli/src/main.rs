mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shapeflow::experiments::{
    bridge_mesh, compare_gradients, fd_check, interface_mesh, run_experiment, target_interface, Experiment,
    ExperimentConfig, FD_STEPS, INTERFACE_BOUNDS,
};
use shapeflow::mesh::{generate_interface_mesh_with_loop, mesh_quality, write_mesh, Rect};
use shapeflow::Termination;

const DEFAULT_OUT: &str = "out";
/// Exit code of a run that stopped because no acceptable step was found.
const EXIT_STEP_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "shapeflow", version, about = "Shape optimization with Sobolev and Steklov-Poincare gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Riemannian steepest descent on one experiment.
    Run(RunArgs),
    /// Gradients of every metric at the initial shape.
    CompareGradients(CompareArgs),
    /// Write a generated mesh.
    MeshGen(MeshGenArgs),
    /// Finite-difference validation of the shape derivative.
    FdCheck(FdArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Interface,
    Bridge,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Experiment {
        match e {
            ExperimentArg::Interface => Experiment::Interface,
            ExperimentArg::Bridge => Experiment::Bridge,
        }
    }
}

#[derive(Args)]
struct Overrides {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    mu_min: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    /// Gradient-norm tolerance (interface) or plateau threshold (bridge).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Target edge length of the generated meshes.
    #[arg(long)]
    h: Option<f64>,
    /// Remesh below this mesh quality; 0 disables remeshing.
    #[arg(long)]
    remesh_threshold: Option<f64>,
    /// Decrease test on trial steps: a constant c, or `off`.
    #[arg(long)]
    sufficient_decrease: Option<String>,
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $SHAPEFLOW_OUT or ./out].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut p = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                p.push((k.to_string(), v));
            }
        };
        push("A", self.a.map(|v| v.to_string()));
        push("t", self.t.map(|v| v.to_string()));
        push("mu_min", self.mu_min.map(|v| v.to_string()));
        push("mu_max", self.mu_max.map(|v| v.to_string()));
        push("tol", self.tol.map(|v| v.to_string()));
        push("N_max", self.n_max.map(|v| v.to_string()));
        push("target_h", self.h.map(|v| v.to_string()));
        push("remesh_threshold", self.remesh_threshold.map(|v| v.to_string()));
        push("sufficient_decrease", self.sufficient_decrease.clone());
        p
    }

    /// Config file entries, then the experiment and metric given on the command line,
    /// then the remaining flags.
    fn build(&self, experiment: Experiment, metric: Option<&str>) -> Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(path) => config::read_pairs(path)?,
            None => Vec::new(),
        };
        pairs.push(("experiment".into(), experiment.name().into()));
        if let Some(m) = metric {
            pairs.push(("metric".into(), m.to_ascii_lowercase()));
        }
        pairs.extend(self.pairs());
        let mut c = ExperimentConfig::from_pairs(&pairs)?;
        c.output = Some(output_dir(self.out.clone(), c.output.take()));
        Ok(c)
    }
}

fn output_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os("SHAPEFLOW_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    experiment: ExperimentArg,
    /// sp, h1, h2, h3 or h4. May come from the config file instead.
    #[arg(long, required_unless_present = "config")]
    metric: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(value_enum)]
    experiment: ExperimentArg,
    /// Comma-separated metrics [default: all of the experiment].
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Interface,
    Bridge,
    /// Reference mesh fitted to the interface that generates the measurements.
    Target,
}

#[derive(Args)]
struct MeshGenArgs {
    #[arg(value_enum)]
    kind: MeshKind,
    #[arg(long)]
    h: f64,
    /// Output mesh file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FdArgs {
    #[arg(value_enum)]
    experiment: ExperimentArg,
    #[arg(long, default_value_t = 0.04)]
    h: f64,
    /// Number of random perturbation fields.
    #[arg(long, default_value_t = 3)]
    fields: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let config = args.overrides.build(args.experiment.into(), args.metric.as_deref())?;
    let out = config.output.clone().expect("output directory is always set");
    let result = run_experiment(&config)?;
    println!("{}", result.summary);
    println!("output written to {}", out.display());
    Ok(match result.summary.termination {
        Termination::StepFailure => ExitCode::from(EXIT_STEP_FAILURE),
        _ => ExitCode::SUCCESS,
    })
}

fn compare(args: CompareArgs) -> Result<ExitCode> {
    let experiment: Experiment = args.experiment.into();
    let metrics: Vec<String> = if args.metrics.is_empty() {
        experiment.metric_names().iter().map(|s| s.to_string()).collect()
    } else {
        args.metrics
    };
    let configs = metrics
        .iter()
        .map(|m| args.overrides.build(experiment, Some(m)))
        .collect::<Result<Vec<_>>>()?;
    let reports = compare_gradients(&configs)?;
    println!("{:<6} {:>8} {:>12} {:>10}", "metric", "A", "|V|_L2", "time (s)");
    for (r, c) in reports.iter().zip(&configs) {
        let a = if r.metric == "sp" { "--".to_string() } else { format!("{}", c.a) };
        println!("{:<6} {:>8} {:>12.4e} {:>10.4}", r.metric, a, r.norm_l2, r.seconds);
    }
    if let Some(dir) = &configs[0].output {
        println!("gradients written to {}", dir.join(format!("{experiment}_gradients.mesh")).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn mesh_gen(args: MeshGenArgs) -> Result<ExitCode> {
    let mesh = match args.kind {
        MeshKind::Interface => interface_mesh(args.h)?,
        MeshKind::Bridge => bridge_mesh(args.h)?,
        MeshKind::Target => {
            let (lo, hi) = INTERFACE_BOUNDS;
            generate_interface_mesh_with_loop(Rect::new(lo, hi), &target_interface(args.h), args.h)?
        }
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_mesh(&mesh, &args.out)?;
    println!(
        "{} nodes, {} triangles, quality {:.4}, written to {}",
        mesh.node_count(),
        mesh.triangle_count(),
        mesh_quality(&mesh)?,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn fd(args: FdArgs) -> Result<ExitCode> {
    let results = fd_check(args.experiment.into(), args.h, args.fields, args.seed)?;
    let steps: Vec<String> = FD_STEPS.iter().map(|t| format!("{t:>10.0e}")).collect();
    println!("{:<6} {:>12} {} {:>6}", "field", "dJ[W]", steps.join(" "), "order");
    for (i, r) in results.iter().enumerate() {
        let errs: Vec<String> = r.errors.iter().map(|(_, e)| format!("{e:>10.3e}")).collect();
        println!("{:<6} {:>12.5e} {} {:>6.2}", i, r.derivative, errs.join(" "), r.order);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::CompareGradients(a) => compare(a),
        Command::MeshGen(a) => mesh_gen(a),
        Command::FdCheck(a) => fd(a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
