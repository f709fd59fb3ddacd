//! `derham`: command-line front end for the current laboratory.  Loads a
//! scene file, runs a named experiment, and writes CSV/JSON outputs; also
//! lists the built-in fixture catalog.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use derham_core::mollifier::KernelKind;
use derham_core::Error;

use derham_cli::runner::{self, RunOptions};
use derham_cli::scene::{self, ExperimentSpec, Scene};
use derham_cli::fixtures;

#[derive(Parser)]
#[command(
    name = "derham",
    about = "Numerical laboratory for de Rham currents: densities, smoothing \
             operators, and regularized intersections",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a scene file or a built-in reproduction.
    Run(RunArgs),
    /// List the built-in fixture catalog.
    Fixtures(FixturesArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scene file (JSON, schema version 1); optional for the built-in
    /// reproduction experiments.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Experiment name: an entry of the scene's `experiments` map, or one
    /// of `reproduce-ex46`, `reproduce-ex46-3d`, `reproduce-kronecker`.
    #[arg(long)]
    experiment: String,
    /// Output directory for `<experiment>.csv` and `<experiment>.json`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the schedule's initial epsilon.
    #[arg(long)]
    eps0: Option<f64>,
    /// Override the schedule's level-to-level ratio.
    #[arg(long)]
    rho: Option<f64>,
    /// Override the schedule's level count.
    #[arg(long)]
    levels: Option<usize>,
    /// Quadrature resolution: midpoint nodes per unit length.
    #[arg(long)]
    grid: Option<f64>,
    /// With --expect-convergence, largest acceptable error estimate.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Mollification kernel.
    #[arg(long, value_enum, default_value_t = KernelArg::BumpProduct)]
    kernel: KernelArg,
    /// Exit with status 2 when the intersection verdict is not CONVERGED.
    #[arg(long)]
    expect_convergence: bool,
}

#[derive(Args)]
struct FixturesArgs {
    /// Emit the catalog as JSON.
    #[arg(long)]
    json: bool,
    /// Only fixtures whose tag starts with this prefix (e.g. `2`).
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    BumpProduct,
    BumpProductWide,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> KernelKind {
        match k {
            KernelArg::BumpProduct => KernelKind::BumpProduct,
            KernelArg::BumpProductWide => KernelKind::BumpProductWide,
        }
    }
}

fn builtin_experiment(name: &str) -> Option<ExperimentSpec> {
    match name {
        "reproduce-ex46" => Some(ExperimentSpec::ReproduceEx46 { dim: None }),
        "reproduce-ex46-3d" => Some(ExperimentSpec::ReproduceEx46 { dim: Some(3) }),
        "reproduce-kronecker" => Some(ExperimentSpec::ReproduceKronecker {}),
        _ => None,
    }
}

fn run_command(args: &RunArgs) -> Result<i32, Error> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Other(format!("thread pool: {e}")))?;
    }
    let mut scene = match &args.scene {
        Some(path) => scene::load_scene(path)?,
        None => Scene::empty(2),
    };
    if let Some(g) = args.grid {
        if g <= 0.0 {
            return Err(Error::Other(format!(
                "grid resolution must be positive, got {g}"
            )));
        }
        scene.quadrature.resolution = g;
    }
    if args.eps0.is_some() || args.rho.is_some() || args.levels.is_some() {
        scene.schedule = derham_core::intersection::EpsSchedule::new(
            args.eps0.unwrap_or(scene.schedule.eps0),
            args.rho.unwrap_or(scene.schedule.ratio),
            args.levels.unwrap_or(scene.schedule.levels),
        )?;
    }
    let spec = scene
        .experiments
        .get(&args.experiment)
        .cloned()
        .or_else(|| builtin_experiment(&args.experiment))
        .ok_or_else(|| {
            Error::Other(format!(
                "experiment {:?} is neither defined in the scene nor built in",
                args.experiment
            ))
        })?;
    let opts = RunOptions {
        kernel: args.kernel.into(),
        expect_convergence: args.expect_convergence,
        tol: args.tol,
    };
    let outcome = runner::run(&scene, &args.experiment, &spec, &args.out, &opts)?;
    println!(
        "wrote {} and {}",
        outcome.csv_path.display(),
        outcome.json_path.display()
    );
    Ok(outcome.exit_code)
}

fn fixtures_command(args: &FixturesArgs) -> Result<i32, Error> {
    let catalog: Vec<_> = fixtures::catalog()
        .into_iter()
        .filter(|f| {
            args.tag
                .as_deref()
                .map_or(true, |t| f.tag.starts_with(t))
        })
        .collect();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&catalog)?);
    } else {
        for f in &catalog {
            println!("{:<16} [{}]  {}", f.name, f.tag, f.description);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run_command(args),
        Command::Fixtures(args) => fixtures_command(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Error::Scene(violations)) => {
            eprintln!("scene validation failed:");
            for v in &violations {
                eprintln!("  - {v}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
