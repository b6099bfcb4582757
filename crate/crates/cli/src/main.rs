//! `adnflex` — flexibility areas and costs of distribution networks.

mod commands;
mod records;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use adnflex::boundary::TraceMode;
use clap::{Parser, Subcommand, ValueEnum};

use commands::{Common, CostArgs, TraceArgs};
use run::Failure;

#[derive(Parser)]
#[command(name = "adnflex", version, about = "Flexibility areas and costs at a distribution network's grid interface")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Solver optimality tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Extra randomized restarts per solve.
    #[arg(long, global = true)]
    multistart: Option<usize>,
    /// Leave timestamps out of manifests and plots.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Directory that receives the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Perimeter,
    Angular,
}

#[derive(clap::Args)]
struct TraceFlags {
    #[arg(long, value_enum, default_value = "perimeter")]
    mode: Mode,
    /// P spacing of perimeter slices, MW.
    #[arg(long, default_value_t = 0.08)]
    step: f64,
    /// Directions of an angular sweep.
    #[arg(long, default_value_t = 200)]
    points: usize,
}

impl TraceFlags {
    fn args(&self) -> TraceArgs {
        TraceArgs {
            mode: match self.mode {
                Mode::Perimeter => TraceMode::PerimeterStep,
                Mode::Angular => TraceMode::AngularSweep,
            },
            step: self.step,
            points: self.points,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace the flexibility area of each configuration.
    Trace {
        case: PathBuf,
        /// Comma-separated configuration labels (default: all).
        #[arg(long, value_delimiter = ',')]
        config: Vec<String>,
        #[command(flatten)]
        flags: TraceFlags,
    },
    /// Least-cost dispatch over a P–Q grid.
    Costmap {
        case: PathBuf,
        #[arg(long, value_delimiter = ',')]
        config: Vec<String>,
        /// Grid spacing, MW / MVAr.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Two labels `A,B`; reports the savings of B over A.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        compare: Vec<String>,
    },
    /// Intersect the areas of all configurations.
    Secure {
        case: PathBuf,
        #[command(flatten)]
        flags: TraceFlags,
    },
    /// Re-hash and re-verify the contents of a run directory.
    Validate { run_dir: PathBuf },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::Usage("jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    let common = Common {
        tol: cli.tol,
        max_iter: cli.max_iter,
        multistart: cli.multistart,
        deterministic: cli.deterministic,
        out: cli.out,
    };
    match cli.cmd {
        Cmd::Trace { case, config, flags } => {
            let dir = commands::trace(&common, &case, &config, &flags.args())?;
            println!("{}", dir.display());
        }
        Cmd::Costmap { case, config, step, compare } => {
            let compare = match compare.as_slice() {
                [] => None,
                [a, b] => Some((a.clone(), b.clone())),
                _ => return Err(Failure::Usage("--compare takes exactly two labels".into())),
            };
            let dir = commands::costmap(&common, &case, &config, &CostArgs { step, compare })?;
            println!("{}", dir.display());
        }
        Cmd::Secure { case, flags } => {
            let dir = commands::secure(&common, &case, &flags.args())?;
            println!("{}", dir.display());
        }
        Cmd::Validate { run_dir } => {
            commands::validate(&run_dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
