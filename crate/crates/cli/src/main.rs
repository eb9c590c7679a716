use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use purcell_cli::{run_check_pmp, run_rollout, run_solve, CliError, RunConfig, Units};
use purcell_core::solver::{IterationRecord, Method};

/// Minimum-effort swimming of the three-link Purcell swimmer.
#[derive(Parser)]
#[command(name = "purcell", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the isoholonomic problem and write the output tables.
    Solve(SolveArgs),
    /// Roll out a controls table and print the holonomy and cost.
    Rollout(RolloutArgs),
    /// Check the extremal conditions of a trajectory and costate table.
    CheckPmp(CheckArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file; defaults to the reference instance.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Angle units of trajectory tables.
    #[arg(long, value_enum)]
    units: Option<UnitsArg>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Deg,
    Rad,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Direct,
    Shooting,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Constraint and stationarity tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iterations (direct) or Newton iterations (shooting).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Amplitude of the sinusoidal seed in rad/s.
    #[arg(long)]
    seed_amplitude: Option<f64>,
    /// Sampling interval of the phase-portrait table in seconds.
    #[arg(long)]
    phase_interval: Option<f64>,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    common: Common,
    /// Controls table with header u1,u2 in rad/s.
    #[arg(long)]
    controls: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    costates: PathBuf,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    match common.units {
        Some(UnitsArg::Deg) => config.units = Units::Degrees,
        Some(UnitsArg::Rad) => config.units = Units::Radians,
        None => {}
    }
    Ok(config)
}

fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let mut config = load(&args.common)?;
    if let Some(s) = args.solver {
        config.solver.method = match s {
            SolverArg::Direct => Method::Direct,
            SolverArg::Shooting => Method::Shooting,
        };
    }
    if let Some(tol) = args.tol {
        config.solver.constraint_tolerance = tol;
        config.solver.stationarity_tolerance = tol;
    }
    if let Some(n) = args.max_iter {
        config.solver.max_outer_iterations = n;
        config.solver.max_newton_iterations = n;
    }
    if let Some(a) = args.seed_amplitude {
        config.seed.amplitude = a;
    }
    if let Some(p) = args.phase_interval {
        config.phase_interval = p;
    }

    let quiet = args.common.quiet;
    let mut last_outer = usize::MAX;
    let mut progress = |r: &IterationRecord| {
        if !quiet && (r.outer != last_outer || r.iteration.is_multiple_of(500)) {
            last_outer = r.outer;
            eprintln!(
                "iter {:>6} outer {:>3} cost {:.6e} constraint {:.3e} stationarity {:.3e}",
                r.iteration, r.outer, r.cost, r.constraint_norm, r.stationarity
            );
        }
    };
    let outcome = run_solve(&config, &mut progress)?;
    if !quiet {
        print!("{}", outcome.report);
    }
    println!(
        "cost {:.16e} terminal residual {:.3e} certified {} output {}",
        outcome.solution.cost,
        outcome.solution.constraint_norm(),
        outcome.certified,
        config.output_dir.display()
    );
    match (outcome.certified, outcome.error) {
        (true, _) => Ok(()),
        (false, Some(e)) => Err(CliError::NotCertified(format!("solver did not converge: {e}"))),
        (false, None) => Err(CliError::NotCertified("solution failed verification".into())),
    }
}

fn rollout(args: &RolloutArgs) -> Result<(), CliError> {
    let config = load(&args.common)?;
    let (g, cost) = run_rollout(&config, &args.controls)?;
    println!("holonomy {:.16e} {:.16e} {:.16e}", g[0], g[1], g[2]);
    println!("cost {cost:.16e}");
    Ok(())
}

fn check_pmp(args: &CheckArgs) -> Result<(), CliError> {
    let config = load(&args.common)?;
    let (table, pass) = run_check_pmp(&config, &args.trajectory, &args.costates, args.tol)?;
    print!("{table}");
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(CliError::NotCertified(format!("extremal conditions fail for {}", display(&args.trajectory))))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Rollout(a) => rollout(a),
        Command::CheckPmp(a) => check_pmp(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("purcell: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
