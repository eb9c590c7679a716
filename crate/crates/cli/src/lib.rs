//! Command-line front end: configuration, solver runs and table export.

pub mod config;
pub mod error;
pub mod tables;

use std::path::{Path, PathBuf};

use purcell_core::integrator::{cost, holonomy};
use purcell_core::pmp::pmp_residuals;
use purcell_core::solver::{solve_with_progress, verify_with, IterationRecord, Solution, VerifyTolerances};
use purcell_core::DiscretizationParams;

pub use config::{RunConfig, Units};
pub use error::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PHASE_FILE: &str = "phase_portrait.csv";
pub const CONTROLS_FILE: &str = "controls.csv";
pub const COSTATES_FILE: &str = "costates.csv";
pub const RESIDUALS_FILE: &str = "residuals.txt";
pub const LOG_FILE: &str = "convergence.log";

/// Summary of a `solve` run.
pub struct SolveOutcome {
    pub solution: Solution,
    pub certified: bool,
    pub report: String,
    pub error: Option<String>,
}

fn output_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.output_dir)?;
    Ok(config.output_dir.clone())
}

fn write_solution(dir: &Path, config: &RunConfig, sol: &Solution, report: &str) -> Result<(), CliError> {
    let h = config.spec.params.h;
    let traj = &sol.trajectory;
    tables::write_atomic(&dir.join(TRAJECTORY_FILE), tables::trajectory_table(traj, h, config.units).as_bytes())?;
    tables::write_atomic(
        &dir.join(PHASE_FILE),
        tables::phase_table(traj, h, config.phase_interval, config.units).as_bytes(),
    )?;
    tables::write_atomic(&dir.join(CONTROLS_FILE), tables::controls_table(&traj.controls).as_bytes())?;
    tables::write_atomic(&dir.join(COSTATES_FILE), tables::costates_table(&sol.costates, sol.nu).as_bytes())?;
    tables::write_atomic(&dir.join(RESIDUALS_FILE), report.as_bytes())?;
    let mut log = String::from(IterationRecord::HEADER);
    log.push('\n');
    for record in &sol.log {
        log.push_str(&record.line());
        log.push('\n');
    }
    tables::write_atomic(&dir.join(LOG_FILE), log.as_bytes())
}

/// Solves, verifies and writes every output table. Files are written for
/// unconverged runs too, from the best iterate.
pub fn run_solve(
    config: &RunConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<SolveOutcome, CliError> {
    config.validate()?;
    let solver = config.solver_config()?;
    let dir = output_dir(config)?;
    let (solution, error) = match solve_with_progress(&config.spec, &solver, progress) {
        Ok(sol) => (sol, None),
        Err(e) => match e.best_iterate() {
            Some(best) => (best.clone(), Some(e.to_string())),
            None => return Err(e.into()),
        },
    };
    let verification = verify_with(&solution, &config.spec, VerifyTolerances::from(&solver));
    let certified = error.is_none() && solution.converged && verification.certified();
    let mut report = verification.table();
    if let Some(e) = &error {
        report.push_str(&format!("# solver error: {e}\n"));
    }
    write_solution(&dir, config, &solution, &report)?;
    Ok(SolveOutcome { solution, certified, report, error })
}

/// Rolls out a controls file from the configured initial state and writes the
/// trajectory table. Returns the holonomy `(x, y, theta)` and the cost.
pub fn run_rollout(config: &RunConfig, controls_path: &Path) -> Result<([f64; 3], f64), CliError> {
    config.validate()?;
    let controls = tables::read_controls(controls_path)?;
    let steps = config.spec.params.steps;
    if controls.len() != steps {
        return Err(CliError::Input(format!(
            "{} has {} rows, discretization.steps is {steps}",
            controls_path.display(),
            controls.len()
        )));
    }
    let traj = config.spec.rollout(&controls)?;
    let dir = output_dir(config)?;
    let h = config.spec.params.h;
    tables::write_atomic(&dir.join(TRAJECTORY_FILE), tables::trajectory_table(&traj, h, config.units).as_bytes())?;
    let g = holonomy(&traj);
    Ok(([g.x, g.y, g.theta], cost(&controls, h)))
}

/// Recomputes the extremal residuals of a trajectory and costate table.
/// Returns the residual table and whether every condition passes.
pub fn run_check_pmp(
    config: &RunConfig,
    trajectory_path: &Path,
    costates_path: &Path,
    tolerance: f64,
) -> Result<(String, bool), CliError> {
    config.validate()?;
    let (times, traj) = tables::read_trajectory(trajectory_path, config.units)?;
    let (costates, nu) = tables::read_costates(costates_path)?;
    if costates.len() != traj.steps() {
        return Err(CliError::Input(format!(
            "{} steps in the trajectory but {} costate rows",
            traj.steps(),
            costates.len()
        )));
    }
    let h = times[1] - times[0];
    let h = if (h - config.spec.params.h).abs() <= 1e-9 * h.abs() { config.spec.params.h } else { h };
    let params = DiscretizationParams::new(h, traj.steps())?;
    let report = pmp_residuals(&config.spec.geometry, &params, &traj, &costates, nu);
    let pass = report.passes(tolerance);
    Ok((report.table(tolerance), pass))
}
