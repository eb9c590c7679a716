//! Single shooting on the initial costates `(rho^0, xi^0)`.

use nalgebra::{Matrix5, Vector2, Vector3, Vector5};

use super::{
    assemble, at_identity, solve_direct, terminal_residual, zero_solution, IterationRecord, Method, ProblemSpec, Solution, SolverConfig,
};
use crate::error::{Error, Result};
use crate::integrator::{cost, holonomy, StateTrajectory};
use crate::pmp::{pmp_residuals, propagate_extremal, AbnormalityFlag, Costate};
use crate::se2::{dlog_star_inv, log, AlgebraCovector};

/// Central-difference step of the Newton Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-7;
const MAX_BACKTRACKS: usize = 30;
/// Tolerances of the bootstrap direct solve, relative to the final ones.
const BOOTSTRAP_LOOSENING: f64 = 100.0;

struct Shot {
    trajectory: StateTrajectory,
    costates: Vec<Costate>,
    residual: Vector5<f64>,
}

fn shoot(spec: &ProblemSpec, z: &Vector5<f64>) -> Result<Shot> {
    let rho0 = AlgebraCovector::new(z[0], z[1], z[2]);
    let xi0 = Vector2::new(z[3], z[4]);
    let (trajectory, costates) =
        propagate_extremal(&spec.geometry, &spec.params, &spec.initial_pose, &spec.alpha_bar, rho0, xi0)?;
    let residual = terminal_residual(&trajectory, spec)?;
    Ok(Shot { trajectory, costates, residual })
}

fn jacobian(spec: &ProblemSpec, z: &Vector5<f64>) -> Result<Matrix5<f64>> {
    let mut jac = Matrix5::zeros();
    for i in 0..5 {
        let mut plus = *z;
        let mut minus = *z;
        plus[i] += JACOBIAN_STEP;
        minus[i] -= JACOBIAN_STEP;
        let column = (shoot(spec, &plus)?.residual - shoot(spec, &minus)?.residual) / (2.0 * JACOBIAN_STEP);
        jac.set_column(i, &column);
    }
    Ok(jac)
}

/// Terminal covector that reproduces the last-step costates.
fn multipliers(spec: &ProblemSpec, shot: &Shot) -> Vector5<f64> {
    let Some(last) = shot.costates.last() else { return Vector5::zeros() };
    let group = log(&spec.g_bar.inverse().compose(&holonomy(&shot.trajectory)))
        .and_then(|y| dlog_star_inv(&y, &last.rho))
        .map_or(Vector3::repeat(f64::NAN), |w| w.0);
    -Vector5::new(last.xi[0], last.xi[1], group[0], group[1], group[2])
}

fn initial_costates(spec: &ProblemSpec, config: &SolverConfig) -> Result<Vector5<f64>> {
    if let Some(z) = config.shooting_seed {
        return Ok(z);
    }
    let loose = SolverConfig {
        method: Method::Direct,
        constraint_tolerance: config.constraint_tolerance * BOOTSTRAP_LOOSENING,
        stationarity_tolerance: config.stationarity_tolerance * BOOTSTRAP_LOOSENING,
        ..config.clone()
    };
    match solve_direct(spec, &loose) {
        Ok(solution) => Ok(solution.initial_costates()),
        Err(err) => match err.best_iterate() {
            Some(best) => Ok(best.initial_costates()),
            None => Err(err),
        },
    }
}

/// Newton iteration on the terminal residual as a function of `(rho^0, xi^0)`,
/// damped by backtracking on the residual norm.
pub fn solve_shooting(spec: &ProblemSpec, config: &SolverConfig) -> Result<Solution> {
    solve_shooting_with_progress(spec, config, &mut |_| {})
}

pub(crate) fn solve_shooting_with_progress(
    spec: &ProblemSpec,
    config: &SolverConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<Solution> {
    at_identity(spec, |reduced| solve_shooting_reduced(reduced, config, progress))
}

fn solve_shooting_reduced(
    spec: &ProblemSpec,
    config: &SolverConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<Solution> {
    spec.validate()?;
    config.validate()?;
    if let Some(solution) = zero_solution(spec, Method::Shooting)? {
        solution.log.iter().for_each(&mut *progress);
        return Ok(solution);
    }

    let mut z = initial_costates(spec, config)?;
    let mut shot = shoot(spec, &z)?;
    let mut log = Vec::new();
    let finish = |shot: Shot, log: Vec<IterationRecord>, converged: bool| {
        let w = multipliers(spec, &shot);
        assemble(Method::Shooting, spec, &shot.trajectory.controls, shot.costates, w, log, converged)
    };

    for iteration in 0..=config.max_newton_iterations {
        let norm = shot.residual.norm();
        let record = IterationRecord {
            iteration,
            cost: cost(&shot.trajectory.controls, spec.params.h),
            constraint_norm: norm,
            stationarity: pmp_residuals(
                &spec.geometry,
                &spec.params,
                &shot.trajectory,
                &shot.costates,
                AbnormalityFlag::Normal,
            )
            .stationarity,
            outer: iteration,
            penalty: 0.0,
            merit: norm,
        };
        progress(&record);
        log.push(record);
        if norm <= config.constraint_tolerance {
            return finish(shot, log, true);
        }
        if iteration == config.max_newton_iterations {
            break;
        }

        let jac = jacobian(spec, &z)?;
        let step = jac.lu().solve(&(-shot.residual)).filter(|s| s.iter().all(|v| v.is_finite()));
        let Some(step) = step else { return Err(Error::SingularJacobian) };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = z + step * t;
            if let Ok(next) = shoot(spec, &trial) {
                if next.residual.norm() <= (1.0 - 1e-4 * t) * norm {
                    accepted = Some((trial, next));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next_z, next)) = accepted else {
            let reason = format!("backtracking failed at residual norm {norm:e}");
            return Err(Error::Diverged { reason, best: Box::new(finish(shot, log, false)?) });
        };
        z = next_z;
        shot = next;
    }
    Err(Error::MaxIterations { best: Box::new(finish(shot, log, false)?) })
}
