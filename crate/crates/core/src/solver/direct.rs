//! Augmented-Lagrangian direct method.

use nalgebra::{DMatrix, Vector5};

use super::lbfgs::{self, Termination};
use super::{
    assemble, at_identity, evaluate, flatten, unflatten, zero_solution, Evaluation, IterationRecord, Method, ProblemSpec,
    Solution, SolverConfig,
};
use crate::error::{Error, Result};
use crate::swimmer::ControlVector;

/// Consecutive subproblems without an accepted step before giving up.
const STALL_LIMIT: usize = 3;

/// Initial penalty relative to `|lambda_0| / |r_0|`: large enough that an
/// error in the multiplier estimate moves the constraint by a fraction of its
/// initial violation.
const PENALTY_SCALE: f64 = 10.0;

/// Subproblem tolerance: loose while the constraint violation is large, so
/// early subproblems do not drive a small seed to the trivial stationary
/// point `u = 0`.
fn inner_tolerance(config: &SolverConfig, h: f64, previous_violation: f64) -> f64 {
    let loose = if previous_violation.is_finite() { 0.1 * h * previous_violation } else { 0.0 };
    config.stationarity_tolerance.max(loose)
}

/// First-order estimate `argmin_lambda |grad J + Dr^T lambda|` at `controls`.
/// Falls back to zero when the constraint Jacobian is rank deficient.
fn multiplier_estimate(spec: &ProblemSpec, controls: &[ControlVector]) -> Result<Vector5<f64>> {
    let base = evaluate(controls, spec, &Vector5::zeros(), 0.0)?.gradient;
    let mut columns = Vec::with_capacity(5);
    for i in 0..5 {
        let unit = Vector5::ith(i, 1.0);
        columns.push(evaluate(controls, spec, &unit, 0.0)?.gradient - &base);
    }
    let b = DMatrix::from_columns(&columns);
    let normal = b.transpose() * &b;
    let rhs = -(b.transpose() * &base);
    Ok(normal.cholesky().map_or(Vector5::zeros(), |c| {
        let sol = c.solve(&rhs);
        Vector5::from_iterator(sol.iter().copied())
    }))
}

/// Minimizes the augmented Lagrangian over the `2N` controls, updating the
/// multipliers after each subproblem and growing the penalty while the
/// constraint violation stalls.
pub fn solve_direct(spec: &ProblemSpec, config: &SolverConfig) -> Result<Solution> {
    solve_direct_with_progress(spec, config, &mut |_| {})
}

pub(crate) fn solve_direct_with_progress(
    spec: &ProblemSpec,
    config: &SolverConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<Solution> {
    at_identity(spec, |reduced| solve_direct_reduced(reduced, config, progress))
}

fn solve_direct_reduced(
    spec: &ProblemSpec,
    config: &SolverConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<Solution> {
    spec.validate()?;
    config.validate()?;
    if let Some(solution) = zero_solution(spec, Method::Direct)? {
        solution.log.iter().for_each(&mut *progress);
        return Ok(solution);
    }

    let steps = spec.params.steps;
    let seed = config.initial_guess.controls(steps);
    let mut multipliers = multiplier_estimate(spec, &seed)?;
    let mut x = flatten(&seed);
    let initial_violation = evaluate(&seed, spec, &multipliers, 0.0)?.residual.norm();
    let mut penalty = (PENALTY_SCALE * multipliers.norm() / initial_violation.max(f64::MIN_POSITIVE))
        .clamp(config.initial_penalty, config.penalty_cap);
    let mut previous_violation = f64::INFINITY;
    let mut log = Vec::new();
    let mut iteration = 0;
    let mut stalls = 0;
    let mut opts = lbfgs::Options {
        memory: config.lbfgs_memory,
        max_iterations: config.max_inner_iterations,
        tolerance: config.stationarity_tolerance,
        backtracking_ratio: config.backtracking_ratio,
        sufficient_decrease: config.sufficient_decrease,
        initial_scale: 1.0 / spec.params.h,
    };

    let finish = |eval: Evaluation, log: Vec<IterationRecord>, converged: bool| {
        let controls = eval.trajectory.controls.clone();
        assemble(Method::Direct, spec, &controls, eval.costates, eval.effective_multipliers, log, converged)
    };

    let mut last = None;
    for outer in 0..config.max_outer_iterations {
        let lambda = multipliers;
        let mu = penalty;
        opts.tolerance = inner_tolerance(config, spec.params.h, previous_violation);
        let outcome = lbfgs::minimize(
            x,
            |x| evaluate(&unflatten(x), spec, &lambda, mu),
            Evaluation::stationarity,
            &opts,
            |e: &Evaluation| {
                iteration += 1;
                let record = IterationRecord {
                    iteration,
                    cost: e.cost,
                    constraint_norm: e.residual.norm(),
                    stationarity: e.stationarity(),
                    outer,
                    penalty: mu,
                    merit: e.value,
                };
                progress(&record);
                log.push(record);
            },
        )?;
        x = outcome.x;
        let eval = outcome.eval;
        let violation = eval.residual.norm();
        if violation <= config.constraint_tolerance && eval.stationarity() <= config.stationarity_tolerance {
            return finish(eval, log, true);
        }

        let stuck = matches!(outcome.termination, Termination::LineSearchFailed | Termination::Stalled);
        if stuck && outcome.iterations == 0 {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                let reason = format!(
                    "line search failed at constraint norm {violation:e}, stationarity {:e}",
                    eval.stationarity()
                );
                return Err(Error::Diverged { reason, best: Box::new(finish(eval, log, false)?) });
            }
        } else {
            stalls = 0;
        }

        multipliers = eval.effective_multipliers;
        if violation > config.constraint_tolerance && violation > 0.25 * previous_violation {
            penalty = (penalty * config.penalty_growth).min(config.penalty_cap);
        }
        previous_violation = violation;
        last = Some(eval);
    }
    let eval = last.expect("at least one outer iteration");
    Err(Error::MaxIterations { best: Box::new(finish(eval, log, false)?) })
}
