//! Limited-memory BFGS with a weak Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::Result;

pub(crate) trait Evaluated {
    fn value(&self) -> f64;
    fn gradient(&self) -> &DVector<f64>;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Options {
    pub memory: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub backtracking_ratio: f64,
    pub sufficient_decrease: f64,
    /// Inverse-Hessian scale used while the memory is empty.
    pub initial_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// Accepted steps stopped changing the objective.
    Stalled,
}

pub(crate) struct Outcome<E> {
    pub x: DVector<f64>,
    pub eval: E,
    pub iterations: usize,
    pub termination: Termination,
}

const MAX_TRIALS: usize = 60;
/// Consecutive steps with relative decrease below `STALL_DECREASE` that end
/// the run.
const STALL_STEPS: usize = 20;
const STALL_DECREASE: f64 = 1e-15;
/// Curvature constant of the weak Wolfe conditions.
const CURVATURE: f64 = 0.9;

struct Memory {
    capacity: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
}

impl Memory {
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy <= 1e-12 * s.norm() * y.norm() {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion for `-H g`.
    fn direction(&self, g: &DVector<f64>, initial_scale: f64) -> DVector<f64> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        let gamma = match self.pairs.back() {
            Some((s, y, _)) => s.dot(y) / y.dot(y),
            None => initial_scale,
        };
        q *= gamma;
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }
}

/// Weak Wolfe step along `d`: shrinks by the backtracking ratio until the
/// first sufficient decrease, then bisects or doubles on the curvature
/// condition. Falls back to the best sufficient-decrease point.
fn wolfe_search<E, F>(
    x: &DVector<f64>,
    d: &DVector<f64>,
    current: &E,
    slope: f64,
    objective: &mut F,
    opts: &Options,
) -> Option<(DVector<f64>, E)>
where
    E: Evaluated,
    F: FnMut(&DVector<f64>) -> Result<E>,
{
    let f0 = current.value();
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut t = 1.0;
    let mut best: Option<(DVector<f64>, E)> = None;
    for _ in 0..MAX_TRIALS {
        let trial = x + d * t;
        let decrease = match objective(&trial) {
            Ok(e) if e.value().is_finite() && e.value() <= f0 + opts.sufficient_decrease * t * slope => Some(e),
            _ => None,
        };
        match decrease {
            None => hi = t,
            Some(e) => {
                if e.gradient().dot(d) >= CURVATURE * slope {
                    return Some((trial, e));
                }
                lo = t;
                if best.as_ref().is_none_or(|(_, b)| e.value() <= b.value()) {
                    best = Some((trial, e));
                }
            }
        }
        t = match (lo > 0.0, hi.is_finite()) {
            (_, false) => 2.0 * t,
            (false, true) => t * opts.backtracking_ratio,
            (true, true) => 0.5 * (lo + hi),
        };
    }
    best
}

/// Minimizes from `x0`. Evaluation errors during the line search count as an
/// infinite objective; an error at `x0` is returned.
pub(crate) fn minimize<E, F, S, C>(
    x0: DVector<f64>,
    mut objective: F,
    stationarity: S,
    opts: &Options,
    mut on_step: C,
) -> Result<Outcome<E>>
where
    E: Evaluated,
    F: FnMut(&DVector<f64>) -> Result<E>,
    S: Fn(&E) -> f64,
    C: FnMut(&E),
{
    let mut x = x0;
    let mut eval = objective(&x)?;
    let mut memory = Memory { capacity: opts.memory, pairs: VecDeque::new() };
    let mut flat_steps = 0;
    for iteration in 0..opts.max_iterations {
        if stationarity(&eval) <= opts.tolerance {
            return Ok(Outcome { x, eval, iterations: iteration, termination: Termination::Converged });
        }
        let g = eval.gradient();
        let mut d = memory.direction(g, opts.initial_scale);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            memory.pairs.clear();
            d = -g * opts.initial_scale;
            slope = g.dot(&d);
        }

        let Some((next_x, next_eval)) = wolfe_search(&x, &d, &eval, slope, &mut objective, opts) else {
            return Ok(Outcome { x, eval, iterations: iteration, termination: Termination::LineSearchFailed });
        };
        assert!(next_eval.value() <= eval.value(), "accepted step increased the objective");

        let decrease = eval.value() - next_eval.value();
        flat_steps = if decrease <= STALL_DECREASE * eval.value().abs() { flat_steps + 1 } else { 0 };
        let s = &next_x - &x;
        let y = next_eval.gradient() - eval.gradient();
        memory.push(s, y);
        x = next_x;
        eval = next_eval;
        on_step(&eval);
        if flat_steps >= STALL_STEPS {
            return Ok(Outcome { x, eval, iterations: iteration + 1, termination: Termination::Stalled });
        }
    }
    let termination =
        if stationarity(&eval) <= opts.tolerance { Termination::Converged } else { Termination::MaxIterations };
    Ok(Outcome { x, eval, iterations: opts.max_iterations, termination })
}
