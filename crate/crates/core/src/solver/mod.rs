//! Fixed-endpoint isoholonomic problem
//!
//! ```text
//! minimize   sum_k (h / 2) |u_k|^2
//! subject to alpha_N = alpha_0 = alpha_bar,  g_0^-1 g_N = g_bar
//! ```
//!
//! [`solve_direct`] minimizes over the controls with an augmented Lagrangian
//! whose gradient comes from one backward costate sweep. [`solve_shooting`]
//! instead solves for the initial costates of a normal extremal.

mod direct;
mod lbfgs;
mod shooting;

use std::fmt::Write as _;

use nalgebra::{DVector, Vector2, Vector5};

use crate::error::{Error, Result};
use crate::integrator::{cost, holonomy, rollout, rollout_with_connections, DiscretizationParams, StateTrajectory};
use crate::pmp::{
    cost_gradient_with_connections, pmp_residuals, sweep_with_connections, AbnormalityFlag, Costate, ResidualReport,
};
use crate::se2::{dlog_star, log, AlgebraCovector, GroupElement};
use crate::swimmer::{ControlVector, ShapeState, SwimmerGeometry};

pub use direct::solve_direct;
pub use shooting::solve_shooting;

/// Problem instance. `initial_pose` only places the swimmer in the plane; the
/// constraint is on the holonomy `g_0^-1 g_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub geometry: SwimmerGeometry,
    pub params: DiscretizationParams,
    pub alpha_bar: ShapeState,
    pub g_bar: GroupElement,
    pub initial_pose: GroupElement,
}

impl Default for ProblemSpec {
    /// Unit links, `c_n / c_t = 2`, `h = 0.01`, `N = 10^4`, target `(0.1, 0.1, 0)`.
    fn default() -> Self {
        Self {
            geometry: SwimmerGeometry::default(),
            params: DiscretizationParams { h: 0.01, steps: 10_000 },
            alpha_bar: ShapeState::default(),
            g_bar: GroupElement::new(0.1, 0.1, 0.0),
            initial_pose: GroupElement::IDENTITY,
        }
    }
}

impl ProblemSpec {
    pub fn new(
        geometry: SwimmerGeometry,
        params: DiscretizationParams,
        alpha_bar: ShapeState,
        g_bar: GroupElement,
    ) -> Result<Self> {
        let spec = Self { geometry, params, alpha_bar, g_bar, initial_pose: GroupElement::IDENTITY };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.params.validate()?;
        self.alpha_bar.check_domain()?;
        if !(self.g_bar.theta.abs() < std::f64::consts::PI) {
            return Err(Error::InvalidInput(format!(
                "target rotation {} must satisfy |theta| < pi",
                self.g_bar.theta
            )));
        }
        Ok(())
    }

    pub fn rollout(&self, controls: &[ControlVector]) -> Result<StateTrajectory> {
        rollout(&self.geometry, &self.initial_pose, &self.alpha_bar, controls, &self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Direct,
    Shooting,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    Zero,
    /// Circle in shape space through `alpha_bar`, traversed `periods` times:
    /// `u_k = amplitude (sin(phi_k), cos(phi_k))` with `phi_k = 2 pi periods k / N`,
    /// and the second component negated when `counterclockwise`.
    Sinusoid { amplitude: f64, periods: u32, counterclockwise: bool },
    /// Resampled piecewise-constant when the length differs from `N`.
    Controls(Vec<ControlVector>),
}

impl InitialGuess {
    /// One clockwise loop of amplitude `0.01`.
    pub const SINGLE_LOOP: InitialGuess = InitialGuess::Sinusoid { amplitude: 0.01, periods: 1, counterclockwise: false };
    /// Two counterclockwise loops of amplitude `0.03`; the default.
    pub const DOUBLE_LOOP: InitialGuess = InitialGuess::Sinusoid { amplitude: 0.03, periods: 2, counterclockwise: true };

    pub fn controls(&self, steps: usize) -> Vec<ControlVector> {
        match self {
            InitialGuess::Zero => vec![Vector2::zeros(); steps],
            InitialGuess::Sinusoid { amplitude, periods, counterclockwise } => {
                let turn = if *counterclockwise { -1.0 } else { 1.0 };
                (0..steps)
                    .map(|k| {
                        let phase = 2.0 * std::f64::consts::PI * (*periods as f64) * k as f64 / steps as f64;
                        Vector2::new(phase.sin(), turn * phase.cos()) * *amplitude
                    })
                    .collect()
            }
            InitialGuess::Controls(u) if u.len() == steps => u.clone(),
            InitialGuess::Controls(u) if u.is_empty() => vec![Vector2::zeros(); steps],
            InitialGuess::Controls(u) => (0..steps).map(|k| u[k * u.len() / steps]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub max_outer_iterations: usize,
    /// Quasi-Newton iterations per augmented-Lagrangian subproblem.
    pub max_inner_iterations: usize,
    /// Bound on `|terminal_residual|`.
    pub constraint_tolerance: f64,
    /// Bound on `max_k |D_u H|`, and on every extremal residual at certification.
    pub stationarity_tolerance: f64,
    pub initial_guess: InitialGuess,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub penalty_cap: f64,
    pub backtracking_ratio: f64,
    pub sufficient_decrease: f64,
    pub lbfgs_memory: usize,
    pub max_newton_iterations: usize,
    /// Initial `(rho^0, xi^0)` for shooting. Without it the shooting solver
    /// starts from a loosely converged direct solve.
    pub shooting_seed: Option<Vector5<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Direct,
            max_outer_iterations: 40,
            max_inner_iterations: 5000,
            constraint_tolerance: 1e-6,
            stationarity_tolerance: 1e-6,
            initial_guess: InitialGuess::DOUBLE_LOOP,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            penalty_cap: 1e8,
            backtracking_ratio: 0.5,
            sufficient_decrease: 1e-4,
            lbfgs_memory: 20,
            max_newton_iterations: 50,
            shooting_seed: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        positive("constraint_tolerance", self.constraint_tolerance)?;
        positive("stationarity_tolerance", self.stationarity_tolerance)?;
        positive("initial_penalty", self.initial_penalty)?;
        if !(self.penalty_growth > 1.0) {
            return Err(Error::InvalidInput(format!("penalty_growth must exceed 1, got {}", self.penalty_growth)));
        }
        if !(self.penalty_cap >= self.initial_penalty) {
            return Err(Error::InvalidInput("penalty_cap must be at least initial_penalty".into()));
        }
        if !(self.backtracking_ratio > 0.0 && self.backtracking_ratio < 1.0) {
            return Err(Error::InvalidInput("backtracking_ratio must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::InvalidInput("sufficient_decrease must lie in (0, 1)".into()));
        }
        if self.lbfgs_memory == 0 || self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::InvalidInput("iteration limits and memory must be at least 1".into()));
        }
        if let InitialGuess::Sinusoid { amplitude, .. } = self.initial_guess {
            if !amplitude.is_finite() {
                return Err(Error::InvalidInput("seed amplitude must be finite".into()));
            }
        }
        Ok(())
    }
}

/// One line of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub constraint_norm: f64,
    pub stationarity: f64,
    /// Augmented-Lagrangian subproblem (direct) or Newton iteration (shooting).
    pub outer: usize,
    pub penalty: f64,
    /// Quantity being decreased: augmented objective (direct) or residual
    /// norm (shooting).
    pub merit: f64,
}

impl IterationRecord {
    pub const HEADER: &'static str = "# iteration cost constraint_norm stationarity outer penalty merit";

    pub fn line(&self) -> String {
        format!(
            "{} {:.16e} {:.16e} {:.16e} {} {:.6e} {:.16e}",
            self.iteration, self.cost, self.constraint_norm, self.stationarity, self.outer, self.penalty, self.merit
        )
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub method: Method,
    pub trajectory: StateTrajectory,
    pub costates: Vec<Costate>,
    pub nu: AbnormalityFlag,
    pub cost: f64,
    pub terminal_residual: Vector5<f64>,
    pub residuals: ResidualReport,
    /// Terminal covector `(shape; group)` the costates were seeded from.
    pub multipliers: Vector5<f64>,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

impl Solution {
    pub fn controls(&self) -> &[ControlVector] {
        &self.trajectory.controls
    }

    /// `(rho^0, xi^0)`, the unknowns of the shooting formulation.
    pub fn initial_costates(&self) -> Vector5<f64> {
        let c = self.costates.first().copied().unwrap_or_default();
        Vector5::new(c.rho.0[0], c.rho.0[1], c.rho.0[2], c.xi[0], c.xi[1])
    }

    pub fn constraint_norm(&self) -> f64 {
        self.terminal_residual.norm()
    }
}

/// `(alpha_N - alpha_bar; log(g_bar^-1 g_0^-1 g_N))`.
pub fn terminal_residual(traj: &StateTrajectory, spec: &ProblemSpec) -> Result<Vector5<f64>> {
    let shape = traj.final_shape().0 - spec.alpha_bar.0;
    let group = log(&spec.g_bar.inverse().compose(&holonomy(traj)))?;
    Ok(stack(&shape, &AlgebraCovector(group.0)))
}

fn stack(shape: &Vector2<f64>, group: &AlgebraCovector) -> Vector5<f64> {
    Vector5::new(shape[0], shape[1], group.0[0], group.0[1], group.0[2])
}

fn split(v: &Vector5<f64>) -> (Vector2<f64>, AlgebraCovector) {
    (Vector2::new(v[0], v[1]), AlgebraCovector::new(v[2], v[3], v[4]))
}

/// Augmented Lagrangian with its gradient and the costates behind it.
pub(crate) struct Evaluation {
    pub trajectory: StateTrajectory,
    pub costates: Vec<Costate>,
    pub cost: f64,
    pub residual: Vector5<f64>,
    /// `lambda + penalty r`.
    pub effective_multipliers: Vector5<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
}

impl Evaluation {
    /// `max_k |dL/du_k|`.
    pub fn stationarity(&self) -> f64 {
        max_block_norm(&self.gradient)
    }
}

impl lbfgs::Evaluated for Evaluation {
    fn value(&self) -> f64 {
        self.value
    }
    fn gradient(&self) -> &DVector<f64> {
        &self.gradient
    }
}

pub(crate) fn max_block_norm(v: &DVector<f64>) -> f64 {
    v.as_slice().chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max)
}

pub(crate) fn flatten(controls: &[ControlVector]) -> DVector<f64> {
    DVector::from_iterator(controls.len() * 2, controls.iter().flat_map(|u| [u[0], u[1]]))
}

pub(crate) fn unflatten(x: &DVector<f64>) -> Vec<ControlVector> {
    x.as_slice().chunks(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

/// Costates of the last step for a terminal covector `w`, pairing with
/// `(alpha_N; log(g_bar^-1 g_0^-1 g_N))`.
pub(crate) fn terminal_costates(
    traj: &StateTrajectory,
    spec: &ProblemSpec,
    w: &Vector5<f64>,
) -> Result<(AlgebraCovector, Vector2<f64>)> {
    let (w_shape, w_group) = split(w);
    let mismatch = log(&spec.g_bar.inverse().compose(&holonomy(traj)))?;
    Ok((-dlog_star(&mismatch, &w_group)?, -w_shape))
}

pub(crate) fn evaluate(
    controls: &[ControlVector],
    spec: &ProblemSpec,
    multipliers: &Vector5<f64>,
    penalty: f64,
) -> Result<Evaluation> {
    let (trajectory, conns) =
        rollout_with_connections(&spec.geometry, &spec.initial_pose, &spec.alpha_bar, controls, &spec.params)?;
    let h = spec.params.h;
    let residual = terminal_residual(&trajectory, spec)?;
    let cost = cost(controls, h);
    let value = cost + multipliers.dot(&residual) + 0.5 * penalty * residual.norm_squared();
    let w = multipliers + residual * penalty;
    let (rho_last, xi_last) = terminal_costates(&trajectory, spec, &w)?;
    let costates = sweep_with_connections(&trajectory, &conns, rho_last, xi_last, h)?;
    let gradient = flatten(&cost_gradient_with_connections(&trajectory, &conns, &costates, h));
    Ok(Evaluation { trajectory, costates, cost, residual, effective_multipliers: w, value, gradient })
}

/// Augmented Lagrangian `cost + <lambda, r> + (penalty / 2) |r|^2` and its
/// gradient with respect to every `u_k`.
pub fn objective_and_gradient(
    controls: &[ControlVector],
    spec: &ProblemSpec,
    multipliers: &Vector5<f64>,
    penalty: f64,
) -> Result<(f64, Vec<ControlVector>)> {
    let eval = evaluate(controls, spec, multipliers, penalty)?;
    Ok((eval.value, unflatten(&eval.gradient)))
}

/// Packages controls and costates into a [`Solution`], re-rolling the states
/// from the controls.
pub(crate) fn assemble(
    method: Method,
    spec: &ProblemSpec,
    controls: &[ControlVector],
    costates: Vec<Costate>,
    multipliers: Vector5<f64>,
    log: Vec<IterationRecord>,
    converged: bool,
) -> Result<Solution> {
    let trajectory = spec.rollout(controls)?;
    let terminal_residual = terminal_residual(&trajectory, spec)?;
    let nu = AbnormalityFlag::Normal;
    let residuals = pmp_residuals(&spec.geometry, &spec.params, &trajectory, &costates, nu);
    Ok(Solution {
        method,
        cost: cost(controls, spec.params.h),
        trajectory,
        costates,
        nu,
        terminal_residual,
        residuals,
        multipliers,
        log,
        converged,
    })
}

/// Solves the problem posed from the identity and places the result at
/// `spec.initial_pose`, so the controls do not depend on where the swimmer
/// starts.
pub(crate) fn at_identity<F>(spec: &ProblemSpec, solve: F) -> Result<Solution>
where
    F: FnOnce(&ProblemSpec) -> Result<Solution>,
{
    if spec.initial_pose == GroupElement::IDENTITY {
        return solve(spec);
    }
    let reduced = ProblemSpec { initial_pose: GroupElement::IDENTITY, ..spec.clone() };
    let place = |s: Solution| {
        assemble(s.method, spec, &s.trajectory.controls, s.costates, s.multipliers, s.log, s.converged)
    };
    match solve(&reduced) {
        Ok(s) => place(s),
        Err(Error::MaxIterations { best }) => Err(Error::MaxIterations { best: Box::new(place(*best)?) }),
        Err(Error::Diverged { reason, best }) => Err(Error::Diverged { reason, best: Box::new(place(*best)?) }),
        Err(e) => Err(e),
    }
}

/// If zero controls already satisfy the constraints they are the global
/// minimum.
pub(crate) fn zero_solution(spec: &ProblemSpec, method: Method) -> Result<Option<Solution>> {
    let zeros = vec![Vector2::zeros(); spec.params.steps];
    let traj = spec.rollout(&zeros)?;
    if terminal_residual(&traj, spec)? != Vector5::zeros() {
        return Ok(None);
    }
    let record = IterationRecord {
        iteration: 0,
        cost: 0.0,
        constraint_norm: 0.0,
        stationarity: 0.0,
        outer: 0,
        penalty: 0.0,
        merit: 0.0,
    };
    let costates = vec![Costate::zero(); spec.params.steps];
    assemble(method, spec, &zeros, costates, Vector5::zeros(), vec![record], true).map(Some)
}

/// Dispatches on `config.method`.
pub fn solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<Solution> {
    solve_with_progress(spec, config, &mut |_| {})
}

/// [`solve`] reporting every log record as it is produced.
pub fn solve_with_progress(
    spec: &ProblemSpec,
    config: &SolverConfig,
    progress: &mut dyn FnMut(&IterationRecord),
) -> Result<Solution> {
    match config.method {
        Method::Direct => direct::solve_direct_with_progress(spec, config, progress),
        Method::Shooting => shooting::solve_shooting_with_progress(spec, config, progress),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyTolerances {
    pub constraint: f64,
    /// Bound on every extremal residual.
    pub pmp: f64,
    /// Relative bound on the recomputed cost.
    pub cost: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self { constraint: 1e-6, pmp: 1e-6, cost: 1e-12 }
    }
}

impl From<&SolverConfig> for VerifyTolerances {
    fn from(config: &SolverConfig) -> Self {
        Self { constraint: config.constraint_tolerance, pmp: config.stationarity_tolerance, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub holonomy: GroupElement,
    pub cost: f64,
    pub reported_cost: f64,
    pub terminal_residual: Vector5<f64>,
    /// Re-rolled states equal the stored ones bit for bit.
    pub states_match: bool,
    pub shapes_in_domain: bool,
    pub residuals: ResidualReport,
    pub tolerances: VerifyTolerances,
}

impl VerificationReport {
    pub fn constraint_ok(&self) -> bool {
        self.terminal_residual.norm() <= self.tolerances.constraint
    }

    pub fn cost_ok(&self) -> bool {
        (self.cost - self.reported_cost).abs() <= self.tolerances.cost * self.cost.abs().max(1e-300)
            || self.cost == self.reported_cost
    }

    pub fn certified(&self) -> bool {
        self.constraint_ok()
            && self.cost_ok()
            && self.states_match
            && self.shapes_in_domain
            && self.residuals.passes(self.tolerances.pmp)
    }

    pub fn table(&self) -> String {
        let mut out = self.residuals.table(self.tolerances.pmp);
        let flag = |ok: bool| if ok { "pass" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<16} {:>24.16e} {:>6}",
            "terminal",
            self.terminal_residual.norm(),
            flag(self.constraint_ok())
        );
        let _ = writeln!(out, "{:<16} {:>24.16e} {:>6}", "cost", self.cost, flag(self.cost_ok()));
        let _ = writeln!(out, "{:<16} {:>24} {:>6}", "states", "", flag(self.states_match));
        let _ = writeln!(out, "{:<16} {:>24} {:>6}", "shape_domain", "", flag(self.shapes_in_domain));
        let g = self.holonomy;
        let _ = writeln!(out, "# holonomy {:.16e} {:.16e} {:.16e}", g.x, g.y, g.theta);
        let _ = writeln!(out, "# certified {}", self.certified());
        out
    }
}

pub fn verify(solution: &Solution, spec: &ProblemSpec) -> VerificationReport {
    verify_with(solution, spec, VerifyTolerances::default())
}

/// Re-rolls the states from the controls and rechecks every condition.
pub fn verify_with(solution: &Solution, spec: &ProblemSpec, tolerances: VerifyTolerances) -> VerificationReport {
    let controls = solution.controls();
    let nan5 = Vector5::repeat(f64::INFINITY);
    let rolled = spec.rollout(controls);
    let (holonomy_, terminal, states_match, in_domain) = match &rolled {
        Ok(traj) => (
            holonomy(traj),
            terminal_residual(traj, spec).unwrap_or(nan5),
            *traj == solution.trajectory,
            traj.alphas.iter().all(ShapeState::in_domain),
        ),
        Err(_) => (GroupElement::new(f64::NAN, f64::NAN, f64::NAN), nan5, false, false),
    };
    let traj = rolled.as_ref().unwrap_or(&solution.trajectory);
    VerificationReport {
        holonomy: holonomy_,
        cost: cost(controls, spec.params.h),
        reported_cost: solution.cost,
        terminal_residual: terminal,
        states_match,
        shapes_in_domain: in_domain,
        residuals: pmp_residuals(&spec.geometry, &spec.params, traj, &solution.costates, solution.nu),
        tolerances,
    }
}
