//! Discrete maximum principle for the swimmer.
//!
//! Costates are indexed by step: `zeta^k` pairs with the group increment
//! `X_k = -h A(alpha_k) u_k`, `xi^k` pairs with `alpha_k+1`, and
//! `rho^k = dlog(X_k)^T zeta^k` is the left-trivialized costate at `g_k+1`.
//! With the Hamiltonian
//!
//! ```text
//! H(zeta, xi, alpha, u) = (h nu / 2) <u, u> - h <zeta, A(alpha) u> + <xi, alpha + h u>
//! ```
//!
//! an extremal satisfies
//!
//! ```text
//! rho^k-1 = Ad*_{exp(-X_k)} rho^k
//! xi^k-1  = xi^k - h d/da <zeta^k, A(a) u_k> |_{a = alpha_k}
//! D_u H   = 0, i.e. u_k = xi^k - A(alpha_k)^T zeta^k when nu = -1
//! ```
//!
//! where `Ad*_g` is the transpose of `Ad_g` in the fixed basis.

pub mod generic;

use std::fmt::Write as _;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::integrator::{group_increment, DiscretizationParams, StateTrajectory};
use crate::se2::{dlog_star, dlog_star_inv, exp, log, AlgebraCovector, AlgebraVector, GroupElement};
use crate::swimmer::{connection, ConnectionEval, ControlVector, ShapeState, SwimmerGeometry};

pub use generic::{
    generic_pmp_check, BoxSet, ConditionReport, GenericCostates, GenericTrajectory, LieGroupSystem, Linearization,
    PurcellSystem,
};

/// Convergence threshold of the per-step costate fixed points, relative to
/// `max(1, |rho|)`.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 50;

/// Costates annotating one step.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Costate {
    pub zeta: AlgebraCovector,
    pub rho: AlgebraCovector,
    pub xi: Vector2<f64>,
}

impl Costate {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn norm(&self) -> f64 {
        self.zeta.norm().max(self.rho.norm()).max(self.xi.norm())
    }
}

/// Cost multiplier `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AbnormalityFlag {
    /// `nu = -1`
    #[default]
    Normal,
    /// `nu = 0`
    Abnormal,
}

impl AbnormalityFlag {
    pub fn nu(self) -> f64 {
        match self {
            AbnormalityFlag::Normal => -1.0,
            AbnormalityFlag::Abnormal => 0.0,
        }
    }

    pub fn from_nu(nu: f64) -> Result<Self> {
        if nu == -1.0 {
            Ok(AbnormalityFlag::Normal)
        } else if nu == 0.0 {
            Ok(AbnormalityFlag::Abnormal)
        } else {
            Err(Error::InvalidInput(format!("nu must be -1 or 0, got {nu}")))
        }
    }
}

pub fn hamiltonian(
    geom: &SwimmerGeometry,
    zeta: &AlgebraCovector,
    xi: &Vector2<f64>,
    alpha: &ShapeState,
    u: &ControlVector,
    nu: AbnormalityFlag,
    h: f64,
) -> Result<f64> {
    let a = connection(geom, alpha)?.a;
    Ok(0.5 * h * nu.nu() * u.norm_squared() - h * zeta.0.dot(&(a * u)) + xi.dot(&(alpha.0 + u * h)))
}

fn control_gradient_with(
    conn: &ConnectionEval,
    zeta: &AlgebraCovector,
    xi: &Vector2<f64>,
    u: &ControlVector,
    nu: AbnormalityFlag,
    h: f64,
) -> Vector2<f64> {
    (u * nu.nu() - conn.a.transpose() * zeta.0 + xi) * h
}

/// `D_u H = h nu u - h A^T zeta + h xi`.
pub fn hamiltonian_control_gradient(
    geom: &SwimmerGeometry,
    zeta: &AlgebraCovector,
    xi: &Vector2<f64>,
    alpha: &ShapeState,
    u: &ControlVector,
    nu: AbnormalityFlag,
    h: f64,
) -> Result<Vector2<f64>> {
    let conn = connection(geom, alpha)?;
    Ok(control_gradient_with(&conn, zeta, xi, u, nu, h))
}

/// Stationary point of the normal Hamiltonian: `u = xi - A^T zeta`.
pub fn optimal_control(
    geom: &SwimmerGeometry,
    zeta: &AlgebraCovector,
    xi: &Vector2<f64>,
    alpha: &ShapeState,
) -> Result<ControlVector> {
    let a = connection(geom, alpha)?.a;
    Ok(xi - a.transpose() * zeta.0)
}

/// `rho^k-1 = Ad*_{exp(h A(alpha_k) u_k)} rho^k`.
pub fn adjoint_step_rho_backward(
    geom: &SwimmerGeometry,
    rho: &AlgebraCovector,
    alpha: &ShapeState,
    u: &ControlVector,
    h: f64,
) -> Result<AlgebraCovector> {
    let increment = group_increment(geom, alpha, u, h)?;
    Ok(transport_backward(&increment, rho))
}

fn transport_backward(increment: &AlgebraVector, rho: &AlgebraCovector) -> AlgebraCovector {
    exp(&(-*increment)).co_ad(rho)
}

fn transport_forward(increment: &AlgebraVector, rho: &AlgebraCovector) -> AlgebraCovector {
    exp(increment).co_ad(rho)
}

/// `d/da <zeta, A(a) u>` at the evaluated shape.
fn shape_gradient(conn: &ConnectionEval, zeta: &AlgebraCovector, u: &ControlVector) -> Vector2<f64> {
    Vector2::new(
        zeta.0.dot(&(conn.da_dalpha[0] * u)),
        zeta.0.dot(&(conn.da_dalpha[1] * u)),
    )
}

/// `xi^k-1 = xi^k - h d/da <zeta^k, A(a) u_k>` at `a = alpha_k`.
pub fn adjoint_step_xi_backward(
    geom: &SwimmerGeometry,
    xi: &Vector2<f64>,
    zeta: &AlgebraCovector,
    alpha: &ShapeState,
    u: &ControlVector,
    h: f64,
) -> Result<Vector2<f64>> {
    let conn = connection(geom, alpha)?;
    Ok(xi - shape_gradient(&conn, zeta, u) * h)
}

fn fixed_point_converged(update: f64, scale: f64) -> bool {
    update <= FIXED_POINT_TOLERANCE * scale.max(1.0)
}

/// Solves `zeta = dlog_star_inv(X(u), rho)`, `u = xi - A^T zeta`,
/// `X(u) = -h A(alpha) u` by fixed-point iteration from `zeta = rho`.
///
/// Returns `(zeta, u, iterations)`.
pub fn zeta_from_rho(
    geom: &SwimmerGeometry,
    rho: &AlgebraCovector,
    xi: &Vector2<f64>,
    alpha: &ShapeState,
    h: f64,
) -> Result<(AlgebraCovector, ControlVector, usize)> {
    let conn = connection(geom, alpha)?;
    let mut zeta = *rho;
    let mut last_update = f64::INFINITY;
    for it in 1..=FIXED_POINT_MAX_ITERATIONS {
        let u = xi - conn.a.transpose() * zeta.0;
        let increment = AlgebraVector(-(conn.a * u) * h);
        let next = dlog_star_inv(&increment, rho)?;
        last_update = (next - zeta).norm();
        zeta = next;
        if fixed_point_converged(last_update, rho.norm()) {
            let u = xi - conn.a.transpose() * zeta.0;
            return Ok((zeta, u, it));
        }
    }
    Err(Error::FixedPointDiverged { iterations: FIXED_POINT_MAX_ITERATIONS, last_update })
}

/// Advances costates across one node: given `(rho^k, xi^k)` and
/// `alpha_k+1`, finds `u_k+1` and the costates of step `k + 1` such that the
/// backward recursions and the optimal-control condition hold.
pub fn forward_costate_step(
    geom: &SwimmerGeometry,
    previous: &Costate,
    alpha_next: &ShapeState,
    u_guess: &ControlVector,
    h: f64,
) -> Result<(Costate, ControlVector)> {
    let conn = connection(geom, alpha_next)?;
    let mut u = *u_guess;
    let mut last_update = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITERATIONS {
        let increment = AlgebraVector(-(conn.a * u) * h);
        let rho = transport_forward(&increment, &previous.rho);
        let zeta = dlog_star_inv(&increment, &rho)?;
        let xi = previous.xi + shape_gradient(&conn, &zeta, &u) * h;
        let next = xi - conn.a.transpose() * zeta.0;
        last_update = (next - u).norm();
        u = next;
        if fixed_point_converged(last_update, rho.norm() + xi.norm()) {
            let increment = AlgebraVector(-(conn.a * u) * h);
            let rho = transport_forward(&increment, &previous.rho);
            let zeta = dlog_star_inv(&increment, &rho)?;
            let xi = previous.xi + shape_gradient(&conn, &zeta, &u) * h;
            return Ok((Costate { zeta, rho, xi }, u));
        }
    }
    Err(Error::FixedPointDiverged { iterations: FIXED_POINT_MAX_ITERATIONS, last_update })
}

/// Runs the backward recursions from the costates `(rho^N-1, xi^N-1)` of the
/// last step and returns the costates of every step.
pub fn backward_sweep(
    geom: &SwimmerGeometry,
    traj: &StateTrajectory,
    rho_last: AlgebraCovector,
    xi_last: Vector2<f64>,
    h: f64,
) -> Result<Vec<Costate>> {
    let conns = (0..traj.steps())
        .map(|k| connection(geom, &traj.alphas[k]))
        .collect::<Result<Vec<_>>>()?;
    sweep_with_connections(traj, &conns, rho_last, xi_last, h)
}

/// [`backward_sweep`] with `conns[k]` evaluated at `alpha_k`.
pub(crate) fn sweep_with_connections(
    traj: &StateTrajectory,
    conns: &[ConnectionEval],
    rho_last: AlgebraCovector,
    xi_last: Vector2<f64>,
    h: f64,
) -> Result<Vec<Costate>> {
    let n = traj.steps();
    let mut costates = vec![Costate::zero(); n];
    let mut rho = rho_last;
    let mut xi = xi_last;
    for k in (0..n).rev() {
        let u = traj.controls[k];
        let increment = AlgebraVector(-(conns[k].a * u) * h);
        let zeta = dlog_star_inv(&increment, &rho)?;
        costates[k] = Costate { zeta, rho, xi };
        if k > 0 {
            xi -= shape_gradient(&conns[k], &zeta, &u) * h;
            rho = transport_backward(&increment, &rho);
        }
    }
    Ok(costates)
}

/// `-D_u H` of the normal Hamiltonian at every step, i.e. the gradient of the
/// cost plus the terminal pairing that seeded the costates.
pub(crate) fn cost_gradient_with_connections(
    traj: &StateTrajectory,
    conns: &[ConnectionEval],
    costates: &[Costate],
    h: f64,
) -> Vec<Vector2<f64>> {
    (0..traj.steps())
        .map(|k| {
            let c = &costates[k];
            -control_gradient_with(&conns[k], &c.zeta, &c.xi, &traj.controls[k], AbnormalityFlag::Normal, h)
        })
        .collect()
}

/// Builds a normal extremal forward in time from the costates `(rho^0, xi^0)`
/// of the first step.
pub fn propagate_extremal(
    geom: &SwimmerGeometry,
    params: &DiscretizationParams,
    g0: &GroupElement,
    alpha0: &ShapeState,
    rho0: AlgebraCovector,
    xi0: Vector2<f64>,
) -> Result<(StateTrajectory, Vec<Costate>)> {
    let n = params.steps;
    let h = params.h;
    let mut alphas = Vec::with_capacity(n + 1);
    let mut poses = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut costates = Vec::with_capacity(n);

    let (zeta0, u0, _) = zeta_from_rho(geom, &rho0, &xi0, alpha0, h)?;
    let mut costate = Costate { zeta: zeta0, rho: rho0, xi: xi0 };
    let mut u = u0;
    let mut alpha = *alpha0;
    let mut g = *g0;
    alphas.push(alpha);
    poses.push(g);
    for k in 0..n {
        costates.push(costate);
        controls.push(u);
        let increment = group_increment(geom, &alpha, &u, h)?;
        g = g.compose(&exp(&increment));
        alpha = ShapeState(alpha.0 + u * h);
        alphas.push(alpha);
        poses.push(g);
        if k + 1 < n {
            (costate, u) = forward_costate_step(geom, &costate, &alpha, &u, h)?;
        }
    }
    Ok((StateTrajectory { alphas, poses, controls }, costates))
}

/// Max residual norms of the extremal conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// Discrete kinematics.
    pub state: f64,
    /// Coadjoint transport of `rho` and consistency `rho^k = dlog(X_k)^T zeta^k`.
    pub rho_recursion: f64,
    pub xi_recursion: f64,
    /// `max_k |D_u H|`.
    pub stationarity: f64,
    pub stationarity_by_step: Vec<f64>,
    /// `max(|costates|, |nu|)`; must be positive.
    pub nontriviality: f64,
    pub nu: AbnormalityFlag,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.state.max(self.rho_recursion).max(self.xi_recursion).max(self.stationarity)
    }

    pub fn nontrivial(&self) -> bool {
        self.nontriviality > 0.0
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.rows(tol).iter().all(|(_, _, ok)| *ok)
    }

    fn rows(&self, tol: f64) -> [(&'static str, f64, bool); 5] {
        let ok = |v: f64| v.is_finite() && v <= tol;
        [
            ("state_dynamics", self.state, ok(self.state)),
            ("rho_recursion", self.rho_recursion, ok(self.rho_recursion)),
            ("xi_recursion", self.xi_recursion, ok(self.xi_recursion)),
            ("stationarity", self.stationarity, ok(self.stationarity)),
            ("nontriviality", self.nontriviality, self.nontrivial()),
        ]
    }

    /// Plain-text table: condition, max residual, pass/fail at `tol`.
    pub fn table(&self, tol: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tolerance {tol:e}, nu = {}", self.nu.nu());
        let _ = writeln!(out, "{:<16} {:>24} {:>6}", "condition", "max_residual", "status");
        for (name, value, ok) in self.rows(tol) {
            let _ = writeln!(out, "{name:<16} {value:>24.16e} {:>6}", if ok { "pass" } else { "FAIL" });
        }
        out
    }
}

/// Evaluates the extremal conditions on a trajectory with its costates.
///
/// Evaluation failures (shape outside the domain, a step outside the
/// injectivity radius) show up as infinite residuals.
pub fn pmp_residuals(
    geom: &SwimmerGeometry,
    params: &DiscretizationParams,
    traj: &StateTrajectory,
    costates: &[Costate],
    nu: AbnormalityFlag,
) -> ResidualReport {
    let n = traj.steps();
    let h = params.h;
    let mut report = ResidualReport {
        state: 0.0,
        rho_recursion: 0.0,
        xi_recursion: 0.0,
        stationarity: 0.0,
        stationarity_by_step: vec![f64::INFINITY; n],
        nontriviality: costates.iter().map(Costate::norm).fold(nu.nu().abs(), f64::max),
        nu,
    };
    if costates.len() != n || traj.alphas.len() != n + 1 || traj.poses.len() != n + 1 {
        report.state = f64::INFINITY;
        report.rho_recursion = f64::INFINITY;
        report.xi_recursion = f64::INFINITY;
        report.stationarity = f64::INFINITY;
        return report;
    }

    let mut conns = Vec::with_capacity(n);
    for k in 0..n {
        match connection(geom, &traj.alphas[k]) {
            Ok(c) => conns.push(Some(c)),
            Err(_) => conns.push(None),
        }
    }
    let inf = f64::INFINITY;
    for k in 0..n {
        let u = traj.controls[k];
        let c = &costates[k];
        let Some(conn) = &conns[k] else {
            report.state = inf;
            report.rho_recursion = inf;
            report.xi_recursion = inf;
            report.stationarity = inf;
            continue;
        };
        let increment = AlgebraVector(-(conn.a * u) * h);

        let shape_res = (traj.alphas[k + 1].0 - traj.alphas[k].0 - u * h).norm();
        let predicted = traj.poses[k].compose(&exp(&increment));
        let group_res = log(&predicted.inverse().compose(&traj.poses[k + 1])).map_or(inf, |v| v.norm());
        report.state = report.state.max(shape_res).max(group_res);

        let consistency = dlog_star(&increment, &c.zeta).map_or(inf, |r| (r - c.rho).norm());
        report.rho_recursion = report.rho_recursion.max(consistency);
        if k > 0 {
            let prev = &costates[k - 1];
            let rho_res = (prev.rho - transport_backward(&increment, &c.rho)).norm();
            let xi_res = (prev.xi - (c.xi - shape_gradient(conn, &c.zeta, &u) * h)).norm();
            report.rho_recursion = report.rho_recursion.max(rho_res);
            report.xi_recursion = report.xi_recursion.max(xi_res);
        }

        let stat = control_gradient_with(conn, &c.zeta, &c.xi, &u, nu, h).norm();
        report.stationarity_by_step[k] = stat;
        report.stationarity = report.stationarity.max(stat);
    }
    report
}
