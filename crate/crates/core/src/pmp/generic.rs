//! Condition checker for generic discrete systems of the form
//!
//! ```text
//! x_t+1 = f_t(q_t, x_t, u_t)            x in R^nx
//! q_t+1 = q_t exp(X_t(q_t, x_t, u_t))   q in SE(2)
//! ```
//!
//! with stage cost `c_t` and box control sets. The Hamiltonian is
//! `H = nu c_t + <zeta, X_t> + <xi, f_t>`; with `rho^t = dlog(X_t)^T zeta^t`
//! the checked conditions are
//!
//! * the dynamics above,
//! * the adjoint recursions `rho^t-1 = Ad*_{exp(-X_t)} rho^t + T_e* L_q D_q H` and `xi^t-1 = D_x H`,
//! * the variational inequality `<D_u H, w - u_t> <= 0` for all `w` in the box,
//! * nontriviality: costates and `nu` do not vanish together.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};

use super::AbnormalityFlag;
use crate::error::Result;
use crate::se2::{dlog_star, exp, log, AlgebraCovector, AlgebraVector, GroupElement};
use crate::swimmer::{connection, ShapeState, SwimmerGeometry};

/// Partial derivatives of the system maps at one point. Group derivatives are
/// left-trivialized: column `i` is `d/ds` at `q exp(s e_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub base_x: DMatrix<f64>,
    pub base_u: DMatrix<f64>,
    pub base_q: DMatrix<f64>,
    pub increment_x: DMatrix<f64>,
    pub increment_u: DMatrix<f64>,
    pub increment_q: DMatrix<f64>,
    pub cost_x: DVector<f64>,
    pub cost_u: DVector<f64>,
    pub cost_q: Vector3<f64>,
}

/// A discrete system with base dynamics on `R^nx` and group kinematics on SE(2).
pub trait LieGroupSystem {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    /// `f_t(q, x, u)`
    fn base_map(&self, t: usize, q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;

    /// `X_t = log s_t(q, x, u)`
    fn increment(&self, t: usize, q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<AlgebraVector>;

    /// `c_t(q, x, u)`
    fn stage_cost(&self, t: usize, q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64>;

    /// Defaults to central differences with step `1e-6`.
    fn linearize(&self, t: usize, q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<Linearization> {
        finite_difference_linearization(self, t, q, x, u)
    }
}

pub fn finite_difference_linearization<S: LieGroupSystem + ?Sized>(
    system: &S,
    t: usize,
    q: &GroupElement,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Linearization> {
    const STEP: f64 = 1e-6;
    let nx = system.state_dim();
    let nu = system.control_dim();
    let eval = |q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>| -> Result<(DVector<f64>, Vector3<f64>, f64)> {
        Ok((
            system.base_map(t, q, x, u)?,
            system.increment(t, q, x, u)?.0,
            system.stage_cost(t, q, x, u)?,
        ))
    };

    let mut lin = Linearization {
        base_x: DMatrix::zeros(nx, nx),
        base_u: DMatrix::zeros(nx, nu),
        base_q: DMatrix::zeros(nx, 3),
        increment_x: DMatrix::zeros(3, nx),
        increment_u: DMatrix::zeros(3, nu),
        increment_q: DMatrix::zeros(3, 3),
        cost_x: DVector::zeros(nx),
        cost_u: DVector::zeros(nu),
        cost_q: Vector3::zeros(),
    };
    let scale = 1.0 / (2.0 * STEP);
    for i in 0..nx {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += STEP;
        xm[i] -= STEP;
        let (fp, ip, cp) = eval(q, &xp, u)?;
        let (fm, im, cm) = eval(q, &xm, u)?;
        lin.base_x.set_column(i, &((fp - fm) * scale));
        lin.increment_x.set_column(i, &((ip - im) * scale));
        lin.cost_x[i] = (cp - cm) * scale;
    }
    for i in 0..nu {
        let mut up = u.clone();
        let mut um = u.clone();
        up[i] += STEP;
        um[i] -= STEP;
        let (fp, ip, cp) = eval(q, x, &up)?;
        let (fm, im, cm) = eval(q, x, &um)?;
        lin.base_u.set_column(i, &((fp - fm) * scale));
        lin.increment_u.set_column(i, &((ip - im) * scale));
        lin.cost_u[i] = (cp - cm) * scale;
    }
    for i in 0..3 {
        let dir = AlgebraVector(Vector3::ith(i, STEP));
        let qp = q.compose(&exp(&dir));
        let qm = q.compose(&exp(&(-dir)));
        let (fp, ip, cp) = eval(&qp, x, u)?;
        let (fm, im, cm) = eval(&qm, x, u)?;
        lin.base_q.set_column(i, &((fp - fm) * scale));
        lin.increment_q.set_column(i, &((ip - im) * scale));
        lin.cost_q[i] = (cp - cm) * scale;
    }
    Ok(lin)
}

/// Axis-aligned box `lower <= u <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(upper.iter()).all(|(l, u)| l <= u), "empty box");
        Self { lower, upper }
    }

    /// `[-half_width, half_width]^dim`
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self::new(DVector::from_element(dim, -half_width), DVector::from_element(dim, half_width))
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter().enumerate().map(|(i, x)| x.clamp(self.lower[i], self.upper[i])),
        )
    }

    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.lower.len();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }),
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericTrajectory {
    pub q: Vec<GroupElement>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// `zeta^t` and `xi^t` for `t = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericCostates {
    pub zeta: Vec<AlgebraCovector>,
    pub xi: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    /// Dynamics.
    pub dynamics: f64,
    /// Adjoint recursion, group part.
    pub adjoint_group: f64,
    /// Adjoint recursion, base part.
    pub adjoint_base: f64,
    /// Variational inequality as the natural residual `max_t |P_U(u_t + D_u H) - u_t|`; zero iff
    /// the gradient condition holds on the box.
    pub gradient_condition: f64,
    /// `max_t max_w <D_u H, w - u_t> / max(1, |w - u_t|_inf)` over box vertices.
    pub vertex_violation: f64,
    /// Costates and `nu` together.
    pub nontriviality: f64,
    pub nu: AbnormalityFlag,
}

impl ConditionReport {
    fn rows(&self, tol: f64) -> [(&'static str, f64, bool); 6] {
        let ok = |v: f64| v.is_finite() && v <= tol;
        [
            ("dynamics", self.dynamics, ok(self.dynamics)),
            ("adjoint_group", self.adjoint_group, ok(self.adjoint_group)),
            ("adjoint_base", self.adjoint_base, ok(self.adjoint_base)),
            ("gradient", self.gradient_condition, ok(self.gradient_condition)),
            ("vertices", self.vertex_violation, ok(self.vertex_violation)),
            ("nontriviality", self.nontriviality, self.nontriviality > 0.0),
        ]
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.rows(tol).iter().all(|(_, _, ok)| *ok)
    }

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

/// Checks every condition. Evaluation failures surface as infinite residuals.
pub fn generic_pmp_check<S: LieGroupSystem + ?Sized>(
    system: &S,
    boxes: &[BoxSet],
    traj: &GenericTrajectory,
    costates: &GenericCostates,
    nu: AbnormalityFlag,
) -> ConditionReport {
    let n = traj.u.len();
    let nontriviality = costates
        .zeta
        .iter()
        .map(AlgebraCovector::norm)
        .chain(costates.xi.iter().map(|v| v.norm()))
        .fold(nu.nu().abs(), f64::max);
    let mut report = ConditionReport {
        dynamics: 0.0,
        adjoint_group: 0.0,
        adjoint_base: 0.0,
        gradient_condition: 0.0,
        vertex_violation: 0.0,
        nontriviality,
        nu,
    };
    let inf = f64::INFINITY;
    let shapes_ok = traj.q.len() == n + 1
        && traj.x.len() == n + 1
        && costates.zeta.len() == n
        && costates.xi.len() == n
        && boxes.len() == n;
    if !shapes_ok {
        report.dynamics = inf;
        report.adjoint_group = inf;
        report.adjoint_base = inf;
        report.gradient_condition = inf;
        report.vertex_violation = inf;
        return report;
    }

    // per-step: rho^t, the value the recursion predicts for rho^t-1 and xi^t-1
    let mut rho = vec![None; n];
    let mut predicted = vec![None; n];
    for t in 0..n {
        let (q, x, u) = (&traj.q[t], &traj.x[t], &traj.u[t]);
        let zeta = costates.zeta[t];
        let xi = &costates.xi[t];
        let evaluated = (|| -> Result<_> {
            let increment = system.increment(t, q, x, u)?;
            Ok((system.base_map(t, q, x, u)?, increment, system.linearize(t, q, x, u)?, dlog_star(&increment, &zeta)?))
        })();
        let Ok((f, increment, lin, rho_t)) = evaluated else {
            report.dynamics = inf;
            report.gradient_condition = inf;
            report.vertex_violation = inf;
            continue;
        };

        let base_res = (&traj.x[t + 1] - f).norm();
        let group_res = log(&q.compose(&exp(&increment)).inverse().compose(&traj.q[t + 1])).map_or(inf, |v| v.norm());
        report.dynamics = report.dynamics.max(base_res).max(group_res);

        let zeta_dyn = DVector::from_column_slice(zeta.0.as_slice());
        let group_gradient = lin.cost_q * nu.nu()
            + Vector3::from_column_slice((lin.increment_q.transpose() * &zeta_dyn).as_slice())
            + Vector3::from_column_slice((lin.base_q.transpose() * xi).as_slice());
        let dh_dx = &lin.cost_x * nu.nu() + lin.increment_x.transpose() * &zeta_dyn + lin.base_x.transpose() * xi;
        let dh_du = &lin.cost_u * nu.nu() + lin.increment_u.transpose() * &zeta_dyn + lin.base_u.transpose() * xi;
        let transported = AlgebraCovector(exp(&(-increment)).co_ad(&rho_t).0 + group_gradient);
        rho[t] = Some(rho_t);
        predicted[t] = Some((transported, dh_dx));

        let bx = &boxes[t];
        let natural = (bx.project(&(u + &dh_du)) - u).norm();
        report.gradient_condition = report.gradient_condition.max(natural);
        let vertex = bx
            .vertices()
            .iter()
            .map(|w| {
                let d = w - u;
                dh_du.dot(&d) / d.amax().max(1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        report.vertex_violation = report.vertex_violation.max(vertex);
    }

    for t in 1..n {
        match (&rho[t - 1], &predicted[t]) {
            (Some(rho_prev), Some((rho_expected, xi_expected))) => {
                report.adjoint_group = report.adjoint_group.max((*rho_prev - *rho_expected).norm());
                report.adjoint_base = report.adjoint_base.max((&costates.xi[t - 1] - xi_expected).norm());
            }
            _ => {
                report.adjoint_group = inf;
                report.adjoint_base = inf;
            }
        }
    }
    report
}

/// The swimmer as a generic system: `x = alpha`, `f = alpha + h u`,
/// `X = -h A(alpha) u`, `c = (h / 2) |u|^2`, with analytic derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PurcellSystem {
    pub geometry: SwimmerGeometry,
    pub h: f64,
}

fn shape_of(x: &DVector<f64>) -> ShapeState {
    ShapeState::new(x[0], x[1])
}

fn control_of(u: &DVector<f64>) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(u[0], u[1])
}

impl LieGroupSystem for PurcellSystem {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn base_map(&self, _t: usize, _q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x + u * self.h)
    }

    fn increment(&self, _t: usize, _q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<AlgebraVector> {
        let a = connection(&self.geometry, &shape_of(x))?.a;
        Ok(AlgebraVector(-(a * control_of(u)) * self.h))
    }

    fn stage_cost(&self, _t: usize, _q: &GroupElement, _x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.h * u.norm_squared())
    }

    fn linearize(&self, _t: usize, _q: &GroupElement, x: &DVector<f64>, u: &DVector<f64>) -> Result<Linearization> {
        let conn = connection(&self.geometry, &shape_of(x))?;
        let uv = control_of(u);
        let h = self.h;
        let mut increment_x = DMatrix::zeros(3, 2);
        for i in 0..2 {
            increment_x.set_column(i, &(-(conn.da_dalpha[i] * uv) * h));
        }
        let increment_u = DMatrix::from_iterator(3, 2, (-conn.a * h).iter().copied());
        Ok(Linearization {
            base_x: DMatrix::identity(2, 2),
            base_u: DMatrix::identity(2, 2) * h,
            base_q: DMatrix::zeros(2, 3),
            increment_x,
            increment_u,
            increment_q: DMatrix::zeros(3, 3),
            cost_x: DVector::zeros(2),
            cost_u: u * h,
            cost_q: Vector3::zeros(),
        })
    }
}

impl PurcellSystem {
    pub fn wrap(
        traj: &crate::integrator::StateTrajectory,
        costates: &[super::Costate],
    ) -> (GenericTrajectory, GenericCostates) {
        let v2 = |v: &nalgebra::Vector2<f64>| DVector::from_column_slice(v.as_slice());
        (
            GenericTrajectory {
                q: traj.poses.clone(),
                x: traj.alphas.iter().map(|a| v2(&a.0)).collect(),
                u: traj.controls.iter().map(v2).collect(),
            },
            GenericCostates {
                zeta: costates.iter().map(|c| c.zeta).collect(),
                xi: costates.iter().map(|c| v2(&c.xi)).collect(),
            },
        )
    }
}
