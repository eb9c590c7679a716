//! Structure-preserving discrete kinematics.
//!
//! With piecewise-constant rates on `[t_k, t_k+1)` and the connection frozen
//! at `alpha_k`, one step is
//!
//! ```text
//! alpha_k+1 = alpha_k + h u_k
//! g_k+1     = g_k exp(-h A(alpha_k) u_k)
//! ```
//!
//! The group update uses the closed-form exponential, so poses never leave
//! SE(2) and the update commutes with left translation.

use crate::error::{Error, Result};
use crate::se2::{exp, AlgebraVector, GroupElement};
use crate::swimmer::{connection, ConnectionEval, ControlVector, ShapeState, SwimmerGeometry};

/// Step length `h` and step count `N`; the horizon is `h * N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscretizationParams {
    pub h: f64,
    pub steps: usize,
}

impl DiscretizationParams {
    pub fn new(h: f64, steps: usize) -> Result<Self> {
        let params = Self { h, steps };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) || self.steps == 0 {
            return Err(Error::InvalidInput(format!(
                "step length must be positive and step count at least 1 (h = {}, N = {})",
                self.h, self.steps
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.h * k as f64
    }
}

/// States at the `N + 1` nodes and the `N` controls between them.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub alphas: Vec<ShapeState>,
    pub poses: Vec<GroupElement>,
    pub controls: Vec<ControlVector>,
}

impl StateTrajectory {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn final_shape(&self) -> ShapeState {
        *self.alphas.last().expect("trajectory has at least one node")
    }

    pub fn final_pose(&self) -> GroupElement {
        *self.poses.last().expect("trajectory has at least one node")
    }
}

/// Lie-algebra increment `-h A(alpha) u` of one step.
pub fn group_increment(
    geom: &SwimmerGeometry,
    alpha: &ShapeState,
    u: &ControlVector,
    h: f64,
) -> Result<AlgebraVector> {
    let a = connection(geom, alpha)?.a;
    Ok(AlgebraVector(-(a * u) * h))
}

/// One step of the discrete kinematics.
pub fn step(
    geom: &SwimmerGeometry,
    g: &GroupElement,
    alpha: &ShapeState,
    u: &ControlVector,
    h: f64,
) -> Result<(GroupElement, ShapeState)> {
    let increment = group_increment(geom, alpha, u, h)?;
    Ok((g.compose(&exp(&increment)), ShapeState(alpha.0 + u * h)))
}

/// Iterates [`step`] over the whole control sequence.
pub fn rollout(
    geom: &SwimmerGeometry,
    g0: &GroupElement,
    alpha0: &ShapeState,
    controls: &[ControlVector],
    params: &DiscretizationParams,
) -> Result<StateTrajectory> {
    rollout_with_connections(geom, g0, alpha0, controls, params).map(|(traj, _)| traj)
}

/// [`rollout`] that also returns the connection evaluated at `alpha_0..alpha_N-1`.
pub fn rollout_with_connections(
    geom: &SwimmerGeometry,
    g0: &GroupElement,
    alpha0: &ShapeState,
    controls: &[ControlVector],
    params: &DiscretizationParams,
) -> Result<(StateTrajectory, Vec<ConnectionEval>)> {
    if controls.len() != params.steps {
        return Err(Error::InvalidInput(format!(
            "expected {} controls, got {}",
            params.steps,
            controls.len()
        )));
    }
    let mut alphas = Vec::with_capacity(controls.len() + 1);
    let mut poses = Vec::with_capacity(controls.len() + 1);
    let mut conns = Vec::with_capacity(controls.len());
    alphas.push(*alpha0);
    poses.push(*g0);
    let (mut g, mut alpha) = (*g0, *alpha0);
    for u in controls {
        let conn = connection(geom, &alpha)?;
        let increment = AlgebraVector(-(conn.a * u) * params.h);
        g = g.compose(&exp(&increment));
        alpha = ShapeState(alpha.0 + u * params.h);
        conns.push(conn);
        alphas.push(alpha);
        poses.push(g);
    }
    Ok((StateTrajectory { alphas, poses, controls: controls.to_vec() }, conns))
}

/// Net displacement `g_0^-1 g_N`.
pub fn holonomy(traj: &StateTrajectory) -> GroupElement {
    traj.poses[0].inverse().compose(&traj.final_pose())
}

/// `sum_k (h / 2) |u_k|^2`.
pub fn cost(controls: &[ControlVector], h: f64) -> f64 {
    controls.iter().map(|u| 0.5 * h * u.norm_squared()).sum()
}
