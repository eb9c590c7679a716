//! Kinematic model of the planar three-link Purcell swimmer.
//!
//! The body frame sits at the midpoint of the base link (Link 0) with its
//! x-axis along that link. Joint 1 is at the `+x` end and carries Outer Link 1,
//! joint 2 is at the `-x` end and carries Outer Link 2. The angles are chain
//! angles: walking from Outer Link 2 through Link 0 to Outer Link 1, the
//! heading turns counterclockwise by `alpha2` at joint 2 and by `alpha1` at
//! joint 1. `alpha = (0, 0)` is the straight configuration and equal angles
//! bend the body into an arc.
//!
//! Hydrodynamics use local resistive-force theory: an element of link with
//! unit tangent `t`, normal `n` and velocity `v` feels the force density
//! `-(c_t t t^T + c_n n n^T) v`. Element velocities are affine in arclength,
//! so the wrench integrals reduce to the zeroth, first and second arclength
//! moments of each link and are evaluated exactly.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2};

use crate::error::{Error, Result};
use crate::se2::GroupElement;

/// Link lengths and drag coefficients per unit length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwimmerGeometry {
    pub len0: f64,
    pub len1: f64,
    pub len2: f64,
    pub drag_tangential: f64,
    pub drag_normal: f64,
}

impl SwimmerGeometry {
    /// Unit links with tangential drag `k` and normal drag `ratio * k`.
    pub fn unit_links(k: f64, ratio: f64) -> Self {
        Self {
            len0: 1.0,
            len1: 1.0,
            len2: 1.0,
            drag_tangential: k,
            drag_normal: ratio * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.len0, self.len1, self.len2, self.drag_tangential, self.drag_normal]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "link lengths and drag coefficients must be positive: {self:?}"
            )))
        }
    }
}

impl Default for SwimmerGeometry {
    /// Unit links, `k = 1`, normal-to-tangential drag ratio 2.
    fn default() -> Self {
        Self::unit_links(1.0, 2.0)
    }
}

/// Joint angles `(alpha1, alpha2)` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ShapeState(pub Vector2<f64>);

impl ShapeState {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self(Vector2::new(alpha1, alpha2))
    }

    pub fn alpha1(&self) -> f64 {
        self.0.x
    }

    pub fn alpha2(&self) -> f64 {
        self.0.y
    }

    pub fn in_domain(&self) -> bool {
        self.0.iter().all(|a| a.abs() < PI)
    }

    pub fn check_domain(&self) -> Result<()> {
        if self.in_domain() {
            Ok(())
        } else {
            Err(Error::ShapeOutOfDomain { alpha1: self.alpha1(), alpha2: self.alpha2() })
        }
    }
}

/// Joint rates `(u1, u2)` in rad/s.
pub type ControlVector = Vector2<f64>;

/// Local connection `A(alpha)` and its shape derivatives.
///
/// Body velocity is `xi = -A(alpha) alpha_dot`, rows in `(vx, vy, omega)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionEval {
    pub a: Matrix3x2<f64>,
    pub da_dalpha: [Matrix3x2<f64>; 2],
}

/// Viscous wrench on the swimmer: `W = -(omega_g xi + omega_alpha alpha_dot)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DragAssembly {
    pub omega_g: Matrix3<f64>,
    pub omega_alpha: Matrix3x2<f64>,
}

#[derive(Clone, Copy, Debug)]
struct DragDerivatives {
    d_omega_g: [Matrix3<f64>; 2],
    d_omega_alpha: [Matrix3x2<f64>; 2],
}

/// 90 degree counterclockwise rotation.
fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// `P = [I | J p]` maps body velocity `(vx, vy, omega)` to the velocity of the
/// body-frame point `p`.
fn point_velocity_map(p: &Vector2<f64>) -> Matrix2x3<f64> {
    let jp = perp(p);
    Matrix2x3::new(1.0, 0.0, jp.x, 0.0, 1.0, jp.y)
}

/// Translation columns zeroed, third column `J t` (the `s`-coefficient of `P`).
fn moment_arm_map(t: &Vector2<f64>) -> Matrix2x3<f64> {
    let jt = perp(t);
    Matrix2x3::new(0.0, 0.0, jt.x, 0.0, 0.0, jt.y)
}

/// Straight link `p(s) = base + s t`, `s` in `[s0, s1]`.
struct Link {
    base: Vector2<f64>,
    tangent: Vector2<f64>,
    s0: f64,
    s1: f64,
    /// Joint whose angle rotates this link, if any.
    joint: Option<usize>,
    /// `d tangent / d alpha_joint = sense * J tangent`.
    sense: f64,
}

struct LinkContribution {
    omega_g: Matrix3<f64>,
    omega_alpha: Matrix3x2<f64>,
    d_omega_g: Matrix3<f64>,
    d_omega_alpha: Matrix3x2<f64>,
}

fn drag_tensor(t: &Vector2<f64>, ct: f64, cn: f64) -> Matrix2<f64> {
    let n = perp(t);
    t * t.transpose() * ct + n * n.transpose() * cn
}

impl Link {
    fn contribution(&self, ct: f64, cn: f64) -> LinkContribution {
        let m0 = self.s1 - self.s0;
        let (a, b) = (self.s0, self.s1);
        let m1 = (b * b - a * a) / 2.0;
        let m2 = (b * b * b - a * a * a) / 3.0;

        let t = self.tangent;
        let k = drag_tensor(&t, ct, cn);
        let p0 = point_velocity_map(&self.base);
        let p1 = moment_arm_map(&t);
        // shape-rate velocity s * J t in the column of the driving joint
        let mut s1 = Matrix2::zeros();
        if let Some(j) = self.joint {
            s1.set_column(j, &(perp(&t) * self.sense));
        }

        let kp0 = k * p0;
        let kp1 = k * p1;
        let cross = p0.transpose() * kp1;
        let omega_g = p0.transpose() * kp0 * m0 + (cross + cross.transpose()) * m1 + p1.transpose() * kp1 * m2;
        let omega_alpha = (p0.transpose() * m1 + p1.transpose() * m2) * (k * s1);

        let (d_omega_g, d_omega_alpha) = match self.joint {
            None => (Matrix3::zeros(), Matrix3x2::zeros()),
            Some(j) => {
                // d t = sense J t, d(sense J t) = -t
                let jt = perp(&t) * self.sense;
                let dk = (jt * t.transpose() + t * jt.transpose()) * (ct - cn);
                let dp1 = moment_arm_map(&jt);
                let mut ds1 = Matrix2::zeros();
                ds1.set_column(j, &(-t));

                let d_cross = p0.transpose() * (dk * p1 + k * dp1);
                let d_quad = dp1.transpose() * kp1 + p1.transpose() * (dk * p1 + k * dp1);
                let d_g = p0.transpose() * dk * p0 * m0 + (d_cross + d_cross.transpose()) * m1 + d_quad * m2;
                let d_a = (p0.transpose() * m1 + p1.transpose() * m2) * (dk * s1 + k * ds1)
                    + dp1.transpose() * (k * s1) * m2;
                (d_g, d_a)
            }
        };

        LinkContribution { omega_g, omega_alpha, d_omega_g, d_omega_alpha }
    }
}

fn links(geom: &SwimmerGeometry, alpha: &ShapeState) -> [Link; 3] {
    let half = geom.len0 / 2.0;
    let (s1, c1) = alpha.alpha1().sin_cos();
    let (s2, c2) = alpha.alpha2().sin_cos();
    [
        Link {
            base: Vector2::zeros(),
            tangent: Vector2::new(1.0, 0.0),
            s0: -half,
            s1: half,
            joint: None,
            sense: 0.0,
        },
        Link {
            base: Vector2::new(half, 0.0),
            tangent: Vector2::new(c1, s1),
            s0: 0.0,
            s1: geom.len1,
            joint: Some(0),
            sense: 1.0,
        },
        Link {
            base: Vector2::new(-half, 0.0),
            tangent: Vector2::new(-c2, s2),
            s0: 0.0,
            s1: geom.len2,
            joint: Some(1),
            sense: -1.0,
        },
    ]
}

/// Body-frame poses of Link 0, Outer Link 1 and Outer Link 2.
///
/// Each pose is the link midpoint with heading equal to the link's axis angle
/// relative to the body x-axis (`0`, `alpha1`, `-alpha2`).
pub fn link_frames(geom: &SwimmerGeometry, alpha: &ShapeState) -> [GroupElement; 3] {
    let [l0, l1, l2] = links(geom, alpha);
    let mid = |l: &Link| l.base + l.tangent * ((l.s0 + l.s1) / 2.0);
    let (m0, m1, m2) = (mid(&l0), mid(&l1), mid(&l2));
    [
        GroupElement::new(m0.x, m0.y, 0.0),
        GroupElement::new(m1.x, m1.y, alpha.alpha1()),
        GroupElement::new(m2.x, m2.y, -alpha.alpha2()),
    ]
}

fn assemble(geom: &SwimmerGeometry, alpha: &ShapeState) -> (DragAssembly, DragDerivatives) {
    let mut omega_g = Matrix3::zeros();
    let mut omega_alpha = Matrix3x2::zeros();
    let mut d_omega_g = [Matrix3::zeros(); 2];
    let mut d_omega_alpha = [Matrix3x2::zeros(); 2];
    for link in links(geom, alpha) {
        let c = link.contribution(geom.drag_tangential, geom.drag_normal);
        omega_g += c.omega_g;
        omega_alpha += c.omega_alpha;
        if let Some(j) = link.joint {
            d_omega_g[j] += c.d_omega_g;
            d_omega_alpha[j] += c.d_omega_alpha;
        }
    }
    (
        DragAssembly { omega_g, omega_alpha },
        DragDerivatives { d_omega_g, d_omega_alpha },
    )
}

/// Drag matrices relating body velocity and shape rates to the net wrench.
pub fn drag_assembly(geom: &SwimmerGeometry, alpha: &ShapeState) -> DragAssembly {
    assemble(geom, alpha).0
}

/// `A(alpha) = omega_g^-1 omega_alpha` with its analytic shape Jacobian.
pub fn connection(geom: &SwimmerGeometry, alpha: &ShapeState) -> Result<ConnectionEval> {
    alpha.check_domain()?;
    let (drag, deriv) = assemble(geom, alpha);
    let chol = drag
        .omega_g
        .cholesky()
        .ok_or(Error::Singular("body drag matrix is not positive definite"))?;
    let a = chol.solve(&drag.omega_alpha);
    let da = |i: usize| chol.solve(&(deriv.d_omega_alpha[i] - deriv.d_omega_g[i] * a));
    Ok(ConnectionEval { a, da_dalpha: [da(0), da(1)] })
}

/// Max relative discrepancy between the analytic `dA/dalpha` and central
/// differences of `A` with step `1e-6`.
pub fn connection_jacobian_check(geom: &SwimmerGeometry, alpha: &ShapeState) -> Result<f64> {
    let step = 1e-6;
    let eval = connection(geom, alpha)?;
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let mut plus = *alpha;
        let mut minus = *alpha;
        plus.0[i] += step;
        minus.0[i] -= step;
        let fd = (connection(geom, &plus)?.a - connection(geom, &minus)?.a) / (2.0 * step);
        let analytic = eval.da_dalpha[i];
        let scale = analytic.abs().max().max(f64::EPSILON);
        worst = worst.max((fd - analytic).abs().max() / scale);
    }
    Ok(worst)
}
