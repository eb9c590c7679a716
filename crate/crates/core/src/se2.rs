//! Closed-form arithmetic on the planar rigid-motion group SE(2).
//!
//! Group elements are stored as `(x, y, theta)` with `theta` kept unwrapped;
//! only [`log`] reduces the angle to its canonical representative in
//! `(-pi, pi]`. Algebra vectors and covectors use the fixed basis
//! `(vx, vy, omega)`, and all matrix forms below are written in that basis.
//!
//! Two trivialized derivatives of the exponential appear in the discrete
//! adjoint equations:
//!
//! * `dexp_right(X)`, written `J_r(X)`, with `exp(X + d) = exp(X) exp(J_r(X) d)`
//!   to first order;
//! * `dlog(X) = J_r(X)^-1`, with `log(exp(X) exp(s eta)) = X + s dlog(X) eta`.
//!
//! [`dlog_star`] and [`dlog_star_inv`] are their transposes acting on covectors.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Default margin `eps` for the injectivity check `|theta| < pi - eps`.
pub const DEFAULT_INJECTIVITY_MARGIN: f64 = 1e-9;

/// Below this rotation magnitude the trivialized derivatives switch to the
/// Bernoulli series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Number of terms kept in the series fallback.
pub const SERIES_TERMS: usize = 15;

/// A planar pose: position `(x, y)` in meters and heading `theta` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GroupElement {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// An element of se(2) in the basis `(vx, vy, omega)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AlgebraVector(pub Vector3<f64>);

/// An element of se(2)*, paired with [`AlgebraVector`] by the dot product.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AlgebraCovector(pub Vector3<f64>);

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Homogeneous 3x3 matrix `[[R, p], [0, 1]]`.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0)
    }

    /// Group product `self * other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let p = self.rotation() * other.translation();
        GroupElement {
            x: self.x + p.x,
            y: self.y + p.y,
            theta: self.theta + other.theta,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let p = -(self.rotation().transpose() * self.translation());
        GroupElement { x: p.x, y: p.y, theta: -self.theta }
    }

    /// Matrix of `Ad_g` in the `(vx, vy, omega)` basis: `[[R, (y, -x)^T], [0, 1]]`.
    pub fn adjoint_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }

    /// `Ad_g X`.
    pub fn ad(&self, v: &AlgebraVector) -> AlgebraVector {
        AlgebraVector(self.adjoint_matrix() * v.0)
    }

    /// `Ad*_g a`, defined by `<Ad*_g a, X> = <a, Ad_g X>`.
    pub fn co_ad(&self, a: &AlgebraCovector) -> AlgebraCovector {
        AlgebraCovector(self.adjoint_matrix().transpose() * a.0)
    }

    /// Same pose with the heading reduced to `(-pi, pi]`.
    pub fn canonical(&self) -> GroupElement {
        GroupElement { theta: canonical_angle(self.theta), ..*self }
    }
}

impl AlgebraVector {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self(Vector3::new(vx, vy, omega))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn vx(&self) -> f64 {
        self.0.x
    }

    pub fn vy(&self) -> f64 {
        self.0.y
    }

    pub fn omega(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// 3x3 matrix representation in the homogeneous embedding.
    pub fn hat(&self) -> Matrix3<f64> {
        let (vx, vy, w) = (self.vx(), self.vy(), self.omega());
        Matrix3::new(0.0, -w, vx, w, 0.0, vy, 0.0, 0.0, 0.0)
    }

    /// Inverse of [`AlgebraVector::hat`]; reads the rotation rate from entry `(1, 0)`.
    pub fn vee(m: &Matrix3<f64>) -> Self {
        Self::new(m[(0, 2)], m[(1, 2)], m[(1, 0)])
    }

    /// Matrix of `ad_X = [X, .]`.
    pub fn ad_matrix(&self) -> Matrix3<f64> {
        let (vx, vy, w) = (self.vx(), self.vy(), self.omega());
        Matrix3::new(0.0, -w, vy, w, 0.0, -vx, 0.0, 0.0, 0.0)
    }
}

impl AlgebraCovector {
    pub fn new(a0: f64, a1: f64, a2: f64) -> Self {
        Self(Vector3::new(a0, a1, a2))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn pair(&self, v: &AlgebraVector) -> f64 {
        self.0.dot(&v.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

macro_rules! linear_ops {
    ($t:ident) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                $t(self.0 + rhs.0)
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                $t(self.0 - rhs.0)
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-self.0)
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                $t(self.0 * rhs)
            }
        }
    };
}

linear_ops!(AlgebraVector);
linear_ops!(AlgebraCovector);

/// Reduces an angle to `(-pi, pi]`.
pub fn canonical_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `sin(w) / w`
fn sinc(w: f64) -> f64 {
    if w.abs() < 1e-8 {
        1.0 - w * w / 6.0
    } else {
        w.sin() / w
    }
}

/// `(1 - cos w) / w^2`, evaluated without cancellation.
fn versine_ratio(w: f64) -> f64 {
    if w.abs() < 1e-8 {
        0.5 - w * w / 24.0
    } else {
        let s = (0.5 * w).sin();
        2.0 * s * s / (w * w)
    }
}

/// `(w - sin w) / w^2`.
fn sine_remainder_ratio(w: f64) -> f64 {
    if w.abs() < 1e-2 {
        let w2 = w * w;
        // w/6 - w^3/120 + w^5/5040 - w^7/362880 + w^9/39916800
        w * (1.0 / 6.0
            + w2 * (-1.0 / 120.0 + w2 * (1.0 / 5040.0 + w2 * (-1.0 / 362880.0 + w2 / 39916800.0))))
    } else {
        (w - w.sin()) / (w * w)
    }
}

/// `(w / 2) cot(w / 2)`.
fn half_cot(w: f64) -> f64 {
    if w.abs() < 1e-4 {
        let w2 = w * w;
        1.0 - w2 / 12.0 - w2 * w2 / 720.0
    } else {
        let half = 0.5 * w;
        half * half.cos() / half.sin()
    }
}

/// Left-translation matrix `V(omega)` with `exp(v, omega) = (V v, omega)`.
fn translation_jacobian(w: f64) -> Matrix2<f64> {
    let a = sinc(w);
    let b = w * versine_ratio(w);
    Matrix2::new(a, -b, b, a)
}

/// Closed-form exponential map.
pub fn exp(v: &AlgebraVector) -> GroupElement {
    let w = v.omega();
    let p = translation_jacobian(w) * Vector2::new(v.vx(), v.vy());
    GroupElement { x: p.x, y: p.y, theta: w }
}

fn check_injectivity(theta: f64, margin: f64) -> Result<()> {
    if theta.abs() >= PI - margin || !theta.is_finite() {
        Err(Error::InjectivityRadius { theta, margin })
    } else {
        Ok(())
    }
}

/// Logarithm with the default injectivity margin.
pub fn log(g: &GroupElement) -> Result<AlgebraVector> {
    log_with_margin(g, DEFAULT_INJECTIVITY_MARGIN)
}

/// Logarithm on `{|theta| < pi - margin}` (canonical angle).
pub fn log_with_margin(g: &GroupElement, margin: f64) -> Result<AlgebraVector> {
    let w = canonical_angle(g.theta);
    check_injectivity(w, margin)?;
    let c = half_cot(w);
    let half = 0.5 * w;
    // inverse of translation_jacobian(w)
    let v_inv = Matrix2::new(c, half, -half, c);
    let v = v_inv * g.translation();
    Ok(AlgebraVector::new(v.x, v.y, w))
}

const BERNOULLI_OVER_FACTORIAL: [f64; SERIES_TERMS] = [
    1.0,
    -0.5,
    1.0 / 12.0,                 // B2 / 2!
    0.0,
    -1.0 / 720.0,               // B4 / 4!
    0.0,
    1.0 / 30240.0,              // B6 / 6!
    0.0,
    -1.0 / 1209600.0,           // B8 / 8!
    0.0,
    1.0 / 47900160.0,           // B10 / 10!
    0.0,
    -691.0 / 1307674368000.0,   // B12 / 12!
    0.0,
    1.0 / 74724249600.0,        // B14 / 14!
];

/// `dlog(X) = sum_n B_n / n! (-ad_X)^n`, truncated after [`SERIES_TERMS`] terms.
pub fn dlog_matrix_series(v: &AlgebraVector) -> Matrix3<f64> {
    let neg_ad = -v.ad_matrix();
    let mut power = Matrix3::identity();
    let mut sum = Matrix3::zeros();
    for coeff in BERNOULLI_OVER_FACTORIAL {
        sum += power * coeff;
        power = neg_ad * power;
    }
    sum
}

/// `J_r(X) = sum_n (-ad_X)^n / (n + 1)!`, truncated after [`SERIES_TERMS`] terms.
pub fn dexp_right_series(v: &AlgebraVector) -> Matrix3<f64> {
    let neg_ad = -v.ad_matrix();
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for n in 1..SERIES_TERMS {
        term = neg_ad * term / (n as f64 + 1.0);
        sum += term;
    }
    sum
}

/// Right-trivialized derivative of `exp`: `exp(X + d) ~ exp(X) exp(J_r(X) d)`.
pub fn dexp_right(v: &AlgebraVector) -> Matrix3<f64> {
    let w = v.omega();
    if w.abs() < SERIES_THRESHOLD {
        return dexp_right_series(v);
    }
    let a = sinc(w);
    let p = versine_ratio(w);
    let b = w * p;
    let q = sine_remainder_ratio(w);
    let (v1, v2) = (v.vx(), v.vy());
    Matrix3::new(
        a,
        b,
        q * v1 - p * v2,
        -b,
        a,
        p * v1 + q * v2,
        0.0,
        0.0,
        1.0,
    )
}

/// Inverse of [`dexp_right`]: `log(exp(X) exp(s eta)) = X + s dlog(X) eta + O(s^2)`.
///
/// Requires `|omega| < pi - DEFAULT_INJECTIVITY_MARGIN`.
pub fn dlog_matrix(v: &AlgebraVector) -> Result<Matrix3<f64>> {
    let w = v.omega();
    check_injectivity(w, DEFAULT_INJECTIVITY_MARGIN)?;
    if w.abs() < SERIES_THRESHOLD {
        return Ok(dlog_matrix_series(v));
    }
    let c = half_cot(w);
    let half = 0.5 * w;
    let block_inv = Matrix2::new(c, -half, half, c);
    let p = versine_ratio(w);
    let q = sine_remainder_ratio(w);
    let (v1, v2) = (v.vx(), v.vy());
    let col = Vector2::new(q * v1 - p * v2, p * v1 + q * v2);
    let top = -(block_inv * col);
    Ok(Matrix3::new(
        block_inv[(0, 0)],
        block_inv[(0, 1)],
        top.x,
        block_inv[(1, 0)],
        block_inv[(1, 1)],
        top.y,
        0.0,
        0.0,
        1.0,
    ))
}

/// `rho = dlog(X)^T zeta`: pulls a covector on the increment `X` back to the
/// left-trivialized cotangent space at the end of the step.
pub fn dlog_star(v: &AlgebraVector, zeta: &AlgebraCovector) -> Result<AlgebraCovector> {
    Ok(AlgebraCovector(dlog_matrix(v)?.transpose() * zeta.0))
}

/// Inverse of [`dlog_star`]: `zeta = J_r(X)^T rho`.
pub fn dlog_star_inv(v: &AlgebraVector, rho: &AlgebraCovector) -> Result<AlgebraCovector> {
    check_injectivity(v.omega(), DEFAULT_INJECTIVITY_MARGIN)?;
    let jr = dexp_right(v);
    // det(J_r) = 2 (1 - cos w) / w^2 > 0 inside the injectivity radius
    if jr.determinant().abs() < 1e-300 {
        return Err(Error::Singular("right-trivialized derivative of exp"));
    }
    Ok(AlgebraCovector(jr.transpose() * rho.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_algebra(rng: &mut ChaCha8Rng, max_w: f64) -> AlgebraVector {
        AlgebraVector::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-max_w..max_w),
        )
    }

    fn rand_group(rng: &mut ChaCha8Rng) -> GroupElement {
        GroupElement::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-PI..PI),
        )
    }

    fn assert_pose_close(a: &GroupElement, b: &GroupElement, tol: f64) {
        assert!((a.x - b.x).abs() <= tol, "{a:?} vs {b:?}");
        assert!((a.y - b.y).abs() <= tol, "{a:?} vs {b:?}");
        assert!(canonical_angle(a.theta - b.theta).abs() <= tol, "{a:?} vs {b:?}");
    }

    /// Integrates g' = g hat(X) with RK4 on the homogeneous matrix.
    fn exp_by_integration(v: &AlgebraVector, steps: usize) -> Matrix3<f64> {
        let xi = v.hat();
        let dt = 1.0 / steps as f64;
        let mut g = Matrix3::identity();
        for _ in 0..steps {
            let k1 = g * xi;
            let k2 = (g + k1 * (dt / 2.0)) * xi;
            let k3 = (g + k2 * (dt / 2.0)) * xi;
            let k4 = (g + k3 * dt) * xi;
            g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        g
    }

    #[test]
    fn compose_examples() {
        let g = GroupElement::new(1.0, 2.0, PI / 3.0);
        assert_eq!(GroupElement::IDENTITY.compose(&g), g);
        let out = GroupElement::new(1.0, 0.0, PI / 2.0).compose(&GroupElement::new(1.0, 0.0, 0.0));
        let m = GroupElement::new(1.0, 0.0, PI / 2.0).to_matrix()
            * GroupElement::new(1.0, 0.0, 0.0).to_matrix();
        assert_pose_close(&out, &GroupElement::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)])), 1e-15);
        assert_pose_close(&out, &GroupElement::new(1.0, 1.0, PI / 2.0), 1e-15);
    }

    #[test]
    fn inverse_examples() {
        assert_pose_close(&GroupElement::IDENTITY.inverse(), &GroupElement::IDENTITY, 0.0);
        assert_pose_close(&GroupElement::new(1.0, 0.0, 0.0).inverse(), &GroupElement::new(-1.0, 0.0, 0.0), 0.0);
        let g = GroupElement::new(1.0, 2.0, PI / 2.0);
        let m = g.to_matrix().try_inverse().unwrap();
        let inv = g.inverse();
        assert_pose_close(&inv, &GroupElement::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)])), 1e-14);
        assert_pose_close(&inv, &GroupElement::new(-2.0, 1.0, -PI / 2.0), 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let g = rand_group(&mut rng);
            assert_pose_close(&g.compose(&g.inverse()), &GroupElement::IDENTITY, 1e-14);
            assert_pose_close(&g.inverse().compose(&g), &GroupElement::IDENTITY, 1e-14);
        }
    }

    #[test]
    fn rotation_block_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let r = rand_group(&mut rng).rotation();
            assert!((r.transpose() * r - Matrix2::identity()).abs().max() < 1e-15);
            assert!((r.determinant() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_examples() {
        assert_pose_close(&exp(&AlgebraVector::new(1.0, 0.0, 0.0)), &GroupElement::new(1.0, 0.0, 0.0), 0.0);
        assert_pose_close(&exp(&AlgebraVector::new(0.0, 0.0, PI / 2.0)), &GroupElement::new(0.0, 0.0, PI / 2.0), 0.0);
        let x = AlgebraVector::new(1.0, 0.0, PI / 2.0);
        let oracle = exp_by_integration(&x, 2000);
        let g = exp(&x);
        assert!((g.x - oracle[(0, 2)]).abs() < 1e-12);
        assert!((g.y - oracle[(1, 2)]).abs() < 1e-12);
        assert_pose_close(&g, &GroupElement::new(2.0 / PI, 2.0 / PI, PI / 2.0), 1e-15);
    }

    #[test]
    fn exp_matches_flow_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = rand_algebra(&mut rng, 3.0);
            let oracle = exp_by_integration(&x, 4000);
            let g = exp(&x).to_matrix();
            assert!((g - oracle).abs().max() < 1e-10, "{x:?}");
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(log(&GroupElement::IDENTITY).unwrap(), AlgebraVector::zero());
        assert_eq!(log(&GroupElement::new(1.0, 0.0, 0.0)).unwrap(), AlgebraVector::new(1.0, 0.0, 0.0));
        let v = log(&GroupElement::new(2.0 / PI, 2.0 / PI, PI / 2.0)).unwrap();
        assert!((v.0 - Vector3::new(1.0, 0.0, PI / 2.0)).abs().max() < 1e-15);
    }

    #[test]
    fn log_rejects_half_turn() {
        assert!(matches!(log(&GroupElement::new(0.0, 0.0, PI)), Err(Error::InjectivityRadius { .. })));
        assert!(matches!(log(&GroupElement::new(0.0, 0.0, -PI + 1e-12)), Err(Error::InjectivityRadius { .. })));
        assert!(log_with_margin(&GroupElement::new(0.0, 0.0, PI - 0.05), 0.1).is_err());
        // unwrapped angles are canonicalized first
        let v = log(&GroupElement::new(0.0, 0.0, 2.0 * PI + 0.25)).unwrap();
        assert!((v.omega() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn exp_log_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let g = GroupElement::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-(PI - 0.1)..(PI - 0.1)),
            );
            assert_pose_close(&exp(&log(&g).unwrap()), &g, 1e-12);
            let x = rand_algebra(&mut rng, PI - 0.1);
            assert!((log(&exp(&x)).unwrap().0 - x.0).abs().max() < 1e-12);
        }
    }

    #[test]
    fn adjoint_examples() {
        let x = AlgebraVector::new(0.3, -0.2, 0.7);
        assert_eq!(GroupElement::IDENTITY.ad(&x), x);
        let out = GroupElement::new(1.0, 0.0, 0.0).ad(&AlgebraVector::new(0.0, 0.0, 1.0));
        assert_eq!(out, AlgebraVector::new(0.0, -1.0, 1.0));
    }

    #[test]
    fn adjoint_matches_conjugation_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = 1e-6;
        for _ in 0..50 {
            let g = rand_group(&mut rng);
            let x = rand_algebra(&mut rng, 2.0);
            let conj = |t: f64| log(&g.compose(&exp(&(x * t))).compose(&g.inverse())).unwrap();
            let fd = (conj(s).0 - conj(-s).0) / (2.0 * s);
            assert!((fd - g.ad(&x).0).abs().max() < 1e-8);
        }
    }

    #[test]
    fn adjoint_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let g1 = rand_group(&mut rng);
            let g2 = rand_group(&mut rng);
            let lhs = g1.compose(&g2).adjoint_matrix();
            let rhs = g1.adjoint_matrix() * g2.adjoint_matrix();
            assert!((lhs - rhs).abs().max() < 1e-13);
        }
    }

    #[test]
    fn coadjoint_pairing() {
        let a = AlgebraCovector::new(0.1, 0.2, 0.3);
        assert_eq!(GroupElement::IDENTITY.co_ad(&a), a);
        let e3 = AlgebraCovector::new(0.0, 0.0, 1.0);
        let g = GroupElement::new(1.0, 0.0, 0.0);
        let adt = g.adjoint_matrix().transpose();
        assert_eq!(adt.row(2).transpose(), Vector3::new(0.0, -1.0, 1.0));
        assert_eq!(g.co_ad(&e3), AlgebraCovector::new(0.0, 0.0, 1.0));
        let e2 = AlgebraCovector::new(0.0, 1.0, 0.0);
        assert_eq!(g.co_ad(&e2), AlgebraCovector::new(0.0, 1.0, -1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let g = rand_group(&mut rng);
            let x = rand_algebra(&mut rng, 3.0);
            let a = AlgebraCovector(rand_algebra(&mut rng, 3.0).0);
            assert!((g.co_ad(&a).pair(&x) - a.pair(&g.ad(&x))).abs() < 1e-13);
        }
    }

    #[test]
    fn hat_vee_roundtrip() {
        let x = AlgebraVector::new(0.4, -1.1, 2.2);
        assert_eq!(AlgebraVector::vee(&x.hat()), x);
    }

    #[test]
    fn dlog_star_at_zero_is_identity() {
        let z = AlgebraCovector::new(0.3, -0.4, 1.5);
        assert_eq!(dlog_star(&AlgebraVector::zero(), &z).unwrap(), z);
        assert_eq!(dlog_star_inv(&AlgebraVector::zero(), &z).unwrap(), z);
    }

    #[test]
    fn dlog_star_deviation_is_first_order() {
        let z = AlgebraCovector::new(0.3, -0.4, 1.5);
        let dir = AlgebraVector::new(0.6, -0.3, 0.9);
        let d1 = (dlog_star(&(dir * 1e-3), &z).unwrap() - z).norm();
        let d2 = (dlog_star(&(dir * 2e-3), &z).unwrap() - z).norm();
        assert!(d1 > 0.0);
        assert!((d2 / d1 - 2.0).abs() < 1e-2);
    }

    #[test]
    fn dlog_star_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = 1e-6;
        for _ in 0..100 {
            let x = rand_algebra(&mut rng, 2.5);
            let eta = {
                let e = rand_algebra(&mut rng, 1.0);
                e * (1.0 / e.norm())
            };
            let zeta = AlgebraCovector(rand_algebra(&mut rng, 2.0).0);
            let moved = log(&exp(&x).compose(&exp(&(eta * s)))).unwrap();
            let fd = zeta.pair(&((moved - x) * (1.0 / s)));
            let analytic = dlog_star(&x, &zeta).unwrap().pair(&eta);
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn dexp_right_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = 1e-6;
        for _ in 0..100 {
            let x = rand_algebra(&mut rng, 2.5);
            let d = rand_algebra(&mut rng, 1.0);
            let plus = log(&exp(&x).inverse().compose(&exp(&(x + d * s)))).unwrap();
            let minus = log(&exp(&x).inverse().compose(&exp(&(x - d * s)))).unwrap();
            let fd = (plus.0 - minus.0) / (2.0 * s);
            assert!((fd - dexp_right(&x) * d.0).abs().max() < 1e-8);
        }
    }

    #[test]
    fn closed_form_agrees_with_series_near_threshold() {
        for &w in &[2e-4, 1e-3, 1e-2, 0.05] {
            let x = AlgebraVector::new(1.3, -0.7, w);
            let closed = dlog_matrix(&x).unwrap();
            let series = dlog_matrix_series(&x);
            assert!((closed - series).abs().max() < 1e-12, "w = {w}");
            assert!((dexp_right(&x) - dexp_right_series(&x)).abs().max() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn dlog_star_inv_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..500 {
            let x = rand_algebra(&mut rng, PI - 0.1);
            let rho = AlgebraCovector(rand_algebra(&mut rng, 2.0).0);
            let back = dlog_star(&x, &dlog_star_inv(&x, &rho).unwrap()).unwrap();
            assert!((back - rho).norm() <= 1e-12 * rho.norm().max(1.0));
        }
        let rho = AlgebraCovector::new(1.0, 2.0, 3.0);
        let near = dlog_star_inv(&AlgebraVector::new(1e-9, 1e-9, 1e-9), &rho).unwrap();
        assert!((near - rho).norm() < 1e-8);
    }

    #[test]
    fn dlog_rejects_outside_injectivity_radius() {
        let x = AlgebraVector::new(0.0, 0.0, PI);
        let z = AlgebraCovector::new(1.0, 0.0, 0.0);
        assert!(matches!(dlog_star(&x, &z), Err(Error::InjectivityRadius { .. })));
        assert!(matches!(dlog_star_inv(&x, &z), Err(Error::InjectivityRadius { .. })));
    }

    #[test]
    fn canonical_angle_range() {
        assert_eq!(canonical_angle(PI), PI);
        assert!((canonical_angle(-PI) - PI).abs() < 1e-15);
        assert!((canonical_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
    }
}
