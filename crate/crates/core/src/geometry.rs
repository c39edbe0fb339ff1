//! Planar rigid-body math.
//!
//! Rotations are stored as a scalar angle wrapped to `(-pi, pi]`, so every
//! pose is a member of SE(2) by construction and the rotation matrix is only
//! materialized when needed.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

/// 2D vector / point in meters.
pub type Vec2 = Vector2<f64>;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rotation matrix for `theta`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Derivative of [`rotation`] with respect to `theta`.
pub fn rotation_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

/// Squared Frobenius distance `||R(a) - R(b)||_F^2` between two planar
/// rotations, given `delta = a - b`.
pub fn rotation_frobenius_sq(delta: f64) -> f64 {
    4.0 * (1.0 - delta.cos())
}

/// Planar rigid pose: rotation angle plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    theta: f64,
    pub t: Vec2,
}

/// Odometry increment between consecutive frames. Same representation as a
/// pose; the alias keeps signatures readable.
pub type RelativePose2 = Pose2;

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(theta: f64, x: f64, y: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            t: Vec2::new(x, y),
        }
    }

    pub fn from_parts(theta: f64, t: Vec2) -> Self {
        Self {
            theta: wrap_angle(theta),
            t,
        }
    }

    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            t: Vec2::zeros(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap_angle(theta);
    }

    pub fn x(&self) -> f64 {
        self.t.x
    }

    pub fn y(&self) -> f64 {
        self.t.y
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// `self ∘ other`: rotation `theta_a + theta_b`, translation `R_a t_b + t_a`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        Pose2::from_parts(self.theta + other.theta, self.rotation() * other.t + self.t)
    }

    pub fn inverse(&self) -> Pose2 {
        Pose2::from_parts(-self.theta, -(self.rotation().transpose() * self.t))
    }

    /// Increment `r` such that `self.compose(r) == other`.
    pub fn between(&self, other: &Pose2) -> RelativePose2 {
        Pose2::from_parts(
            other.theta - self.theta,
            self.rotation().transpose() * (other.t - self.t),
        )
    }

    /// `R(theta) d + t`.
    pub fn transform_point(&self, d: &Vec2) -> Vec2 {
        self.rotation() * d + self.t
    }

    /// Inverse of [`Pose2::transform_point`].
    pub fn inverse_transform_point(&self, p: &Vec2) -> Vec2 {
        self.rotation().transpose() * (p - self.t)
    }
}

/// Free-function form of [`Pose2::compose`].
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

/// Free-function form of [`Pose2::between`].
pub fn between(a: &Pose2, b: &Pose2) -> RelativePose2 {
    a.between(b)
}

/// Free-function form of [`Pose2::transform_point`].
pub fn transform_point(p: &Pose2, d: &Vec2) -> Vec2 {
    p.transform_point(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pose_close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        wrap_angle(a.theta() - b.theta()).abs() <= tol && (a.t - b.t).norm() <= tol
    }

    #[test]
    fn wrap_keeps_pi_and_maps_minus_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(2.5 * PI), 0.5 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
    }

    #[test]
    fn compose_examples() {
        let p = Pose2::new(0.3, 1.0, -2.0);
        assert!(pose_close(&compose(&Pose2::identity(), &p), &p, 1e-15));
        assert!(pose_close(&compose(&p, &p.inverse()), &Pose2::identity(), 1e-12));
        let r = compose(&Pose2::new(FRAC_PI_2, 1.0, 0.0), &Pose2::new(0.0, 1.0, 0.0));
        assert!(pose_close(&r, &Pose2::new(FRAC_PI_2, 1.0, 1.0), 1e-12));
    }

    #[test]
    fn between_examples() {
        let p = Pose2::new(-1.2, 4.0, 0.5);
        assert!(pose_close(&between(&p, &p), &Pose2::identity(), 1e-12));
        assert!(pose_close(&between(&Pose2::identity(), &p), &p, 1e-12));
        let r = between(&Pose2::new(FRAC_PI_2, 0.0, 0.0), &Pose2::new(FRAC_PI_2, 0.0, 1.0));
        assert!(pose_close(&r, &Pose2::new(0.0, 1.0, 0.0), 1e-12));
    }

    #[test]
    fn transform_point_examples() {
        let d = Vec2::new(3.0, 4.0);
        assert_eq!(transform_point(&Pose2::identity(), &d), d);
        assert_eq!(transform_point(&Pose2::new(0.0, 1.0, 1.0), &d), Vec2::new(4.0, 5.0));
        let q = transform_point(&Pose2::new(PI, 0.0, 0.0), &Vec2::new(1.0, 2.0));
        assert_abs_diff_eq!(q.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(rotation_frobenius_sq(0.0), 0.0);
        assert_abs_diff_eq!(rotation_frobenius_sq(FRAC_PI_2), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rotation_frobenius_sq(PI), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for k in 0..50 {
            let r = rotation(k as f64 * 0.37 - 9.0);
            assert_abs_diff_eq!((r.transpose() * r - Matrix2::identity()).norm(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-15);
        }
    }

    fn arb_pose() -> impl Strategy<Value = Pose2> {
        (-10.0..10.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(a, x, y)| Pose2::new(a, x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn theta_always_wrapped(p in arb_pose(), q in arb_pose()) {
            for r in [p, q, p.compose(&q), p.between(&q), p.inverse()] {
                prop_assert!(r.theta() > -PI && r.theta() <= PI);
            }
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(pose_close(&l, &r, 1e-12 * (1.0 + a.t.norm() + b.t.norm() + c.t.norm())));
        }

        #[test]
        fn between_inverts_compose(a in arb_pose(), r in arb_pose()) {
            let back = a.between(&a.compose(&r));
            prop_assert!(pose_close(&back, &r, 1e-12 * (1.0 + a.t.norm() + r.t.norm())));
        }

        #[test]
        fn frobenius_matches_entrywise(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let m = rotation(a) - rotation(b);
            let entrywise: f64 = m.iter().map(|v| v * v).sum();
            prop_assert!((entrywise - rotation_frobenius_sq(a - b)).abs() <= 1e-12);
        }

        #[test]
        fn transform_is_isometry(p in arb_pose(), x1 in -50.0..50.0f64, y1 in -50.0..50.0f64,
                                 x2 in -50.0..50.0f64, y2 in -50.0..50.0f64) {
            let (u, v) = (Vec2::new(x1, y1), Vec2::new(x2, y2));
            let before = (u - v).norm();
            let after = (p.transform_point(&u) - p.transform_point(&v)).norm();
            prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before));
        }
    }
}
