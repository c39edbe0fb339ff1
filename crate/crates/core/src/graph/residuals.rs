//! Residuals of the four factor types and their analytic Jacobians.
//!
//! Pose variables are ordered `[theta, t_x, t_y]`. Costs are unweighted; the
//! solver scales each block by its weight.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::{rotation, rotation_derivative, wrap_angle, Pose2, RelativePose2, Vec2};

/// Scalar angle residual whose square equals the squared Frobenius distance
/// of the two rotations: `2 sqrt(2) sin(delta / 2)`.
fn angle_residual(delta: f64) -> (f64, f64) {
    let half = 0.5 * wrap_angle(delta);
    (2.0 * SQRT_2 * half.sin(), SQRT_2 * half.cos())
}

/// Odometry residual in the frame-`i` convention:
/// `R_i^T (t_prev - t_i) - t_hat` and the rotation term of
/// `R_i^T R_prev` against `R_hat`. `meas` is the previous pose as seen from
/// the current one. Returns the unweighted cost and the residual vector.
pub fn residual_odometry(current: &Pose2, previous: &Pose2, meas: &RelativePose2) -> (f64, Vector3<f64>) {
    let (r, _, _) = odometry_jacobians(current, previous, meas);
    (r.norm_squared(), r)
}

/// Residual and Jacobians (w.r.t. current, previous) for [`residual_odometry`].
pub fn odometry_jacobians(current: &Pose2, previous: &Pose2, meas: &RelativePose2) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let rt = rotation(current.theta()).transpose();
    let drt = rotation_derivative(current.theta()).transpose();
    let diff = previous.t - current.t;
    let rt_res = rt * diff - meas.t;
    let (ra, dra) = angle_residual(previous.theta() - current.theta() - meas.theta());

    let d_theta = drt * diff;
    let mut jc = Matrix3::zeros();
    jc[(0, 0)] = d_theta.x;
    jc[(1, 0)] = d_theta.y;
    jc.fixed_view_mut::<2, 2>(0, 1).copy_from(&(-rt));
    jc[(2, 0)] = -dra;

    let mut jp = Matrix3::zeros();
    jp.fixed_view_mut::<2, 2>(0, 1).copy_from(&rt);
    jp[(2, 0)] = dra;

    (Vector3::new(rt_res.x, rt_res.y, ra), jc, jp)
}

/// Conventional relative-pose residual `R_prev^T (t_i - t_prev) - t_f`,
/// with `increment` the forward motion from the previous frame.
pub fn residual_odometry_conventional(current: &Pose2, previous: &Pose2, increment: &RelativePose2) -> (f64, Vector3<f64>) {
    let (r, _, _) = odometry_conventional_jacobians(current, previous, increment);
    (r.norm_squared(), r)
}

pub fn odometry_conventional_jacobians(
    current: &Pose2,
    previous: &Pose2,
    increment: &RelativePose2,
) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let rt = rotation(previous.theta()).transpose();
    let drt = rotation_derivative(previous.theta()).transpose();
    let diff = current.t - previous.t;
    let rt_res = rt * diff - increment.t;
    let (ra, dra) = angle_residual(current.theta() - previous.theta() - increment.theta());

    let mut jc = Matrix3::zeros();
    jc.fixed_view_mut::<2, 2>(0, 1).copy_from(&rt);
    jc[(2, 0)] = dra;

    let d_theta = drt * diff;
    let mut jp = Matrix3::zeros();
    jp[(0, 0)] = d_theta.x;
    jp[(1, 0)] = d_theta.y;
    jp.fixed_view_mut::<2, 2>(0, 1).copy_from(&(-rt));
    jp[(2, 0)] = -dra;

    (Vector3::new(rt_res.x, rt_res.y, ra), jc, jp)
}

/// Prior residual `t_i - (t_gps - bias_obs)`.
pub fn residual_prior(pose: &Pose2, gps: &Vec2, bias_obs: &Vec2) -> Vector2<f64> {
    pose.t - (gps - bias_obs)
}

/// Jacobian of [`residual_prior`] w.r.t. the pose.
pub fn prior_jacobian() -> Matrix2x3<f64> {
    Matrix2x3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
}

/// One residual `R_i d + t_i - l` per (detection, landmark) pair.
pub fn residual_association(pose: &Pose2, pairs: &[(Vec2, Vec2)]) -> Vec<Vector2<f64>> {
    pairs.iter().map(|(d, l)| pose.transform_point(d) - l).collect()
}

/// Residual and pose Jacobian for one association pair.
pub fn association_jacobian(pose: &Pose2, detection: &Vec2, landmark: &Vec2) -> (Vector2<f64>, Matrix2x3<f64>) {
    let r = pose.transform_point(detection) - landmark;
    let d_theta = rotation_derivative(pose.theta()) * detection;
    (r, Matrix2x3::new(d_theta.x, 1.0, 0.0, d_theta.y, 0.0, 1.0))
}

/// One residual `e - (t_gps - t_frozen)` per window entry.
pub fn residual_error(bias: &Vec2, window: &[(Vec2, Vec2)]) -> Vec<Vector2<f64>> {
    window.iter().map(|(gps, frozen)| bias - (gps - frozen)).collect()
}

/// Jacobian of a bias-error residual w.r.t. the bias.
pub fn error_jacobian() -> Matrix2<f64> {
    Matrix2::identity()
}
