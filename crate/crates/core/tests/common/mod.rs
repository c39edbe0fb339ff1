//! Independent oracles shared by the integration tests: a first-principles
//! cost evaluator, a derivative-free minimizer, random problem generators
//! and the numerical, weighting and round-trip checks.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Rotation2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geoloc::evaluation::{interpolate_ground_truth, KeyframeSet};
use geoloc::geometry::{wrap_angle, Pose2, Vec2};
use geoloc::graph::residuals::{
    association_jacobian, error_jacobian, odometry_conventional_jacobians, odometry_jacobians, prior_jacobian,
    residual_association, residual_error, residual_odometry, residual_odometry_conventional, residual_prior,
};
use geoloc::graph::{
    solve, Algorithm, AssociationFactor, ErrorTerm, FactorSet, OdometryConvention, OdometryFactor, PriorFactor,
    SolverConfig, TrajectoryState,
};
use geoloc::io;
use geoloc::simulator::{generate, BiasModel, DetectionSampling, ScenarioConfig, Segment};
use geoloc::weighting::{frame_weights, weight_association, PhiVariant, WeightConfig};
use geoloc::{DetectionSet, FrameObservation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rot(theta: f64) -> Matrix2<f64> {
    Rotation2::new(theta).into_inner()
}

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

// ------------------------------------------------------------ oracle cost

/// Layout of a flat state vector: `[theta, x, y]` per pose, then the bias
/// when the problem has error terms.
pub fn flatten(state: &TrajectoryState, with_bias: bool) -> Vec<f64> {
    let mut out: Vec<f64> = state.poses.iter().flat_map(|p| [p.theta(), p.x(), p.y()]).collect();
    if with_bias {
        out.extend([state.bias.x, state.bias.y]);
    }
    out
}

pub fn unflatten(x: &[f64], poses: usize, with_bias: bool) -> TrajectoryState {
    let mut s = TrajectoryState::new((0..poses).map(|i| Pose2::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect());
    if with_bias {
        s.bias = v(x[3 * poses], x[3 * poses + 1]);
    }
    s
}

/// Weighted objective evaluated from the written-out formulas with explicit
/// rotation matrices and Frobenius norms. `x` is a flat state.
pub fn oracle_cost(x: &[f64], poses: usize, factors: &FactorSet) -> f64 {
    let theta = |i: usize| x[3 * i];
    let t = |i: usize| v(x[3 * i + 1], x[3 * i + 2]);
    let mut cost = 0.0;
    for f in &factors.odometry {
        let (i, p) = (f.index, f.index - 1);
        let inc_r = rot(f.increment.theta());
        let (r, rot_term) = match factors.convention {
            OdometryConvention::Verbatim => {
                // previous pose seen from the current one
                let meas_t = -(inc_r.transpose() * f.increment.t);
                let meas_r = inc_r.transpose();
                let r = rot(theta(i)).transpose() * (t(p) - t(i)) - meas_t;
                (r, (rot(theta(i)).transpose() * rot(theta(p)) - meas_r).norm_squared())
            }
            OdometryConvention::Conventional => {
                let r = rot(theta(p)).transpose() * (t(i) - t(p)) - f.increment.t;
                (r, (rot(theta(p)).transpose() * rot(theta(i)) - inc_r).norm_squared())
            }
        };
        cost += f.weight * (r.norm_squared() + rot_term);
    }
    for f in &factors.priors {
        cost += f.weight * (t(f.index) - (f.gps - f.bias_obs)).norm_squared();
    }
    for f in &factors.associations {
        let r = rot(theta(f.index));
        for (d, l) in &f.pairs {
            cost += f.weight * (r * d + t(f.index) - l).norm_squared();
        }
    }
    if !factors.errors.is_empty() {
        let e = v(x[3 * poses], x[3 * poses + 1]);
        for term in &factors.errors {
            cost += term.weight * (e - (term.gps - term.frozen_position)).norm_squared();
        }
    }
    cost
}

// ------------------------------------------------------------ Nelder-Mead

/// Adaptive Nelder-Mead with restarts around the incumbent.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_evals: usize) -> Vec<f64> {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut best = x0.to_vec();
    let mut best_f = f(&best);
    let mut evals = 0usize;
    let mut step = scale;
    while evals < max_evals {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best.clone(), best_f)];
        for i in 0..n {
            let mut p = best.clone();
            p[i] += step;
            let fp = f(&p);
            simplex.push((p, fp));
        }
        evals += n;
        for _ in 0..200_000 {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let size = simplex.iter().map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
            if spread <= 1e-300 || size < 1e-11 {
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|(p, _)| p[k]).sum::<f64>() / nf).collect();
            let along = |c: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + c * (simplex[n].0[k] - centroid[k])).collect() };
            let xr = along(-alpha);
            let fr = f(&xr);
            evals += 1;
            if fr < simplex[0].1 {
                let xe = along(-alpha * beta);
                let fe = f(&xe);
                evals += 1;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-alpha * gamma);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(gamma);
                    let fc = f(&xc);
                    (xc, fc)
                };
                evals += 1;
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for (p, fp) in simplex.iter_mut().skip(1) {
                        for k in 0..n {
                            p[k] = x0[k] + delta * (p[k] - x0[k]);
                        }
                        *fp = f(p);
                    }
                    evals += n;
                }
            }
            if evals >= max_evals {
                break;
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_f - 1e-15 * best_f.abs().max(1e-300);
        if simplex[0].1 <= best_f {
            best = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !improved {
            if step < 1e-7 {
                break;
            }
            step *= 0.1;
        }
    }
    best
}

/// Largest component difference between two flat states, angles wrapped.
pub fn state_distance(a: &[f64], b: &[f64], poses: usize) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| if k < 3 * poses && k % 3 == 0 { wrap_angle(x - y).abs() } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

// ------------------------------------------------------- random problems

pub fn random_pose(rng: &mut ChaCha8Rng, span: f64) -> Pose2 {
    Pose2::new(rng.random_range(-PI..PI), rng.random_range(-span..span), rng.random_range(-span..span))
}

pub fn random_point(rng: &mut ChaCha8Rng, span: f64) -> Vec2 {
    v(rng.random_range(-span..span), rng.random_range(-span..span))
}

/// A small consistent graph: a true trajectory with perturbed measurements
/// of every factor type. Returns the factors and a perturbed initial state.
pub fn random_toy_graph(rng: &mut ChaCha8Rng, poses: usize, with_bias: bool, convention: OdometryConvention) -> (FactorSet, TrajectoryState) {
    let mut truth = vec![Pose2::new(rng.random_range(-PI..PI), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))];
    for _ in 1..poses {
        let step = Pose2::new(rng.random_range(-0.5..0.5), rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5));
        truth.push(truth.last().unwrap().compose(&step));
    }
    let mut noise = |s: f64| rng.random_range(-s..s);
    let mut factors = FactorSet { convention, ..FactorSet::default() };
    for i in 1..poses {
        let inc = truth[i - 1].between(&truth[i]);
        let noisy = Pose2::new(inc.theta() + noise(0.05), inc.x() + noise(0.1), inc.y() + noise(0.1));
        factors.odometry.push(OdometryFactor { index: i, increment: noisy, weight: 0.5 + noise(1.0).abs() * 1.5 });
    }
    let bias = if with_bias { v(noise(1.0), noise(1.0)) } else { Vec2::zeros() };
    for (i, p) in truth.iter().enumerate() {
        let gps = p.t + bias + v(noise(0.3), noise(0.3));
        let bias_obs = if with_bias { v(noise(0.5), noise(0.5)) } else { Vec2::zeros() };
        factors.priors.push(PriorFactor { index: i, gps, sigma_xy: 0.09, bias_obs, weight: 0.5 + noise(1.0).abs() });
        if i % 2 == 0 {
            let pairs: Vec<(Vec2, Vec2)> = (0..3)
                .map(|_| {
                    let d = v(noise(8.0), noise(8.0));
                    (d, p.transform_point(&d) + v(noise(0.05), noise(0.05)))
                })
                .collect();
            factors.associations.push(AssociationFactor { index: i, pairs, weight: 0.2 + noise(1.0).abs() });
        }
        if with_bias {
            let frozen = p.t + v(noise(0.2), noise(0.2));
            factors.errors.push(ErrorTerm { index: i, gps, frozen_position: frozen, weight: 0.3 + noise(1.0).abs() });
        }
    }
    let init = TrajectoryState::new(
        truth.iter().map(|p| Pose2::new(p.theta() + noise(0.1), p.x() + noise(0.3), p.y() + noise(0.3))).collect(),
    );
    (factors, init)
}

pub fn tight_solver(n: usize, algorithm: Algorithm) -> SolverConfig {
    SolverConfig {
        algorithm,
        max_iterations: 200,
        cost_tolerance: 1e-15,
        step_tolerance: 1e-15,
        window_frames: n.max(1),
        ..SolverConfig::default()
    }
}

// ------------------------------------------------- criterion 1 components

pub struct JacobianReport {
    pub points: usize,
    pub max_rel_err: f64,
}

fn rel_err(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(f64::MIN_POSITIVE)
}

/// Central differences of `f` over a flat parameter vector.
fn fd(f: &dyn Fn(&[f64]) -> DVector<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[k] += h;
        xm[k] -= h;
        j.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

fn pose_of(x: &[f64]) -> Pose2 {
    Pose2::new(x[0], x[1], x[2])
}

/// Checks every residual type's analytic Jacobian against central
/// differences (step 1e-6) at `points` random linearization points each.
pub fn check_jacobians(points: usize, seed: u64) -> JacobianReport {
    let mut rng = rng(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    // Angle residuals are discontinuous where the wrapped difference is +-pi.
    let away_from_wrap = |d: f64| wrap_angle(d).abs() < PI - 1e-2;

    while checked < points {
        let cur = random_pose(&mut rng, 30.0);
        let prev = random_pose(&mut rng, 30.0);
        let meas = random_pose(&mut rng, 3.0);
        if !away_from_wrap(prev.theta() - cur.theta() - meas.theta()) || !away_from_wrap(cur.theta() - prev.theta() - meas.theta()) {
            continue;
        }
        checked += 1;
        let x = [cur.theta(), cur.x(), cur.y(), prev.theta(), prev.x(), prev.y()];

        for conventional in [false, true] {
            let res = |x: &[f64]| {
                let (c, p) = (pose_of(&x[..3]), pose_of(&x[3..]));
                let r = if conventional { residual_odometry_conventional(&c, &p, &meas).1 } else { residual_odometry(&c, &p, &meas).1 };
                DVector::from_column_slice(r.as_slice())
            };
            let (_, jc, jp) = if conventional { odometry_conventional_jacobians(&cur, &prev, &meas) } else { odometry_jacobians(&cur, &prev, &meas) };
            let mut analytic = DMatrix::zeros(3, 6);
            analytic.view_mut((0, 0), (3, 3)).copy_from(&jc);
            analytic.view_mut((0, 3), (3, 3)).copy_from(&jp);
            worst = worst.max(rel_err(&analytic, &fd(&res, &x, h)));
        }

        let gps = random_point(&mut rng, 30.0);
        let bias_obs = random_point(&mut rng, 2.0);
        let prior = |x: &[f64]| DVector::from_column_slice(residual_prior(&pose_of(x), &gps, &bias_obs).as_slice());
        let analytic = DMatrix::from_column_slice(2, 3, prior_jacobian().as_slice());
        worst = worst.max(rel_err(&analytic, &fd(&prior, &x[..3], h)));

        let d = random_point(&mut rng, 20.0);
        let l = random_point(&mut rng, 30.0);
        let assoc = |x: &[f64]| DVector::from_column_slice(residual_association(&pose_of(x), &[(d, l)])[0].as_slice());
        let (_, ja) = association_jacobian(&cur, &d, &l);
        worst = worst.max(rel_err(&DMatrix::from_column_slice(2, 3, ja.as_slice()), &fd(&assoc, &x[..3], h)));

        let g = random_point(&mut rng, 30.0);
        let frozen = random_point(&mut rng, 30.0);
        let bias = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let err = |x: &[f64]| DVector::from_column_slice(residual_error(&v(x[0], x[1]), &[(g, frozen)])[0].as_slice());
        let je = DMatrix::from_column_slice(2, 2, error_jacobian().as_slice());
        worst = worst.max(rel_err(&je, &fd(&err, &bias, h)));
    }
    JacobianReport { points: checked, max_rel_err: worst }
}

/// Largest state distance between the solver and Nelder-Mead over
/// `trials` random graphs with `poses` poses.
pub fn brute_force_gap(trials: usize, poses: usize, with_bias: bool, algorithm: Algorithm, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let convention = if trial % 2 == 0 { OdometryConvention::Verbatim } else { OdometryConvention::Conventional };
        let (factors, init) = random_toy_graph(&mut rng, poses, with_bias, convention);
        let (solved, _) = solve(&init, &factors, &tight_solver(poses, algorithm)).expect("toy graph solves");
        let x_solver = flatten(&solved, with_bias);
        let cost = |x: &[f64]| oracle_cost(x, poses, &factors);
        let x_nm = nelder_mead(&cost, &flatten(&init, with_bias), 0.5, 4_000_000);
        worst = worst.max(state_distance(&x_solver, &x_nm, poses));
    }
    worst
}

/// Ground-truth interpolation on a 5-pose straight chain whose two
/// keyframes disagree with the odometry by 0.4 m, against the exact
/// minimizer of the reduced one-dimensional quadratic.
pub fn keyframe_chain_gap() -> f64 {
    let n = 5;
    let frames: Vec<FrameObservation> = (0..n as u64)
        .map(|i| FrameObservation {
            frame_index: i,
            odometry: if i == 0 { Pose2::identity() } else { Pose2::new(0.0, 1.0, 0.0) },
            detections: DetectionSet::new(i, Vec::new()),
            gps: None,
        })
        .collect();
    let end = 4.4;
    let keyframes = KeyframeSet::new(vec![(0, Pose2::identity()), (4, Pose2::new(0.0, end, 0.0))]).unwrap();
    let gt = interpolate_ground_truth(&frames, &keyframes, &tight_solver(n, Algorithm::LevenbergMarquardt)).unwrap();

    // sum (x_{i-1} - x_i + 1)^2 + W (x_0^2 + (x_4 - end)^2)
    let w = geoloc::evaluation::KEYFRAME_WEIGHT;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 1..n {
        // residual x_{i-1} - x_i + 1
        a[(i - 1, i - 1)] += 1.0;
        a[(i, i)] += 1.0;
        a[(i - 1, i)] -= 1.0;
        a[(i, i - 1)] -= 1.0;
        b[i - 1] -= 1.0;
        b[i] += 1.0;
    }
    a[(0, 0)] += w;
    a[(n - 1, n - 1)] += w;
    b[n - 1] += w * end;
    let exact = a.lu().solve(&b).unwrap();
    let mut gap: f64 = 0.0;
    for (i, p) in gt.poses.iter().enumerate() {
        gap = gap.max((p.x() - exact[i]).abs()).max(p.y().abs()).max(wrap_angle(p.theta()).abs());
    }
    gap
}

// ------------------------------------------------- criterion 2 components

/// Runs the weighting checks on `cases` random inputs; returns the failures.
pub fn check_weighting(cases: usize, seed: u64) -> Vec<String> {
    let mut failures = Vec::new();
    let mut rng = rng(seed);
    for variant in [PhiVariant::A, PhiVariant::B] {
        for s_max in [5.0, 30.0, 60.0, 200.0] {
            let cfg = WeightConfig::from_s_max(s_max, variant);
            if variant == PhiVariant::A {
                let mid = weight_association(cfg.lambda_a, &cfg);
                if (mid - 0.5).abs() > 1e-12 {
                    failures.push(format!("w_a(lambda_a) = {mid} for s_max {s_max}"));
                }
            } else {
                let lo = weight_association(0.0, &cfg);
                let hi = weight_association(cfg.lambda_b, &cfg);
                if (lo - 1.0 / (1.0 + 6f64.exp())).abs() > 1e-9 || (hi - 1.0 / (1.0 + (-6f64).exp())).abs() > 1e-9 {
                    failures.push(format!("variant B endpoints {lo}, {hi} for s_max {s_max}"));
                }
            }
        }
    }
    for _ in 0..cases {
        let variant = if rng.random_bool(0.5) { PhiVariant::A } else { PhiVariant::B };
        let cfg = WeightConfig::from_s_max(rng.random_range(1.0..100.0), variant);
        let s1 = rng.random_range(0.0..50.0);
        let s2 = s1 + rng.random_range(1e-6..20.0);
        let (w1, w2) = (weight_association(s1, &cfg), weight_association(s2, &cfg));
        let saturated = w1 < 1e-12 || w2 > 1.0 - 1e-12;
        if w2 < w1 || (!saturated && w2 <= w1) {
            failures.push(format!("w_a not increasing: s {s1} -> {s2} gives {w1} -> {w2}"));
        }
        let k = rng.random_range(0..200usize);
        let sigma = rng.random_range(0.0..4.0);
        let (f1, f2) = (frame_weights(s1, k, sigma, &cfg), frame_weights(s2, k, sigma, &cfg));
        if f2.w_a - f1.w_a > 4.0 * f64::EPSILON && f1.w_o <= f2.w_o {
            failures.push(format!("w_o not decreasing in w_a at k {k}: {} -> {}", f1.w_o, f2.w_o));
        }
        if !((0.0..=1.0).contains(&f1.w_a) && f1.w_o > 0.0 && f1.w_p > 0.0) {
            failures.push(format!("non-positive or out-of-range weights {f1:?}"));
        }
    }
    failures
}

// ------------------------------------------------- criterion 9 components

pub fn random_scenario_config(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut segments = vec![Segment::Straight { length: rng.random_range(8.0..25.0) }];
    for _ in 0..rng.random_range(1..4) {
        match rng.random_range(0..3) {
            0 => segments.push(Segment::Arc {
                angle: rng.random_range(0.2..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                radius: rng.random_range(12.0..40.0),
            }),
            1 => {
                segments.push(Segment::Corner {
                    angle: rng.random_range(0.5..1.6) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    fillet: rng.random_range(1.0..3.0),
                });
            }
            _ => {}
        }
        segments.push(Segment::Straight { length: rng.random_range(8.0..25.0) });
    }
    let dropout = if rng.random_bool(0.5) {
        let a = rng.random_range(0..40u64);
        vec![(a, a + rng.random_range(0..30u64))]
    } else {
        Vec::new()
    };
    ScenarioConfig {
        seed: rng.random(),
        start: Pose2::new(rng.random_range(-PI..PI), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)),
        segments,
        half_width: rng.random_range(2.0..6.0),
        frame_spacing: rng.random_range(0.4..1.5),
        sensor_range: rng.random_range(6.0..15.0),
        detection_sigma: rng.random_range(0.0..0.1),
        dropout,
        odometry_sigma_trans: rng.random_range(0.0..0.05),
        odometry_sigma_rot: rng.random_range(0.0..0.01),
        odometry_scale_error: rng.random_range(-0.02..0.02),
        gps_sigma: rng.random_range(0.0..0.5),
        bias: BiasModel { amplitude: rng.random_range(0.0..2.0), period: rng.random_range(50.0..500.0), offset: random_point(rng, 2.0) },
        gps_every: rng.random_range(1..4),
        sampling: if rng.random_bool(0.5) {
            DetectionSampling::Landmarks
        } else {
            DetectionSampling::Boundary { spacing: rng.random_range(0.3..1.0) }
        },
        resample_step: rng.random_range(0.3..1.0),
    }
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

fn pose_bits(a: &Pose2, b: &Pose2) -> bool {
    same_bits(a.theta(), b.theta()) && same_bits(a.x(), b.x()) && same_bits(a.y(), b.y())
}

fn vec_bits(a: &Vec2, b: &Vec2) -> bool {
    same_bits(a.x, b.x) && same_bits(a.y, b.y)
}

fn frames_bits(a: &[FrameObservation], b: &[FrameObservation]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.frame_index == y.frame_index
                && pose_bits(&x.odometry, &y.odometry)
                && x.detections.frame_index == y.detections.frame_index
                && x.detections.points.len() == y.detections.points.len()
                && x.detections.points.iter().zip(&y.detections.points).all(|(p, q)| vec_bits(p, q))
                && match (&x.gps, &y.gps) {
                    (None, None) => true,
                    (Some(g), Some(h)) => vec_bits(&g.position, &h.position) && same_bits(g.sigma_xy, h.sigma_xy),
                    _ => false,
                }
        })
}

/// parse(serialize(x)) == x, bit for bit, for map, sequence and ground truth
/// of `count` random scenarios. Returns the failures.
pub fn check_round_trips(count: usize, seed: u64) -> Vec<String> {
    let mut rng = rng(seed);
    let mut failures = Vec::new();
    for n in 0..count {
        let cfg = random_scenario_config(&mut rng);
        let sc = match generate(&cfg) {
            Ok(sc) => sc,
            Err(e) => {
                failures.push(format!("scenario {n}: generation failed: {e}"));
                continue;
            }
        };
        let polylines = io::parse_map_str(&io::map_to_string(sc.map.polylines()), "map").unwrap();
        let map_ok = polylines.len() == sc.map.polylines().len()
            && polylines.iter().zip(sc.map.polylines()).all(|(a, b)| {
                a.vertices().len() == b.vertices().len() && a.vertices().iter().zip(b.vertices()).all(|(p, q)| vec_bits(p, q))
            });
        let seq = io::parse_sequence_str(&io::sequence_to_string(&sc.frames), std::path::Path::new("seq")).unwrap();
        let gt = io::parse_ground_truth_str(&io::ground_truth_to_string(&sc.truth), "gt").unwrap();
        let gt_ok = gt.frame_indices == sc.truth.frame_indices
            && gt.poses.iter().zip(&sc.truth.poses).all(|(a, b)| pose_bits(a, b))
            && gt.bias.len() == sc.truth.bias.len()
            && gt.bias.iter().zip(&sc.truth.bias).all(|(a, b)| vec_bits(a, b));
        if !map_ok {
            failures.push(format!("scenario {n}: map differs after round trip"));
        }
        if !frames_bits(&seq.frames, &sc.frames) {
            failures.push(format!("scenario {n}: sequence differs after round trip"));
        }
        if !gt_ok {
            failures.push(format!("scenario {n}: ground truth differs after round trip"));
        }
    }
    failures
}

/// Two generations and two engine runs from one seed must agree bit for bit.
pub fn check_determinism(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let cfg = random_scenario_config(&mut rng);
    let a = generate(&cfg).map_err(|e| e.to_string())?;
    let b = generate(&cfg).map_err(|e| e.to_string())?;
    if !frames_bits(&a.frames, &b.frames) {
        return Err("generated streams differ".into());
    }
    let run = |sc: &geoloc::simulator::Scenario| geoloc::graph::engine::run(&sc.map, &sc.frames, Default::default()).map(|r| r.0);
    let (ta, tb) = (run(&a).map_err(|e| e.to_string())?, run(&b).map_err(|e| e.to_string())?);
    if ta.poses.len() != tb.poses.len() || !ta.poses.iter().zip(&tb.poses).all(|(p, q)| pose_bits(p, q)) || !vec_bits(&ta.bias, &tb.bias) {
        return Err("trajectories differ".into());
    }
    Ok(())
}
