//! Gauss-Newton / Levenberg-Marquardt over the weighted factor graph.
//!
//! Odometry factors only link consecutive poses and every other factor
//! touches a single pose, so the pose block of the normal equations is block
//! tridiagonal with 3x3 blocks. Bias-error residuals use frozen positions and
//! prior residuals use frozen bias observations, so the bias block never
//! couples to the poses and is solved as its own 2x2 system.

use nalgebra::{Cholesky, Matrix2, Matrix3, Vector2, Vector3, U3};

use super::residuals::{
    association_jacobian, odometry_conventional_jacobians, odometry_jacobians, prior_jacobian, residual_prior,
};
use super::{
    Algorithm, AssociationFactor, ErrorTerm, FactorSet, OdometryConvention, OdometryFactor, PriorFactor, SolveError,
    SolverConfig, TrajectoryState,
};
use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted iterations.
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl SolveReport {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        format!(
            "initial_cost={:.12e}\nfinal_cost={:.12e}\niterations={}\nconverged={}\n",
            self.initial_cost, self.final_cost, self.iterations, self.converged
        )
    }
}

/// Batch solve over every pose and (when error terms exist) the bias.
pub fn solve(state: &TrajectoryState, factors: &FactorSet, cfg: &SolverConfig) -> Result<(TrajectoryState, SolveReport), SolveError> {
    solve_window(state, factors, 0, cfg)
}

/// Solve with poses before `first_free` held constant.
pub fn solve_window(
    state: &TrajectoryState,
    factors: &FactorSet,
    first_free: usize,
    cfg: &SolverConfig,
) -> Result<(TrajectoryState, SolveReport), SolveError> {
    let mut out = state.clone();
    let report = solve_in_place(&mut out, factors, first_free, cfg)?;
    Ok((out, report))
}

pub(crate) fn solve_in_place(
    state: &mut TrajectoryState,
    factors: &FactorSet,
    first_free: usize,
    cfg: &SolverConfig,
) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    factors.validate(state.len())?;
    if factors.is_empty() {
        return Err(SolveError::Empty("no factors"));
    }
    let problem = Problem::new(factors, first_free.min(state.len()), state.len());
    if problem.free_poses == 0 && !problem.bias_free {
        return Err(SolveError::Empty("no free variables"));
    }
    match cfg.algorithm {
        Algorithm::LevenbergMarquardt => problem.levenberg_marquardt(state, cfg),
        Algorithm::GaussNewton => problem.gauss_newton(state, cfg),
    }
}

/// Weighted total cost of every factor touching a pose at or after
/// `first_free` (plus the bias window).
pub fn total_cost(state: &TrajectoryState, factors: &FactorSet, first_free: usize) -> f64 {
    Problem::new(factors, first_free, state.len()).cost(state)
}

struct Problem<'a> {
    first_free: usize,
    free_poses: usize,
    bias_free: bool,
    convention: OdometryConvention,
    odometry: &'a [OdometryFactor],
    priors: &'a [PriorFactor],
    associations: &'a [AssociationFactor],
    errors: &'a [ErrorTerm],
}

struct NormalEquations {
    diag: Vec<Matrix3<f64>>,
    /// `upper[k]` couples free pose `k` to `k + 1`.
    upper: Vec<Matrix3<f64>>,
    grad: Vec<Vector3<f64>>,
    bias_h: Matrix2<f64>,
    bias_g: Vector2<f64>,
}

struct Step {
    poses: Vec<Vector3<f64>>,
    bias: Vector2<f64>,
}

impl Step {
    fn norm(&self) -> f64 {
        (self.poses.iter().map(|v| v.norm_squared()).sum::<f64>() + self.bias.norm_squared()).sqrt()
    }
}

impl<'a> Problem<'a> {
    fn new(factors: &'a FactorSet, first_free: usize, poses: usize) -> Self {
        Self {
            first_free,
            free_poses: poses.saturating_sub(first_free),
            bias_free: !factors.errors.is_empty(),
            convention: factors.convention,
            odometry: &factors.odometry[factors.odometry.partition_point(|f| f.index < first_free)..],
            priors: &factors.priors[factors.priors.partition_point(|f| f.index < first_free)..],
            associations: &factors.associations[factors.associations.partition_point(|f| f.index < first_free)..],
            errors: &factors.errors,
        }
    }

    fn odometry_eval(&self, state: &TrajectoryState, f: &OdometryFactor) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
        let (cur, prev) = (&state.poses[f.index], &state.poses[f.index - 1]);
        match self.convention {
            OdometryConvention::Verbatim => odometry_jacobians(cur, prev, &f.increment.inverse()),
            OdometryConvention::Conventional => odometry_conventional_jacobians(cur, prev, &f.increment),
        }
    }

    fn cost(&self, state: &TrajectoryState) -> f64 {
        let mut total = 0.0;
        for f in self.odometry {
            total += f.weight * self.odometry_eval(state, f).0.norm_squared();
        }
        for f in self.priors {
            total += f.weight * residual_prior(&state.poses[f.index], &f.gps, &f.bias_obs).norm_squared();
        }
        for f in self.associations {
            let pose = &state.poses[f.index];
            let r = pose.rotation();
            let sum: f64 = f.pairs.iter().map(|(d, l)| (r * d + pose.t - l).norm_squared()).sum();
            total += f.weight * sum;
        }
        for e in self.errors {
            total += e.weight * (state.bias - (e.gps - e.frozen_position)).norm_squared();
        }
        total
    }

    fn linearize(&self, state: &TrajectoryState) -> NormalEquations {
        let m = self.free_poses;
        let mut ne = NormalEquations {
            diag: vec![Matrix3::zeros(); m],
            upper: vec![Matrix3::zeros(); m.saturating_sub(1)],
            grad: vec![Vector3::zeros(); m],
            bias_h: Matrix2::zeros(),
            bias_g: Vector2::zeros(),
        };
        let local = |i: usize| i.checked_sub(self.first_free);

        for f in self.odometry {
            let (r, jc, jp) = self.odometry_eval(state, f);
            let w = f.weight;
            let (ci, pi) = (local(f.index), local(f.index - 1));
            if let Some(c) = ci {
                ne.diag[c] += w * jc.transpose() * jc;
                ne.grad[c] += w * jc.transpose() * r;
            }
            if let Some(p) = pi {
                ne.diag[p] += w * jp.transpose() * jp;
                ne.grad[p] += w * jp.transpose() * r;
                ne.upper[p] += w * jp.transpose() * jc;
            }
        }
        let jp = prior_jacobian();
        for f in self.priors {
            let c = f.index - self.first_free;
            let r = residual_prior(&state.poses[f.index], &f.gps, &f.bias_obs);
            ne.diag[c] += f.weight * jp.transpose() * jp;
            ne.grad[c] += f.weight * jp.transpose() * r;
        }
        for f in self.associations {
            let c = f.index - self.first_free;
            let pose = &state.poses[f.index];
            let (mut h, mut g) = (Matrix3::zeros(), Vector3::zeros());
            for (d, l) in &f.pairs {
                let (r, j) = association_jacobian(pose, d, l);
                h += j.transpose() * j;
                g += j.transpose() * r;
            }
            ne.diag[c] += f.weight * h;
            ne.grad[c] += f.weight * g;
        }
        for e in self.errors {
            let r = state.bias - (e.gps - e.frozen_position);
            ne.bias_h += e.weight * Matrix2::identity();
            ne.bias_g += e.weight * r;
        }
        ne
    }

    /// Solves `(H + lambda D) step = -g`, with `D` the diagonal of `H`
    /// floored relative to its largest entry.
    fn solve_step(&self, ne: &NormalEquations, lambda: f64) -> Result<Step, Vec<String>> {
        let max_diag = ne
            .diag
            .iter()
            .flat_map(|d| (0..3).map(move |k| d[(k, k)]))
            .fold(0.0f64, f64::max);
        let floor = (1e-9 * max_diag).max(1e-12);
        let damp3 = |d: &Matrix3<f64>| {
            let mut out = *d;
            if lambda > 0.0 {
                for k in 0..3 {
                    out[(k, k)] += lambda * d[(k, k)].max(floor);
                }
            }
            out
        };

        let mut failed = Vec::new();
        let m = self.free_poses;
        let mut poses = vec![Vector3::zeros(); m];
        if m > 0 {
            let mut chol: Vec<Cholesky<f64, U3>> = Vec::with_capacity(m);
            let mut y: Vec<Vector3<f64>> = Vec::with_capacity(m);
            for k in 0..m {
                let mut s = damp3(&ne.diag[k]);
                let mut b = -ne.grad[k];
                if k > 0 {
                    let bt = ne.upper[k - 1].transpose();
                    let prev = &chol[k - 1];
                    s -= bt * prev.solve(&ne.upper[k - 1]);
                    b -= bt * prev.solve(&y[k - 1]);
                }
                match Cholesky::new(s) {
                    Some(c) if s.iter().all(|v| v.is_finite()) => chol.push(c),
                    _ => {
                        failed.push(format!("pose {}", self.first_free + k));
                        // keep going with an identity block to report every failure
                        chol.push(Cholesky::new(Matrix3::identity()).expect("identity is SPD"));
                    }
                }
                y.push(b);
            }
            if failed.is_empty() {
                poses[m - 1] = chol[m - 1].solve(&y[m - 1]);
                for k in (0..m - 1).rev() {
                    poses[k] = chol[k].solve(&(y[k] - ne.upper[k] * poses[k + 1]));
                }
            }
        }

        let mut bias = Vector2::zeros();
        if self.bias_free {
            let mut h = ne.bias_h;
            if lambda > 0.0 {
                for k in 0..2 {
                    h[(k, k)] += lambda * h[(k, k)].max(1e-300);
                }
            }
            match Cholesky::new(h) {
                Some(c) => bias = c.solve(&(-ne.bias_g)),
                None => failed.push("bias".to_string()),
            }
        }
        if !failed.is_empty() || poses.iter().any(|v| !v.iter().all(|x| x.is_finite())) || !bias.iter().all(|x| x.is_finite()) {
            if failed.is_empty() {
                failed.push("non-finite step".to_string());
            }
            return Err(failed);
        }
        Ok(Step { poses, bias })
    }

    fn apply(&self, state: &TrajectoryState, step: &Step, scale: f64) -> TrajectoryState {
        let mut out = state.clone();
        for (k, d) in step.poses.iter().enumerate() {
            let p = &mut out.poses[self.first_free + k];
            *p = Pose2::from_parts(p.theta() + scale * d[0], p.t + scale * Vec2::new(d[1], d[2]));
        }
        if self.bias_free {
            out.bias += scale * step.bias;
        }
        out
    }

    fn state_norm(&self, state: &TrajectoryState) -> f64 {
        let poses: f64 = state.poses[self.first_free..]
            .iter()
            .map(|p| p.theta() * p.theta() + p.t.norm_squared())
            .sum();
        (poses + state.bias.norm_squared()).sqrt()
    }

    fn levenberg_marquardt(&self, state: &mut TrajectoryState, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
        let mut cost = self.cost(state);
        if !cost.is_finite() {
            return Err(SolveError::NonFinite);
        }
        let mut report = SolveReport {
            initial_cost: cost,
            final_cost: cost,
            iterations: 0,
            converged: false,
            cost_history: vec![cost],
        };
        if cost == 0.0 {
            report.converged = true;
            return Ok(report);
        }
        let mut lambda = cfg.lm_initial_damping;
        'outer: while report.iterations < cfg.max_iterations {
            let ne = self.linearize(state);
            loop {
                let step = match self.solve_step(&ne, lambda) {
                    Ok(s) => s,
                    Err(vars) => {
                        lambda *= 10.0;
                        if lambda > 1e16 {
                            return Err(SolveError::Singular { variables: vars });
                        }
                        continue;
                    }
                };
                let candidate = self.apply(state, &step, 1.0);
                let new_cost = self.cost(&candidate);
                if new_cost.is_finite() && new_cost <= cost {
                    // equal-cost steps still refine the state below the cost resolution
                    let decrease = cost - new_cost;
                    let small_step = step.norm() <= cfg.step_tolerance * (self.state_norm(state) + cfg.step_tolerance);
                    *state = candidate;
                    cost = new_cost;
                    report.iterations += 1;
                    report.cost_history.push(cost);
                    lambda = (lambda * 0.1).max(1e-12);
                    if decrease <= cfg.cost_tolerance * (cost + decrease) || small_step || cost == 0.0 {
                        report.converged = true;
                        break 'outer;
                    }
                    break;
                }
                if step.norm() <= cfg.step_tolerance * (self.state_norm(state) + cfg.step_tolerance) {
                    // no descent left at this resolution
                    report.converged = true;
                    break 'outer;
                }
                lambda *= 10.0;
                if lambda > 1e16 {
                    report.converged = true;
                    break 'outer;
                }
            }
        }
        report.final_cost = cost;
        Ok(report)
    }

    fn gauss_newton(&self, state: &mut TrajectoryState, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
        let mut cost = self.cost(state);
        if !cost.is_finite() {
            return Err(SolveError::NonFinite);
        }
        let mut report = SolveReport {
            initial_cost: cost,
            final_cost: cost,
            iterations: 0,
            converged: false,
            cost_history: vec![cost],
        };
        if cost == 0.0 {
            report.converged = true;
            return Ok(report);
        }
        while report.iterations < cfg.max_iterations {
            let ne = self.linearize(state);
            let step = match self.solve_step(&ne, 0.0) {
                Ok(s) => s,
                Err(_) => self
                    .solve_step(&ne, 1e-6)
                    .map_err(|variables| SolveError::Singular { variables })?,
            };
            // backtrack so the returned iterates never increase the cost
            let mut scale = 1.0;
            let mut accepted = None;
            while scale >= 1.0 / 1024.0 {
                let candidate = self.apply(state, &step, scale);
                let new_cost = self.cost(&candidate);
                if new_cost.is_finite() && new_cost < cost {
                    accepted = Some((candidate, new_cost));
                    break;
                }
                scale *= 0.5;
            }
            let Some((candidate, new_cost)) = accepted else {
                report.converged = true;
                break;
            };
            let decrease = cost - new_cost;
            let small_step = scale * step.norm() <= cfg.step_tolerance * (self.state_norm(state) + cfg.step_tolerance);
            *state = candidate;
            cost = new_cost;
            report.iterations += 1;
            report.cost_history.push(cost);
            if decrease <= cfg.cost_tolerance * (cost + decrease) || small_step || cost == 0.0 {
                report.converged = true;
                break;
            }
        }
        report.final_cost = cost;
        Ok(report)
    }
}
