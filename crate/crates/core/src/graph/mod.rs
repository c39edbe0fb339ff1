//! Weighted factor graph over the trajectory and the GNSS bias.
//!
//! The objective is the weighted sum of squared odometry, prior, association
//! and bias-error residuals. [`solve`] minimizes it in batch;
//! [`engine::Engine`] runs the per-frame online cycle with a sliding window.

pub mod engine;
pub mod residuals;
pub mod solver;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{Pose2, RelativePose2, Vec2};

pub use solver::{solve, solve_window, SolveReport};

pub const DEFAULT_WINDOW_FRAMES: usize = 100;
pub const DEFAULT_ERROR_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryState {
    pub poses: Vec<Pose2>,
    /// GNSS bias estimate `e = (e_x, e_y)`.
    pub bias: Vec2,
}

impl TrajectoryState {
    pub fn new(poses: Vec<Pose2>) -> Self {
        Self { poses, bias: Vec2::zeros() }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Direction convention of the odometry translation residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OdometryConvention {
    /// `R_i^T (t_{i-1} - t_i)` against the previous pose seen from frame `i`.
    #[default]
    Verbatim,
    /// `R_{i-1}^T (t_i - t_{i-1})` against the forward increment.
    Conventional,
}

/// Links pose `index - 1` to pose `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryFactor {
    pub index: usize,
    /// Forward motion from the previous frame, in the previous vehicle frame.
    pub increment: RelativePose2,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorFactor {
    pub index: usize,
    pub gps: Vec2,
    pub sigma_xy: f64,
    /// Bias estimate frozen when the factor was created.
    pub bias_obs: Vec2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationFactor {
    pub index: usize,
    /// (detection in vehicle frame, landmark position in map frame).
    pub pairs: Vec<(Vec2, Vec2)>,
    pub weight: f64,
}

/// One entry of the bias-estimation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTerm {
    pub index: usize,
    pub gps: Vec2,
    /// Position estimate frozen when the term was created.
    pub frozen_position: Vec2,
    pub weight: f64,
}

/// All factors of a problem. The per-pose lists must be sorted by `index`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorSet {
    pub odometry: Vec<OdometryFactor>,
    pub priors: Vec<PriorFactor>,
    pub associations: Vec<AssociationFactor>,
    /// Active bias window. Empty means the bias is not estimated.
    pub errors: Vec<ErrorTerm>,
    pub convention: OdometryConvention,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("{kind} factor references pose {index} but the state has {poses} poses")]
    MissingPose { kind: &'static str, index: usize, poses: usize },
    #[error("odometry factor at pose 0 has no previous pose")]
    OdometryAtOrigin,
    #[error("{kind} factor at pose {index} has invalid weight {weight}")]
    BadWeight { kind: &'static str, index: usize, weight: f64 },
    #[error("{kind} factors are not sorted by pose index")]
    Unsorted { kind: &'static str },
}

impl FactorSet {
    pub fn is_empty(&self) -> bool {
        self.odometry.is_empty() && self.priors.is_empty() && self.associations.is_empty() && self.errors.is_empty()
    }

    pub fn validate(&self, poses: usize) -> Result<(), FactorError> {
        fn check<T>(kind: &'static str, items: &[T], poses: usize, index: impl Fn(&T) -> usize, weight: impl Fn(&T) -> f64) -> Result<(), FactorError> {
            let mut last = 0;
            for item in items {
                let (i, w) = (index(item), weight(item));
                if i >= poses {
                    return Err(FactorError::MissingPose { kind, index: i, poses });
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(FactorError::BadWeight { kind, index: i, weight: w });
                }
                if i < last {
                    return Err(FactorError::Unsorted { kind });
                }
                last = i;
            }
            Ok(())
        }
        check("odometry", &self.odometry, poses, |f| f.index, |f| f.weight)?;
        if self.odometry.first().is_some_and(|f| f.index == 0) {
            return Err(FactorError::OdometryAtOrigin);
        }
        check("prior", &self.priors, poses, |f| f.index, |f| f.weight)?;
        check("association", &self.associations, poses, |f| f.index, |f| f.weight)?;
        for e in &self.errors {
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(FactorError::BadWeight { kind: "error", index: e.index, weight: e.weight });
            }
        }
        Ok(())
    }

    /// Multiplies every weight by `factor`.
    pub fn scale_weights(&mut self, factor: f64) {
        self.odometry.iter_mut().for_each(|f| f.weight *= factor);
        self.priors.iter_mut().for_each(|f| f.weight *= factor);
        self.associations.iter_mut().for_each(|f| f.weight *= factor);
        self.errors.iter_mut().for_each(|f| f.weight *= factor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    GaussNewton,
    #[default]
    LevenbergMarquardt,
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gn" | "gauss-newton" | "gaussnewton" => Ok(Self::GaussNewton),
            "lm" | "levenberg-marquardt" | "levenbergmarquardt" => Ok(Self::LevenbergMarquardt),
            other => Err(format!("unknown solver algorithm '{other}' (expected 'gn' or 'lm')")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GaussNewton => "gn",
            Self::LevenbergMarquardt => "lm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iterations: usize,
    /// Stop when the relative cost decrease drops below this.
    pub cost_tolerance: f64,
    /// Stop when the step norm drops below this (relative to the state norm).
    pub step_tolerance: f64,
    pub lm_initial_damping: f64,
    /// Trailing poses optimized per online step; older poses are constants.
    pub window_frames: usize,
    /// Number of past GNSS fixes (besides the current one) in the bias window.
    pub error_window_w: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LevenbergMarquardt,
            max_iterations: 50,
            cost_tolerance: 1e-10,
            step_tolerance: 1e-10,
            lm_initial_damping: 1e-4,
            window_frames: DEFAULT_WINDOW_FRAMES,
            error_window_w: DEFAULT_ERROR_WINDOW,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("nothing to optimize: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("normal equations singular even with damping; underconstrained: {}", .variables.join(", "))]
    Singular { variables: Vec<String> },
    #[error("non-finite cost encountered")]
    NonFinite,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        for (name, v) in [
            ("cost_tolerance", self.cost_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("lm_initial_damping", self.lm_initial_damping),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolveError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.window_frames == 0 {
            return Err(SolveError::Config("window_frames must be at least 1".into()));
        }
        Ok(())
    }
}
