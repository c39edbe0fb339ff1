//! Trajectory metrics, keyframe-based ground-truth interpolation and the
//! prior-only reference trajectories.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::frame::{FrameObservation, GroundTruth};
use crate::geometry::{wrap_angle, Pose2, Vec2};
use crate::graph::engine::FrameRecord;
use crate::graph::{solve, FactorSet, OdometryFactor, PriorFactor, SolveError, SolverConfig, TrajectoryState};
use crate::weighting::{frame_weights, FrameWeights, WeightConfig};

/// Prior weight of a trusted keyframe during interpolation.
pub const KEYFRAME_WEIGHT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("estimate has {estimate} poses but ground truth has {truth}")]
    LengthMismatch { estimate: usize, truth: usize },
    #[error("{0}")]
    Frames(String),
    #[error("at least one keyframe is required")]
    NoKeyframes,
    #[error("keyframe indices must be strictly increasing ({prev} then {next})")]
    UnsortedKeyframes { prev: u64, next: u64 },
    #[error("keyframe at frame {0} has no matching odometry frame")]
    UnknownKeyframe(u64),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    #[default]
    Rms,
    Mean,
}

impl FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rms" => Ok(Self::Rms),
            "mean" => Ok(Self::Mean),
            other => Err(format!("unknown aggregate '{other}' (expected 'rms' or 'mean')")),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rms => "rms",
            Self::Mean => "mean",
        })
    }
}

impl Aggregate {
    pub fn apply(&self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        let n = values.len() as f64;
        match self {
            Self::Rms => (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            Self::Mean => values.iter().map(|v| v.abs()).sum::<f64>() / n,
        }
    }
}

pub fn rms(values: &[f64]) -> f64 {
    Aggregate::Rms.apply(values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub frame: u64,
    pub trans_err: f64,
    /// Degrees.
    pub rot_err: f64,
    pub s: f64,
    pub w_a: f64,
    pub w_o: f64,
    pub w_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub trans_error: f64,
    /// Degrees.
    pub rot_error: f64,
    pub aggregate: Aggregate,
    pub per_frame: Vec<FrameError>,
}

impl AteResult {
    pub fn trans_errors(&self) -> Vec<f64> {
        self.per_frame.iter().map(|f| f.trans_err).collect()
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        format!(
            "aggregate={}\nframes={}\nate_trans_m={:.9}\nate_rot_deg={:.9}\nmax_trans_m={:.9}\n",
            self.aggregate,
            self.per_frame.len(),
            self.trans_error,
            self.rot_error,
            self.per_frame.iter().map(|f| f.trans_err).fold(0.0, f64::max),
        )
    }
}

impl AteResult {
    /// Fills the score and weight columns from `(s, weights)` per frame.
    pub fn with_scores(mut self, scores: &[(f64, FrameWeights)]) -> Result<Self, EvalError> {
        if scores.len() != self.per_frame.len() {
            return Err(EvalError::Frames(format!("{} score rows for {} frames", scores.len(), self.per_frame.len())));
        }
        for (f, (s, w)) in self.per_frame.iter_mut().zip(scores) {
            f.s = *s;
            f.w_a = w.w_a;
            f.w_o = w.w_o;
            f.w_p = w.w_p;
        }
        Ok(self)
    }
}

/// Per-frame errors without alignment, aggregated as RMS.
pub fn compute_ate(estimate: &TrajectoryState, truth: &GroundTruth) -> Result<AteResult, EvalError> {
    compute_ate_with(&estimate.poses, truth, None, Aggregate::Rms)
}

/// Per-frame errors with the engine's scores and weights attached when
/// `records` is given.
pub fn compute_ate_with(
    estimate: &[Pose2],
    truth: &GroundTruth,
    records: Option<&[FrameRecord]>,
    aggregate: Aggregate,
) -> Result<AteResult, EvalError> {
    if estimate.len() != truth.poses.len() {
        return Err(EvalError::LengthMismatch {
            estimate: estimate.len(),
            truth: truth.poses.len(),
        });
    }
    if let Some(r) = records {
        if r.len() != estimate.len() {
            return Err(EvalError::Frames(format!("{} frame records for {} poses", r.len(), estimate.len())));
        }
    }
    let per_frame: Vec<FrameError> = estimate
        .iter()
        .zip(&truth.poses)
        .enumerate()
        .map(|(i, (e, t))| {
            let rec = records.map(|r| &r[i]);
            FrameError {
                frame: truth.frame_indices.get(i).copied().unwrap_or(i as u64),
                trans_err: (e.t - t.t).norm(),
                rot_err: wrap_angle(e.theta() - t.theta()).abs().to_degrees(),
                s: rec.map_or(0.0, |r| r.info_score),
                w_a: rec.map_or(0.0, |r| r.weights.w_a),
                w_o: rec.map_or(0.0, |r| r.weights.w_o),
                w_p: rec.map_or(0.0, |r| r.weights.w_p),
            }
        })
        .collect();
    let trans: Vec<f64> = per_frame.iter().map(|f| f.trans_err).collect();
    let rot: Vec<f64> = per_frame.iter().map(|f| f.rot_err).collect();
    Ok(AteResult {
        trans_error: aggregate.apply(&trans),
        rot_error: aggregate.apply(&rot),
        aggregate,
        per_frame,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyframeSet {
    keyframes: Vec<(u64, Pose2)>,
}

impl KeyframeSet {
    pub fn new(keyframes: Vec<(u64, Pose2)>) -> Result<Self, EvalError> {
        if keyframes.is_empty() {
            return Err(EvalError::NoKeyframes);
        }
        for w in keyframes.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(EvalError::UnsortedKeyframes { prev: w[0].0, next: w[1].0 });
            }
        }
        Ok(Self { keyframes })
    }

    pub fn keyframes(&self) -> &[(u64, Pose2)] {
        &self.keyframes
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }
}

/// Dead-reckons the whole stream from pose `anchor_pose` at position `anchor`.
fn dead_reckon(frames: &[FrameObservation], anchor: usize, anchor_pose: Pose2) -> Vec<Pose2> {
    let mut poses = vec![Pose2::identity(); frames.len()];
    poses[anchor] = anchor_pose;
    for i in anchor + 1..frames.len() {
        poses[i] = poses[i - 1].compose(&frames[i].odometry);
    }
    for i in (0..anchor).rev() {
        poses[i] = poses[i + 1].compose(&frames[i + 1].odometry.inverse());
    }
    poses
}

fn batch_config(frames: usize, base: &SolverConfig) -> SolverConfig {
    SolverConfig {
        window_frames: frames.max(1),
        max_iterations: base.max_iterations.max(100),
        ..*base
    }
}

/// Full-batch trajectory from unit-weight odometry and heavily weighted
/// position priors at the trusted keyframes.
pub fn interpolate_ground_truth(
    frames: &[FrameObservation],
    keyframes: &KeyframeSet,
    cfg: &SolverConfig,
) -> Result<GroundTruth, EvalError> {
    if keyframes.is_empty() {
        return Err(EvalError::NoKeyframes);
    }
    if frames.is_empty() {
        return Err(EvalError::Frames("odometry stream is empty".into()));
    }
    let position = |frame: u64| {
        frames
            .binary_search_by_key(&frame, |f| f.frame_index)
            .map_err(|_| EvalError::UnknownKeyframe(frame))
    };
    let (first_frame, first_pose) = keyframes.keyframes()[0];
    let init = dead_reckon(frames, position(first_frame)?, first_pose);

    let mut factors = FactorSet {
        odometry: (1..frames.len())
            .map(|i| OdometryFactor {
                index: i,
                increment: frames[i].odometry,
                weight: 1.0,
            })
            .collect(),
        ..FactorSet::default()
    };
    for &(frame, pose) in keyframes.keyframes() {
        factors.priors.push(PriorFactor {
            index: position(frame)?,
            gps: pose.t,
            sigma_xy: 0.0,
            bias_obs: Vec2::zeros(),
            weight: KEYFRAME_WEIGHT,
        });
    }
    let (state, _) = solve(&TrajectoryState::new(init), &factors, &batch_config(frames.len(), cfg))?;
    Ok(GroundTruth {
        frame_indices: frames.iter().map(|f| f.frame_index).collect(),
        poses: state.poses,
        bias: Vec::new(),
    })
}

/// Odometry + GNSS-prior trajectory with per-frame weights `(w_o, w_p)` and
/// bias observations, solved in batch from `init`.
pub fn prior_trajectory(
    frames: &[FrameObservation],
    init: &[Pose2],
    weights: &[(f64, f64)],
    bias_obs: &[Vec2],
    cfg: &SolverConfig,
) -> Result<Vec<Pose2>, EvalError> {
    if init.len() != frames.len() || weights.len() != frames.len() || bias_obs.len() != frames.len() {
        return Err(EvalError::Frames("prior inputs must have one entry per frame".into()));
    }
    let mut factors = FactorSet::default();
    for (i, f) in frames.iter().enumerate() {
        if i > 0 {
            factors.odometry.push(OdometryFactor {
                index: i,
                increment: f.odometry,
                weight: weights[i].0,
            });
        }
        if let Some(g) = f.gps {
            factors.priors.push(PriorFactor {
                index: i,
                gps: g.position,
                sigma_xy: g.sigma_xy,
                bias_obs: bias_obs[i],
                weight: weights[i].1,
            });
        }
    }
    let (state, _) = solve(&TrajectoryState::new(init.to_vec()), &factors, &batch_config(frames.len(), cfg))?;
    Ok(state.poses)
}

/// The prior trajectory corrected by the engine's own frozen bias
/// observations, with the engine's odometry and prior weights: what the
/// method falls back on when associations carry no weight.
pub fn corrected_prior(
    frames: &[FrameObservation],
    records: &[FrameRecord],
    init: &[Pose2],
    cfg: &SolverConfig,
) -> Result<Vec<Pose2>, EvalError> {
    if records.len() != frames.len() {
        return Err(EvalError::Frames(format!("{} frame records for {} frames", records.len(), frames.len())));
    }
    let weights: Vec<(f64, f64)> = records.iter().map(|r| (r.weights.w_o, r.weights.w_p)).collect();
    let bias: Vec<Vec2> = records.iter().map(|r| r.bias_obs).collect();
    prior_trajectory(frames, init, &weights, &bias, cfg)
}

/// Uncorrected prior: no bias correction and the no-association weights.
pub fn raw_prior(
    frames: &[FrameObservation],
    init: &[Pose2],
    weights: &WeightConfig,
    cfg: &SolverConfig,
) -> Result<Vec<Pose2>, EvalError> {
    let w: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| {
            let fw = frame_weights(0.0, 0, f.gps.map_or(0.0, |g| g.sigma_xy), weights);
            (fw.w_o, fw.w_p)
        })
        .collect();
    prior_trajectory(frames, init, &w, &vec![Vec2::zeros(); frames.len()], cfg)
}

/// Translation error of each pose against the truth.
pub fn translation_errors(estimate: &[Pose2], truth: &[Pose2]) -> Vec<f64> {
    estimate.iter().zip(truth).map(|(e, t)| (e.t - t.t).norm()).collect()
}
