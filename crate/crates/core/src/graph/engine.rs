//! Online localization: one predict / associate / weight / solve cycle per
//! frame over a sliding window of poses.

use std::time::{Duration, Instant};

use thiserror::Error;

use super::solver::solve_in_place;
use super::{
    AssociationFactor, ErrorTerm, FactorSet, OdometryConvention, OdometryFactor, PriorFactor, SolveReport, SolverConfig,
    TrajectoryState,
};
use crate::association::{register_and_associate, AssociationResult, IcpConfig, IcpOutcome, DEFAULT_ASSOCIATION_THRESHOLD};
use crate::frame::FrameObservation;
use crate::geometry::{Pose2, Vec2};
use crate::map::{LandmarkMap, DEFAULT_CROP_RADIUS};
use crate::weighting::{frame_weights, FrameWeights, WeightConfig};

/// GNSS displacement from the anchor fix needed before the heading is fixed.
pub const DEFAULT_HEADING_BASELINE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub weights: WeightConfig,
    pub solver: SolverConfig,
    pub icp: IcpConfig,
    pub association_threshold: f64,
    pub crop_radius: f64,
    /// Bias-error factors on; off is the "-e" ablation (bias pinned at 0).
    pub bias_estimation: bool,
    /// Every weight set to this constant instead of the information-driven ones.
    pub fixed_weights: Option<f64>,
    pub convention: OdometryConvention,
    pub heading_baseline: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            weights: WeightConfig::default(),
            solver: SolverConfig::default(),
            icp: IcpConfig::default(),
            association_threshold: DEFAULT_ASSOCIATION_THRESHOLD,
            crop_radius: DEFAULT_CROP_RADIUS,
            bias_estimation: true,
            fixed_weights: None,
            convention: OdometryConvention::Verbatim,
            heading_baseline: DEFAULT_HEADING_BASELINE,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("frame {got} arrived after frame {last}; frames must be strictly increasing")]
    OutOfOrder { last: u64, got: u64 },
    #[error("invalid engine config: {0}")]
    Config(String),
}

/// What happened on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub info_score: f64,
    pub pair_count: usize,
    pub weights: FrameWeights,
    /// Bias observation frozen into this frame's prior factor (zero without GPS).
    pub bias_obs: Vec2,
    /// Bias estimate after this frame's solve.
    pub bias: Vec2,
    pub gps: Option<Vec2>,
    pub icp: Option<IcpOutcome>,
    pub solve: Option<SolveReport>,
    pub step_time: Duration,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Engine<'m> {
    map: &'m LandmarkMap,
    cfg: EngineConfig,
    state: TrajectoryState,
    factors: FactorSet,
    records: Vec<FrameRecord>,
    last_frame: Option<u64>,
    /// Pose index and GNSS position of the fix that anchored the chain.
    anchor: Option<(usize, Vec2)>,
    heading_ready: bool,
}

impl<'m> Engine<'m> {
    pub fn new(map: &'m LandmarkMap, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.weights.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.solver.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        for (name, v) in [
            ("association_threshold", cfg.association_threshold),
            ("crop_radius", cfg.crop_radius),
            ("icp.match_radius", cfg.icp.match_radius),
            ("icp.epsilon", cfg.icp.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EngineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(cfg.heading_baseline >= 0.0 && cfg.heading_baseline.is_finite()) {
            return Err(EngineError::Config(format!("heading_baseline must be >= 0, got {}", cfg.heading_baseline)));
        }
        if let Some(w) = cfg.fixed_weights {
            if !(w > 0.0 && w.is_finite()) {
                return Err(EngineError::Config(format!("fixed weight must be positive, got {w}")));
            }
        }
        let factors = FactorSet {
            convention: cfg.convention,
            ..Default::default()
        };
        Ok(Self {
            map,
            cfg,
            state: TrajectoryState::default(),
            factors,
            records: Vec::new(),
            last_frame: None,
            anchor: None,
            heading_ready: false,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrajectoryState {
        &self.state
    }

    pub fn factors(&self) -> &FactorSet {
        &self.factors
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn into_parts(self) -> (TrajectoryState, FactorSet, Vec<FrameRecord>) {
        (self.state, self.factors, self.records)
    }

    /// Processes one frame and returns its record.
    pub fn step(&mut self, frame: &FrameObservation) -> Result<&FrameRecord, EngineError> {
        if let Some(last) = self.last_frame {
            if frame.frame_index <= last {
                return Err(EngineError::OutOfOrder { last, got: frame.frame_index });
            }
        }
        let started = Instant::now();
        let mut diagnostics = Vec::new();
        let index = self.state.len();

        let mut pose = match self.state.poses.last() {
            Some(prev) => prev.compose(&frame.odometry),
            None => Pose2::identity(),
        };
        let gps = frame.gps.filter(|g| g.position.iter().all(|v| v.is_finite()) && g.sigma_xy >= 0.0);
        if frame.gps.is_some() && gps.is_none() {
            diagnostics.push("ignored non-finite GPS fix".to_string());
        }

        if let Some(fix) = gps {
            if let Some((a, anchor_fix)) = self.anchor {
                let gps_disp = fix.position - anchor_fix;
                if !self.heading_ready && gps_disp.norm() >= self.cfg.heading_baseline {
                    let origin = if a < index { self.state.poses[a].t } else { pose.t };
                    let est_disp = pose.t - origin;
                    if est_disp.norm() > 1e-9 {
                        let delta = gps_disp.y.atan2(gps_disp.x) - est_disp.y.atan2(est_disp.x);
                        let rot = Pose2::from_parts(delta, origin - crate::geometry::rotation(delta) * origin);
                        for p in &mut self.state.poses {
                            *p = rot.compose(p);
                        }
                        pose = rot.compose(&pose);
                        self.heading_ready = true;
                    }
                }
            } else {
                // translate the dead-reckoned chain onto the first fix
                let shift = fix.position - pose.t;
                for p in &mut self.state.poses {
                    p.t += shift;
                }
                pose.t += shift;
                self.anchor = Some((index, fix.position));
                // a zero baseline trusts the provisional heading
                self.heading_ready = self.cfg.heading_baseline == 0.0;
            }
        }
        let (assoc, icp) = if self.heading_ready && !frame.detections.is_empty() {
            let local = self.map.crop(&pose, self.cfg.crop_radius);
            if local.is_empty() {
                diagnostics.push("no map landmarks within crop radius".to_string());
                (AssociationResult::empty(), None)
            } else {
                let (result, outcome) =
                    register_and_associate(&frame.detections, &local, &pose, &self.cfg.icp, self.cfg.association_threshold);
                if !outcome.converged() {
                    diagnostics.push(format!("icp {:?} after {} iterations", outcome.status, outcome.iterations));
                }
                (result, Some(outcome))
            }
        } else {
            (AssociationResult::empty(), None)
        };

        let s = assoc.info_score;
        let k = assoc.pair_count;
        let sigma_xy = gps.map_or(0.0, |g| g.sigma_xy);
        let weights = match self.cfg.fixed_weights {
            Some(c) => FrameWeights::fixed(c),
            None => frame_weights(s, k, sigma_xy, &self.cfg.weights),
        };

        self.state.poses.push(pose);
        if index > 0 {
            self.factors.odometry.push(OdometryFactor {
                index,
                increment: frame.odometry,
                weight: weights.w_o,
            });
        }
        let bias_obs = if self.cfg.bias_estimation { self.state.bias } else { Vec2::zeros() };
        if let Some(fix) = gps {
            self.factors.priors.push(PriorFactor {
                index,
                gps: fix.position,
                sigma_xy: fix.sigma_xy,
                bias_obs,
                weight: weights.w_p,
            });
            if self.cfg.bias_estimation && self.heading_ready {
                self.factors.errors.push(ErrorTerm {
                    index,
                    gps: fix.position,
                    frozen_position: pose.t,
                    weight: weights.w_e,
                });
                let keep = self.cfg.solver.error_window_w + 1;
                if self.factors.errors.len() > keep {
                    let excess = self.factors.errors.len() - keep;
                    self.factors.errors.drain(..excess);
                }
            }
        }
        if k > 0 {
            self.factors.associations.push(AssociationFactor {
                index,
                pairs: assoc.pairs.iter().map(|p| (p.detection, p.landmark.position)).collect(),
                weight: weights.w_a,
            });
        }

        let first_free = self.state.len().saturating_sub(self.cfg.solver.window_frames);
        let solve = match solve_in_place(&mut self.state, &self.factors, first_free, &self.cfg.solver) {
            Ok(report) => Some(report),
            Err(e) => {
                diagnostics.push(format!("solve failed: {e}"));
                None
            }
        };

        self.last_frame = Some(frame.frame_index);
        self.records.push(FrameRecord {
            frame_index: frame.frame_index,
            info_score: s,
            pair_count: k,
            weights,
            bias_obs: if gps.is_some() { bias_obs } else { Vec2::zeros() },
            bias: self.state.bias,
            gps: gps.map(|g| g.position),
            icp,
            solve,
            step_time: started.elapsed(),
            diagnostics,
        });
        Ok(self.records.last().expect("just pushed"))
    }

}

/// Runs the engine over a whole stream.
pub fn run(
    map: &LandmarkMap,
    frames: &[FrameObservation],
    cfg: EngineConfig,
) -> Result<(TrajectoryState, FactorSet, Vec<FrameRecord>), EngineError> {
    let mut engine = Engine::new(map, cfg)?;
    for frame in frames {
        engine.step(frame)?;
    }
    Ok(engine.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::DetectionSet;
    use crate::frame::GpsFix;
    use crate::map::Polyline;
    use approx::assert_abs_diff_eq;

    fn straight_map() -> LandmarkMap {
        let line = |y: f64| Polyline::new(vec![Vec2::new(-50.0, y), Vec2::new(200.0, y)]).unwrap();
        LandmarkMap::from_polylines(vec![line(-4.0), line(4.0)], 0.5).unwrap()
    }

    fn frame(i: u64, dx: f64, gps: Option<(f64, f64)>) -> FrameObservation {
        FrameObservation {
            frame_index: i,
            odometry: if i == 0 { Pose2::identity() } else { Pose2::new(0.0, dx, 0.0) },
            detections: DetectionSet::new(i, Vec::new()),
            gps: gps.map(|(x, y)| GpsFix {
                position: Vec2::new(x, y),
                sigma_xy: 0.0,
            }),
        }
    }

    #[test]
    fn frame_without_detections_follows_prior() {
        let map = straight_map();
        let mut engine = Engine::new(&map, EngineConfig::default()).unwrap();
        let rec = engine.step(&frame(0, 0.0, Some((3.0, 1.0)))).unwrap().clone();
        assert_eq!(rec.pair_count, 0);
        assert_eq!(rec.info_score, 0.0);
        let w_a = crate::weighting::weight_association(0.0, &engine.config().weights);
        assert_abs_diff_eq!(rec.weights.w_o, 2.0 - w_a, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.weights.w_p, 2.0 - w_a, epsilon = 1e-12);
        assert_abs_diff_eq!(engine.state().poses[0].t.x, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(engine.state().poses[0].t.y, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn straight_corridor_sits_at_sigmoid_floor() {
        let map = straight_map();
        let mut engine = Engine::new(&map, EngineConfig::default()).unwrap();
        for i in 0..20u64 {
            let x = i as f64 * 0.5;
            let mut f = frame(i, 0.5, Some((x, 0.0)));
            f.detections.points = (-10..=10).flat_map(|k| [Vec2::new(k as f64 * 0.5, 4.0), Vec2::new(k as f64 * 0.5, -4.0)]).collect();
            engine.step(&f).unwrap();
        }
        let rec = engine.records().last().unwrap();
        assert!(rec.pair_count > 0);
        assert_eq!(rec.info_score, 0.0);
        assert_eq!(rec.weights.w_a, crate::weighting::weight_association(0.0, &WeightConfig::default()));
    }

    #[test]
    fn heading_is_initialized_from_gps_baseline() {
        let map = straight_map();
        let mut engine = Engine::new(&map, EngineConfig::default()).unwrap();
        let heading: f64 = 0.6;
        for i in 0..30u64 {
            let s = i as f64 * 0.5;
            engine.step(&frame(i, 0.5, Some((s * heading.cos(), s * heading.sin())))).unwrap();
        }
        let last = engine.state().poses.last().unwrap();
        assert_abs_diff_eq!(last.theta(), heading, epsilon = 1e-6);
        assert_abs_diff_eq!(last.t.x, 14.5 * heading.cos(), epsilon = 1e-6);
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let map = straight_map();
        let mut engine = Engine::new(&map, EngineConfig::default()).unwrap();
        engine.step(&frame(3, 0.0, None)).unwrap();
        assert!(matches!(engine.step(&frame(3, 0.5, None)), Err(EngineError::OutOfOrder { .. })));
    }

    #[test]
    fn bias_off_pins_bias_to_zero() {
        let map = straight_map();
        let cfg = EngineConfig {
            bias_estimation: false,
            ..Default::default()
        };
        let mut engine = Engine::new(&map, cfg).unwrap();
        for i in 0..30u64 {
            let x = i as f64 * 0.5;
            engine.step(&frame(i, 0.5, Some((x + 1.0, 2.0)))).unwrap();
        }
        assert_eq!(engine.state().bias, Vec2::zeros());
        assert!(engine.factors().errors.is_empty());
    }

    #[test]
    fn error_window_is_trimmed() {
        let map = straight_map();
        let mut cfg = EngineConfig::default();
        cfg.solver.error_window_w = 4;
        let mut engine = Engine::new(&map, cfg).unwrap();
        for i in 0..40u64 {
            engine.step(&frame(i, 0.5, Some((i as f64 * 0.5, 0.0)))).unwrap();
        }
        assert_eq!(engine.factors().errors.len(), 5);
        assert_eq!(engine.factors().errors.last().unwrap().index, 39);
    }
}
