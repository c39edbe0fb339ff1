//! Data association: point-to-point ICP of a frame's detections against the
//! local map, nearest-landmark pairing under a distance threshold, and the
//! raw information score (sum of differential angles over the pairs).

use crate::geometry::{Pose2, Vec2};
use crate::map::{Landmark, LocalMap};
use crate::spatial::GridIndex;

pub const DEFAULT_ASSOCIATION_THRESHOLD: f64 = 1.0;

/// One frame's detections, in the vehicle frame. May be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub frame_index: u64,
    pub points: Vec<Vec2>,
}

impl DetectionSet {
    pub fn new(frame_index: u64, points: Vec<Vec2>) -> Self {
        Self { frame_index, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    /// Nearest-neighbor gate used while registering.
    pub match_radius: f64,
    pub max_iterations: usize,
    /// Stop once the mean squared pair distance improves by less than this (m^2).
    pub epsilon: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            match_radius: 2.0,
            max_iterations: 30,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcpStatus {
    Converged,
    MaxIterations,
    /// No detection matched any landmark; the initial guess is returned.
    NoMatches,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOutcome {
    pub pose: Pose2,
    pub status: IcpStatus,
    pub iterations: usize,
    /// Mean squared pair distance after the last update.
    pub mse: f64,
}

impl IcpOutcome {
    pub fn converged(&self) -> bool {
        self.status == IcpStatus::Converged
    }
}

/// Associated (detection, landmark) pair. `landmark_index` is the position of
/// the landmark in the local map it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub detection: Vec2,
    pub landmark: Landmark,
    pub landmark_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    pub pairs: Vec<Pair>,
    /// Correction that maps initial-guess-projected detections onto the map.
    pub icp_transform: Pose2,
    /// Sum of `alpha` over the paired landmarks.
    pub info_score: f64,
    pub pair_count: usize,
}

impl AssociationResult {
    pub fn empty() -> Self {
        Self {
            pairs: Vec::new(),
            icp_transform: Pose2::identity(),
            info_score: 0.0,
            pair_count: 0,
        }
    }
}

/// Raw information score: the differential angles of the paired landmarks,
/// summed with multiplicity.
pub fn info_score(pairs: &[Pair]) -> f64 {
    pairs.iter().map(|p| p.landmark.alpha).sum()
}

/// Local map positions plus a grid index, reused across ICP and pairing.
pub struct LocalIndex<'a> {
    map: &'a LocalMap,
    positions: Vec<Vec2>,
    grid: GridIndex,
}

impl<'a> LocalIndex<'a> {
    pub fn new(map: &'a LocalMap, cell: f64) -> Self {
        let positions = map.positions();
        let grid = GridIndex::new(&positions, cell.max(1e-3));
        Self { map, positions, grid }
    }

    fn nearest(&self, p: &Vec2, radius: f64) -> Option<(usize, f64)> {
        self.grid.nearest(&self.positions, p, radius)
    }

    /// Pairs each detection, projected through `pose`, with its nearest
    /// landmark when within `threshold`.
    pub fn associate(&self, detections: &DetectionSet, pose: &Pose2, threshold: f64) -> AssociationResult {
        let pairs: Vec<Pair> = detections
            .points
            .iter()
            .filter_map(|d| {
                self.nearest(&pose.transform_point(d), threshold).map(|(i, _)| Pair {
                    detection: *d,
                    landmark: self.map.landmarks[i],
                    landmark_index: i,
                })
            })
            .collect();
        AssociationResult {
            info_score: info_score(&pairs),
            pair_count: pairs.len(),
            pairs,
            icp_transform: Pose2::identity(),
        }
    }

    pub fn register(&self, detections: &DetectionSet, initial_guess: &Pose2, cfg: &IcpConfig) -> IcpOutcome {
        let unmatched = IcpOutcome {
            pose: *initial_guess,
            status: IcpStatus::NoMatches,
            iterations: 0,
            mse: f64::INFINITY,
        };
        if detections.is_empty() || self.positions.is_empty() {
            return unmatched;
        }
        let mut pose = *initial_guess;
        let mut src: Vec<Vec2> = Vec::with_capacity(detections.points.len());
        let mut dst: Vec<Vec2> = Vec::with_capacity(detections.points.len());
        let mut mse = f64::INFINITY;
        for iteration in 1..=cfg.max_iterations {
            src.clear();
            dst.clear();
            for d in &detections.points {
                let p = pose.transform_point(d);
                if let Some((i, _)) = self.nearest(&p, cfg.match_radius) {
                    src.push(p);
                    dst.push(self.positions[i]);
                }
            }
            if src.is_empty() {
                return IcpOutcome { iterations: iteration, ..unmatched };
            }
            let before = mean_sq_distance(&src, &dst, &Pose2::identity());
            let step = align_points(&src, &dst);
            pose = step.compose(&pose);
            mse = mean_sq_distance(&src, &dst, &step);
            if before - mse < cfg.epsilon {
                return IcpOutcome {
                    pose,
                    status: IcpStatus::Converged,
                    iterations: iteration,
                    mse,
                };
            }
        }
        IcpOutcome {
            pose,
            status: IcpStatus::MaxIterations,
            iterations: cfg.max_iterations,
            mse,
        }
    }
}

fn mean_sq_distance(src: &[Vec2], dst: &[Vec2], step: &Pose2) -> f64 {
    let total: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (step.transform_point(s) - d).norm_squared())
        .sum();
    total / src.len() as f64
}

/// Closed-form least-squares rigid alignment of `src` onto `dst` (2D Horn).
pub fn align_points(src: &[Vec2], dst: &[Vec2]) -> Pose2 {
    assert_eq!(src.len(), dst.len());
    assert!(!src.is_empty());
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec2>() / n;
    let cd = dst.iter().sum::<Vec2>() / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - cs, d - cd);
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
    }
    let theta = cross.atan2(dot);
    let r = crate::geometry::rotation(theta);
    Pose2::from_parts(theta, cd - r * cs)
}

/// Registers `detections` against `local_map` starting from `initial_guess`.
/// Returns the refined map-from-vehicle pose.
pub fn icp_register(detections: &DetectionSet, local_map: &LocalMap, initial_guess: &Pose2, cfg: &IcpConfig) -> IcpOutcome {
    LocalIndex::new(local_map, cfg.match_radius).register(detections, initial_guess, cfg)
}

/// Pairs detections projected through `pose` with their nearest landmark
/// within `threshold`. Ties go to the lowest landmark index.
pub fn associate(detections: &DetectionSet, local_map: &LocalMap, pose: &Pose2, threshold: f64) -> AssociationResult {
    LocalIndex::new(local_map, threshold).associate(detections, pose, threshold)
}

/// ICP followed by thresholded pairing at the refined pose. A frame whose
/// registration finds no matches yields an empty result.
pub fn register_and_associate(
    detections: &DetectionSet,
    local_map: &LocalMap,
    initial_guess: &Pose2,
    icp: &IcpConfig,
    threshold: f64,
) -> (AssociationResult, IcpOutcome) {
    let index = LocalIndex::new(local_map, icp.match_radius.max(threshold));
    let outcome = index.register(detections, initial_guess, icp);
    if outcome.status == IcpStatus::NoMatches {
        return (AssociationResult::empty(), outcome);
    }
    let mut result = index.associate(detections, &outcome.pose, threshold);
    result.icp_transform = outcome.pose.compose(&initial_guess.inverse());
    (result, outcome)
}
