//! Deterministic synthetic corridors and sensor streams.
//!
//! A course is a chain of straights, arcs and filleted corners. The map is
//! the pair of boundary curves offset from the sharp centerline; the vehicle
//! drives the (filleted) centerline at a fixed frame spacing.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::association::{associate, DetectionSet};
use crate::frame::{FrameObservation, GpsFix, GroundTruth};
use crate::geometry::{Pose2, Vec2};
use crate::map::{LandmarkMap, MapError, Polyline, DEFAULT_RESAMPLE_STEP};

/// Largest heading change between consecutive centerline vertices of an arc.
const ARC_CHORD_ANGLE: f64 = PI / 90.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Straight { length: f64 },
    /// Constant-curvature turn; positive angle turns left.
    Arc { angle: f64, radius: f64 },
    /// Sharp map corner between two straights; the vehicle cuts it with a
    /// fillet of the given radius.
    Corner { angle: f64, fillet: f64 },
}

/// How detection points are drawn from the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionSampling {
    /// Exactly the map landmarks in range.
    Landmarks,
    /// Points along the boundary curves at this spacing, with a random phase
    /// per frame and per curve (sampling unrelated to the map's landmarks).
    Boundary { spacing: f64 },
}

/// GNSS bias as a function of traveled distance `s`:
/// `offset + amplitude * (sin, cos)(2 pi s / period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    pub amplitude: f64,
    pub period: f64,
    pub offset: Vec2,
}

impl BiasModel {
    pub fn constant(offset: Vec2) -> Self {
        Self {
            amplitude: 0.0,
            period: 1.0,
            offset,
        }
    }

    pub fn at(&self, s: f64) -> Vec2 {
        if self.amplitude == 0.0 {
            return self.offset;
        }
        let phase = 2.0 * PI * s / self.period;
        self.offset + self.amplitude * Vec2::new(phase.sin(), phase.cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub start: Pose2,
    pub segments: Vec<Segment>,
    pub half_width: f64,
    pub frame_spacing: f64,
    pub sensor_range: f64,
    pub detection_sigma: f64,
    /// Inclusive frame ranges with no detections.
    pub dropout: Vec<(u64, u64)>,
    pub odometry_sigma_trans: f64,
    pub odometry_sigma_rot: f64,
    /// Multiplicative error on odometry translation (0.02 = 2 % long).
    pub odometry_scale_error: f64,
    pub gps_sigma: f64,
    pub bias: BiasModel,
    /// A GPS fix on every n-th frame.
    pub gps_every: u64,
    pub sampling: DetectionSampling,
    pub resample_step: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start: Pose2::identity(),
            segments: vec![Segment::Straight { length: 100.0 }],
            half_width: 4.0,
            frame_spacing: 0.5,
            sensor_range: 20.0,
            detection_sigma: 0.0,
            dropout: Vec::new(),
            odometry_sigma_trans: 0.0,
            odometry_sigma_rot: 0.0,
            odometry_scale_error: 0.0,
            gps_sigma: 0.0,
            bias: BiasModel::constant(Vec2::zeros()),
            gps_every: 1,
            sampling: DetectionSampling::Landmarks,
            resample_step: DEFAULT_RESAMPLE_STEP,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("segment {index}: {reason}")]
    Segment { index: usize, reason: String },
    #[error(transparent)]
    Map(#[from] MapError),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        for (name, v) in [
            ("detection_sigma", self.detection_sigma),
            ("odometry_sigma_trans", self.odometry_sigma_trans),
            ("odometry_sigma_rot", self.odometry_sigma_rot),
            ("gps_sigma", self.gps_sigma),
            ("bias amplitude", self.bias.amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("frame_spacing", self.frame_spacing),
            ("half_width", self.half_width),
            ("sensor_range", self.sensor_range),
            ("resample_step", self.resample_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.odometry_scale_error > -1.0 && self.odometry_scale_error.is_finite()) {
            return bad(format!("odometry_scale_error must be > -1, got {}", self.odometry_scale_error));
        }
        if self.bias.amplitude > 0.0 && !(self.bias.period > 0.0 && self.bias.period.is_finite()) {
            return bad(format!("bias period must be > 0, got {}", self.bias.period));
        }
        if !self.bias.offset.iter().all(|v| v.is_finite()) {
            return bad("bias offset must be finite".into());
        }
        if self.gps_every == 0 {
            return bad("gps_every must be >= 1".into());
        }
        if let DetectionSampling::Boundary { spacing } = self.sampling {
            if !(spacing > 0.0 && spacing.is_finite()) {
                return bad(format!("detection spacing must be > 0, got {spacing}"));
            }
        }
        for &(a, b) in &self.dropout {
            if a > b {
                return bad(format!("dropout interval {a}:{b} is reversed"));
            }
        }
        if self.segments.is_empty() {
            return bad("course has no segments".into());
        }
        Ok(())
    }

    pub fn in_dropout(&self, frame: u64) -> bool {
        self.dropout.iter().any(|&(a, b)| (a..=b).contains(&frame))
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: LandmarkMap,
    pub frames: Vec<FrameObservation>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { p0: Vec2, heading: f64, length: f64 },
    Arc { p0: Vec2, heading: f64, curvature: f64, length: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { length, .. } | Piece::Arc { length, .. } => length,
        }
    }

    fn pose_at(&self, u: f64) -> Pose2 {
        match *self {
            Piece::Line { p0, heading, .. } => Pose2::from_parts(heading, p0 + u * Vec2::new(heading.cos(), heading.sin())),
            Piece::Arc { p0, heading, curvature, .. } => {
                let th = heading + curvature * u;
                let offset = Vec2::new(th.sin() - heading.sin(), heading.cos() - th.cos()) / curvature;
                Pose2::from_parts(th, p0 + offset)
            }
        }
    }
}

/// Vehicle path plus the sharp centerline used for the boundaries.
struct Course {
    pieces: Vec<Piece>,
    centerline: Vec<Vec2>,
}

fn corner_tangent(angle: f64, fillet: f64) -> f64 {
    fillet * (angle.abs() / 2.0).tan()
}

fn build_course(start: &Pose2, segments: &[Segment]) -> Result<Course, ScenarioError> {
    let err = |index: usize, reason: &str| ScenarioError::Segment {
        index,
        reason: reason.to_string(),
    };
    let mut pieces = Vec::new();
    let mut centerline = vec![start.t];
    let mut pos = start.t;
    let mut heading = start.theta();
    let mut trim_start = 0.0;

    for (i, seg) in segments.iter().enumerate() {
        match *seg {
            Segment::Straight { length } => {
                if !(length > 0.0 && length.is_finite()) {
                    return Err(err(i, "straight length must be > 0"));
                }
                let trim_end = match segments.get(i + 1) {
                    Some(Segment::Corner { angle, fillet }) => corner_tangent(*angle, *fillet),
                    _ => 0.0,
                };
                let usable = length - trim_start - trim_end;
                if usable < -1e-9 {
                    return Err(err(i, "straight too short for the adjacent corner fillets"));
                }
                let dir = Vec2::new(heading.cos(), heading.sin());
                if usable > 1e-12 {
                    pieces.push(Piece::Line {
                        p0: pos + trim_start * dir,
                        heading,
                        length: usable,
                    });
                }
                pos += length * dir;
                centerline.push(pos);
                trim_start = 0.0;
            }
            Segment::Arc { angle, radius } => {
                if !(radius > 0.0 && radius.is_finite()) || angle == 0.0 || !angle.is_finite() {
                    return Err(err(i, "arc needs a nonzero angle and a positive radius"));
                }
                if trim_start > 0.0 {
                    return Err(err(i, "a corner must be followed by a straight"));
                }
                let piece = Piece::Arc {
                    p0: pos,
                    heading,
                    curvature: angle.signum() / radius,
                    length: radius * angle.abs(),
                };
                let chords = (angle.abs() / ARC_CHORD_ANGLE).ceil() as usize;
                for k in 1..=chords {
                    centerline.push(piece.pose_at(piece.length() * k as f64 / chords as f64).t);
                }
                let end = piece.pose_at(piece.length());
                pos = end.t;
                heading = end.theta();
                pieces.push(piece);
            }
            Segment::Corner { angle, fillet } => {
                if !(fillet > 0.0 && fillet.is_finite()) || angle == 0.0 || angle.is_nan() || angle.abs() >= PI {
                    return Err(err(i, "corner needs an angle in (-pi, pi) excluding 0 and a positive fillet"));
                }
                let straight_before = i > 0 && matches!(segments[i - 1], Segment::Straight { .. });
                let straight_after = matches!(segments.get(i + 1), Some(Segment::Straight { .. }));
                if !straight_before || !straight_after {
                    return Err(err(i, "a corner must sit between two straights"));
                }
                let tan = corner_tangent(angle, fillet);
                pieces.push(Piece::Arc {
                    p0: pos - tan * Vec2::new(heading.cos(), heading.sin()),
                    heading,
                    curvature: angle.signum() / fillet,
                    length: fillet * angle.abs(),
                });
                heading += angle;
                trim_start = tan;
            }
        }
    }
    if pieces.iter().map(Piece::length).sum::<f64>() <= 0.0 {
        return Err(ScenarioError::Invalid("course has zero length".into()));
    }
    Ok(Course { pieces, centerline })
}

impl Course {
    fn length(&self) -> f64 {
        self.pieces.iter().map(Piece::length).sum()
    }

    fn poses(&self, spacing: f64) -> Vec<Pose2> {
        let total = self.length();
        let n = (total / spacing + 1e-9).floor() as usize + 1;
        let mut out = Vec::with_capacity(n);
        let mut piece = 0;
        let mut piece_start = 0.0;
        for i in 0..n {
            let s = i as f64 * spacing;
            while piece + 1 < self.pieces.len() && s > piece_start + self.pieces[piece].length() {
                piece_start += self.pieces[piece].length();
                piece += 1;
            }
            let u = (s - piece_start).min(self.pieces[piece].length());
            out.push(self.pieces[piece].pose_at(u));
        }
        out
    }

    /// Left and right boundaries: the centerline offset by `half_width`
    /// with miter joins, so corners stay sharp.
    fn boundaries(&self, half_width: f64) -> Vec<Vec<Vec2>> {
        let c = &self.centerline;
        let normal = |a: &Vec2, b: &Vec2| {
            let d = (b - a).normalize();
            Vec2::new(-d.y, d.x)
        };
        let mut left = Vec::with_capacity(c.len());
        let mut right = Vec::with_capacity(c.len());
        for k in 0..c.len() {
            let offset = if k == 0 {
                normal(&c[0], &c[1]) * half_width
            } else if k + 1 == c.len() {
                normal(&c[k - 1], &c[k]) * half_width
            } else {
                let (n0, n1) = (normal(&c[k - 1], &c[k]), normal(&c[k], &c[k + 1]));
                let bisector = (n0 + n1).normalize();
                bisector * (half_width / bisector.dot(&n0))
            };
            left.push(c[k] + offset);
            right.push(c[k] - offset);
        }
        vec![left, right]
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let u = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + u * ab - p).norm()
}

fn sample_boundary(polyline: &[Vec2], pose: &Pose2, range: f64, spacing: f64, phase: f64, out: &mut Vec<Vec2>) {
    let mut start = 0.0;
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).norm();
        if point_segment_distance(&pose.t, &a, &b) <= range {
            let first = ((start - phase) / spacing).ceil().max(0.0) as u64;
            let mut j = first;
            loop {
                let s = phase + j as f64 * spacing;
                if s >= start + len {
                    break;
                }
                let p = a + (b - a) * ((s - start) / len);
                if (p - pose.t).norm() <= range {
                    out.push(p);
                }
                j += 1;
            }
        }
        start += len;
    }
}

/// Builds the map, the noisy frame stream and the ground truth.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    cfg.validate()?;
    let course = build_course(&cfg.start, &cfg.segments)?;
    let boundaries = course.boundaries(cfg.half_width);
    let polylines = boundaries
        .iter()
        .map(|b| Polyline::new(b.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let map = LandmarkMap::from_polylines(polylines, cfg.resample_step)?;

    let poses = course.poses(cfg.frame_spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut frames = Vec::with_capacity(poses.len());
    let mut bias_trace = Vec::with_capacity(poses.len());

    for (i, pose) in poses.iter().enumerate() {
        let frame_index = i as u64;
        let odometry = if i == 0 {
            Pose2::identity()
        } else {
            let inc = poses[i - 1].between(pose);
            let scale = 1.0 + cfg.odometry_scale_error;
            Pose2::new(
                inc.theta() + normal(&mut rng, cfg.odometry_sigma_rot),
                scale * inc.x() + normal(&mut rng, cfg.odometry_sigma_trans),
                scale * inc.y() + normal(&mut rng, cfg.odometry_sigma_trans),
            )
        };

        let mut world = Vec::new();
        match cfg.sampling {
            DetectionSampling::Landmarks => {
                world.extend(map.crop(pose, cfg.sensor_range).landmarks.iter().map(|l| l.position));
            }
            DetectionSampling::Boundary { spacing } => {
                for b in &boundaries {
                    let phase = rng.random::<f64>() * spacing;
                    sample_boundary(b, pose, cfg.sensor_range, spacing, phase, &mut world);
                }
            }
        }
        let points = if cfg.in_dropout(frame_index) {
            Vec::new()
        } else {
            world
                .iter()
                .map(|p| {
                    let d = pose.inverse_transform_point(p);
                    let nx = normal(&mut rng, cfg.detection_sigma);
                    let ny = normal(&mut rng, cfg.detection_sigma);
                    d + Vec2::new(nx, ny)
                })
                .collect()
        };

        let bias = cfg.bias.at(i as f64 * cfg.frame_spacing);
        let gps = (frame_index.is_multiple_of(cfg.gps_every)).then(|| {
            let nx = normal(&mut rng, cfg.gps_sigma);
            let ny = normal(&mut rng, cfg.gps_sigma);
            GpsFix {
                position: pose.t + bias + Vec2::new(nx, ny),
                sigma_xy: cfg.gps_sigma * cfg.gps_sigma,
            }
        });

        frames.push(FrameObservation {
            frame_index,
            odometry,
            detections: DetectionSet::new(frame_index, points),
            gps,
        });
        bias_trace.push(bias);
    }

    let truth = GroundTruth {
        frame_indices: (0..poses.len() as u64).collect(),
        poses,
        bias: bias_trace,
    };
    Ok(Scenario { map, frames, truth })
}

/// Information score of every frame under perfect association: the frame's
/// own detections placed by the ground-truth pose and paired with the
/// nearest landmark within `threshold`.
pub fn info_profile(map: &LandmarkMap, frames: &[FrameObservation], truth: &GroundTruth, threshold: f64) -> Vec<f64> {
    frames
        .iter()
        .zip(&truth.poses)
        .map(|(f, pose)| {
            if f.detections.is_empty() {
                return 0.0;
            }
            let reach = f.detections.points.iter().map(|d| d.norm()).fold(0.0, f64::max) + threshold;
            let local = map.crop(pose, reach);
            associate(&f.detections, &local, pose, threshold).info_score
        })
        .collect()
}

/// Named scenario families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    CornerRich,
    CornerRichDropout,
    CorridorAmbiguous,
    Mixed,
    MixedDropout,
    /// Corner-rich course with every noise source and the bias switched off.
    Clean,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::CornerRich,
        Preset::CornerRichDropout,
        Preset::CorridorAmbiguous,
        Preset::Mixed,
        Preset::MixedDropout,
        Preset::Clean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::CornerRich => "corner-rich",
            Preset::CornerRichDropout => "corner-rich-dropout",
            Preset::CorridorAmbiguous => "corridor-ambiguous",
            Preset::Mixed => "mixed",
            Preset::MixedDropout => "mixed-dropout",
            Preset::Clean => "clean",
        }
    }

    pub fn config(&self, seed: u64) -> ScenarioConfig {
        let realistic = ScenarioConfig {
            seed,
            start: Pose2::new(0.35, 100.0, 50.0),
            detection_sigma: 0.05,
            odometry_sigma_trans: 0.02,
            odometry_sigma_rot: 0.002,
            gps_sigma: 0.3,
            sampling: DetectionSampling::Boundary { spacing: 0.4 },
            ..Default::default()
        };
        match self {
            Preset::CornerRich => ScenarioConfig {
                segments: staircase(90, 10.0, 2.5),
                bias: BiasModel::constant(Vec2::new(1.5, -0.8)),
                ..realistic
            },
            Preset::CornerRichDropout => ScenarioConfig {
                dropout: vec![(150, 350)],
                ..Preset::CornerRich.config(seed)
            },
            Preset::CorridorAmbiguous => {
                let mut segments = staircase(12, 10.0, 2.5);
                segments.push(Segment::Corner { angle: FRAC_PI_2, fillet: 2.5 });
                segments.push(Segment::Straight { length: 200.0 });
                segments.push(Segment::Corner { angle: -FRAC_PI_2, fillet: 2.5 });
                segments.extend(staircase(12, 10.0, 2.5));
                ScenarioConfig {
                    segments,
                    odometry_sigma_trans: 0.03,
                    odometry_scale_error: 0.03,
                    bias: BiasModel::constant(Vec2::new(1.0, 0.6)),
                    ..realistic
                }
            }
            Preset::Mixed => {
                let mut segments = staircase(10, 10.0, 2.5);
                segments.push(Segment::Corner { angle: FRAC_PI_2, fillet: 2.5 });
                segments.push(Segment::Straight { length: 60.0 });
                segments.push(Segment::Arc { angle: -FRAC_PI_2, radius: 30.0 });
                segments.push(Segment::Straight { length: 60.0 });
                segments.push(Segment::Corner { angle: FRAC_PI_2, fillet: 2.5 });
                segments.extend(staircase(16, 10.0, 2.5));
                ScenarioConfig {
                    segments,
                    bias: BiasModel {
                        amplitude: 1.5,
                        period: 1200.0,
                        offset: Vec2::zeros(),
                    },
                    ..realistic
                }
            }
            Preset::MixedDropout => ScenarioConfig {
                dropout: vec![(150, 350)],
                ..Preset::Mixed.config(seed)
            },
            Preset::Clean => ScenarioConfig {
                seed,
                start: Pose2::new(0.35, 100.0, 50.0),
                segments: staircase(30, 10.0, 2.5),
                ..Default::default()
            },
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(Preset::name).collect();
                format!("unknown preset '{s}' (expected one of {})", names.join(", "))
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Alternating left/right right-angle corners joined by `leg` meter
/// straights.
pub fn staircase(legs: usize, leg: f64, fillet: f64) -> Vec<Segment> {
    let mut out = Vec::with_capacity(2 * legs);
    for k in 0..legs {
        if k > 0 {
            let angle = if k % 2 == 1 { FRAC_PI_2 } else { -FRAC_PI_2 };
            out.push(Segment::Corner { angle, fillet });
        }
        out.push(Segment::Straight { length: leg });
    }
    out
}
