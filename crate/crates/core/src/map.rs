//! Geo-referenced polyline map: landmarks with differential angles and
//! local crops around a query pose.

use thiserror::Error;

use crate::geometry::{Pose2, Vec2};
use crate::spatial::GridIndex;

/// Minimum segment length; shorter consecutive vertices are merged.
pub const MIN_SEGMENT: f64 = 1e-9;
pub const DEFAULT_RESAMPLE_STEP: f64 = 0.5;
pub const DEFAULT_CROP_RADIUS: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("degenerate polyline: {distinct} distinct vertex(es), need at least 2")]
    Degenerate { distinct: usize },
    #[error("non-finite vertex coordinate in polyline")]
    NonFinite,
    #[error("resample step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("no polylines")]
    Empty,
}

/// Ordered vertex list in the map frame. Consecutive vertices are always
/// distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<Vec2>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate vertices.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, MapError> {
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(MapError::NonFinite);
        }
        let mut clean: Vec<Vec2> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if clean.last().is_none_or(|last| (v - last).norm() > MIN_SEGMENT) {
                clean.push(v);
            }
        }
        if clean.len() < 2 {
            return Err(MapError::Degenerate { distinct: clean.len() });
        }
        Ok(Self { vertices: clean })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// A polyline whose last vertex returns to its first is treated as a ring.
    pub fn is_closed(&self) -> bool {
        self.vertices.len() >= 4
            && (self.vertices[0] - self.vertices[self.vertices.len() - 1]).norm() <= MIN_SEGMENT
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Map landmark: position plus the unsigned turn angle of the polyline at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub position: Vec2,
    pub alpha: f64,
}

/// Unsigned angle between an incoming and an outgoing direction, in `[0, pi]`.
pub fn turn_angle(incoming: &Vec2, outgoing: &Vec2) -> f64 {
    let cross = incoming.x * outgoing.y - incoming.y * outgoing.x;
    cross.abs().atan2(incoming.dot(outgoing))
}

/// Resamples every polyline at (at most) `resample_step` spacing and assigns
/// differential angles.
///
/// Each original segment is split into `ceil(len / step)` equal pieces so the
/// original vertices survive and corner angles are kept intact. Resampled
/// interior points lie on straight segments and get `alpha = 0`; open
/// polyline endpoints also get `alpha = 0`.
pub fn build_landmarks(polylines: &[Polyline], resample_step: f64) -> Result<Vec<Landmark>, MapError> {
    if !(resample_step > 0.0 && resample_step.is_finite()) {
        return Err(MapError::InvalidStep(resample_step));
    }
    let mut out = Vec::new();
    for poly in polylines {
        let closed = poly.is_closed();
        let verts: &[Vec2] = if closed {
            &poly.vertices[..poly.vertices.len() - 1]
        } else {
            &poly.vertices
        };
        let n = verts.len();
        let segments = if closed { n } else { n - 1 };
        for k in 0..segments {
            let a = verts[k];
            let b = verts[(k + 1) % n];
            let alpha = if closed || k > 0 {
                let prev = verts[(k + n - 1) % n];
                turn_angle(&(a - prev), &(b - a))
            } else {
                0.0
            };
            out.push(Landmark { position: a, alpha });
            let len = (b - a).norm();
            let pieces = (len / resample_step).ceil().max(1.0) as usize;
            for p in 1..pieces {
                let f = p as f64 / pieces as f64;
                out.push(Landmark {
                    position: a + (b - a) * f,
                    alpha: 0.0,
                });
            }
        }
        if !closed {
            out.push(Landmark {
                position: verts[n - 1],
                alpha: 0.0,
            });
        }
    }
    Ok(out)
}

/// Landmarks within `radius` of a crop center, in ascending global order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub landmarks: Vec<Landmark>,
    pub center: Pose2,
    pub radius: f64,
}

impl LocalMap {
    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.landmarks.iter().map(|l| l.position).collect()
    }
}

/// Linear-scan crop: every landmark within `radius` of the center translation.
pub fn crop(map: &[Landmark], center: &Pose2, radius: f64) -> LocalMap {
    let r2 = radius * radius;
    LocalMap {
        landmarks: map
            .iter()
            .filter(|l| (l.position - center.t).norm_squared() <= r2)
            .copied()
            .collect(),
        center: *center,
        radius,
    }
}

/// Immutable landmark map with a grid index for fast crops.
#[derive(Debug, Clone)]
pub struct LandmarkMap {
    polylines: Vec<Polyline>,
    landmarks: Vec<Landmark>,
    positions: Vec<Vec2>,
    index: GridIndex,
}

impl LandmarkMap {
    pub fn from_polylines(polylines: Vec<Polyline>, resample_step: f64) -> Result<Self, MapError> {
        if polylines.is_empty() {
            return Err(MapError::Empty);
        }
        let landmarks = build_landmarks(&polylines, resample_step)?;
        let positions: Vec<Vec2> = landmarks.iter().map(|l| l.position).collect();
        let index = GridIndex::new(&positions, 10.0);
        Ok(Self {
            polylines,
            landmarks,
            positions,
            index,
        })
    }

    pub fn polylines(&self) -> &[Polyline] {
        &self.polylines
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    /// Indexed crop; returns exactly what [`crop`] returns.
    pub fn crop(&self, center: &Pose2, radius: f64) -> LocalMap {
        let ids = self.index.within(&self.positions, &center.t, radius);
        LocalMap {
            landmarks: ids.into_iter().map(|i| self.landmarks[i]).collect(),
            center: *center,
            radius,
        }
    }
}
