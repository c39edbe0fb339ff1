//! Per-frame sensor bundle and ground truth, shared by the simulator, the
//! engine and the file formats.

use crate::association::DetectionSet;
use crate::geometry::{Pose2, RelativePose2, Vec2};

/// GNSS position fix. `sigma_xy` is the variance of the fix in the x/y plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub position: Vec2,
    pub sigma_xy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub frame_index: u64,
    /// Motion from the previous frame to this one, expressed in the previous
    /// vehicle frame. Identity on the first frame.
    pub odometry: RelativePose2,
    pub detections: DetectionSet,
    pub gps: Option<GpsFix>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub frame_indices: Vec<u64>,
    pub poses: Vec<Pose2>,
    /// True GNSS bias per frame; empty when unknown (e.g. interpolated
    /// ground truth).
    pub bias: Vec<Vec2>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}
