//! Map-based geo-localization on a dynamically weighted factor graph.
//!
//! Per frame, detections are registered against a polyline landmark map,
//! the matched landmarks' turn angles give an information score, and that
//! score sets the weights of association, odometry, GNSS prior and bias
//! factors before a sliding-window solve.

pub mod association;
pub mod evaluation;
pub mod frame;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod map;
pub mod simulator;
pub mod spatial;
pub mod weighting;

pub use association::{AssociationResult, DetectionSet};
pub use frame::{FrameObservation, GpsFix, GroundTruth};
pub use geometry::{Pose2, RelativePose2, Vec2};
pub use graph::engine::{Engine, EngineConfig, FrameRecord};
pub use graph::{FactorSet, SolverConfig, TrajectoryState};
pub use map::LandmarkMap;
pub use weighting::{FrameWeights, PhiVariant, WeightConfig};
