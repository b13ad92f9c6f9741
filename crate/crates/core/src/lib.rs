//! Streaming inter-frame similarity correlation for per-frame object
//! detections, with polyp-level evaluation metrics and a deterministic
//! synthetic scenario generator.
//!
//! The correlator ([`Correlator`]) takes frames one at a time together with
//! the detector's boxes for that frame and emits each frame's filtered boxes
//! `half_window` frames later: boxes that do not recur in SSIM-similar
//! neighboring frames are dropped, and boxes missing from a frame but present
//! around it are interpolated back in.

pub mod cli;
pub mod correlator;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod similarity;
pub mod synth;

pub use correlator::{process_sequence, Correlator, FilteredFrame, IscuConfig};
pub use error::{Error, Result};
pub use geometry::{
    adaptive_iou_threshold, centroid_to_corners, iou, BoundingBox, FrameDetections, FrameMeta, GroundTruthBox, Origin,
    ScoredBox,
};
pub use metrics::{EvalReport, FrameOutcome};
pub use similarity::{ssim, GrayFrame, RgbFrame, SsimMode, SsimParams};
pub use synth::{generate_scenario, Scenario, ScenarioConfig};
