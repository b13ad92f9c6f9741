//! File formats, run configuration and report output.

pub mod config;
pub mod formats;
pub mod netpbm;
pub mod report;

pub use config::{RunConfig, SsimModeName};
pub use formats::{
    format_g, parse_detection_records, parse_detections, parse_groundtruth, parse_groundtruth_records,
    write_detections, write_filtered, write_groundtruth, DetectionRecord, GroundTruthRecord,
};
pub use netpbm::{decode_netpbm, read_frames, read_netpbm, write_pgm, write_ppm, FrameDir};
