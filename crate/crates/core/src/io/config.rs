//! Flat TOML run configuration. Every key maps to one field of
//! [`IscuConfig`] or [`SsimParams`], plus input/output paths. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlator::IscuConfig;
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_IOU_CUT;
use crate::similarity::{SsimMode, SsimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SsimModeName {
    #[default]
    Global,
    Windowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub half_window: usize,
    pub similarity_threshold: f64,
    pub confidence_gate: f64,
    pub fc_quorum: usize,
    pub fill_quorum: usize,
    pub fill_iou: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub ssim_mode: SsimModeName,
    pub window_size: u32,
    pub window_stride: u32,
    pub downsample_w: u32,
    pub downsample_h: u32,
    /// IoU above which a detection matches a ground truth during evaluation.
    pub iou_cut: f64,
    pub frames: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_iscu(&IscuConfig::default())
    }
}

impl RunConfig {
    pub fn from_iscu(c: &IscuConfig) -> Self {
        let s = &c.ssim;
        let (ssim_mode, window_size, window_stride) = match s.mode {
            SsimMode::Global => match SsimParams::DEFAULT_WINDOW {
                SsimMode::Windowed { window_size, stride } => (SsimModeName::Global, window_size, stride),
                SsimMode::Global => unreachable!(),
            },
            SsimMode::Windowed { window_size, stride } => (SsimModeName::Windowed, window_size, stride),
        };
        Self {
            half_window: c.half_window,
            similarity_threshold: s.similarity_threshold,
            confidence_gate: c.confidence_gate,
            fc_quorum: c.fc_quorum,
            fill_quorum: c.fill_quorum,
            fill_iou: c.fill_iou,
            k1: s.k1,
            k2: s.k2,
            dynamic_range: s.dynamic_range,
            ssim_mode,
            window_size,
            window_stride,
            downsample_w: s.downsample_w,
            downsample_h: s.downsample_h,
            iou_cut: DEFAULT_IOU_CUT,
            frames: None,
            detections: None,
            ground_truth: None,
            output: None,
        }
    }

    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                file: file.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn ssim_params(&self) -> Result<SsimParams> {
        let p = SsimParams {
            k1: self.k1,
            k2: self.k2,
            dynamic_range: self.dynamic_range,
            mode: match self.ssim_mode {
                SsimModeName::Global => SsimMode::Global,
                SsimModeName::Windowed => SsimMode::Windowed {
                    window_size: self.window_size,
                    stride: self.window_stride,
                },
            },
            downsample_w: self.downsample_w,
            downsample_h: self.downsample_h,
            similarity_threshold: self.similarity_threshold,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn iscu(&self) -> Result<IscuConfig> {
        let c = IscuConfig {
            half_window: self.half_window,
            confidence_gate: self.confidence_gate,
            fc_quorum: self.fc_quorum,
            fill_quorum: self.fill_quorum,
            fill_iou: self.fill_iou,
            ssim: self.ssim_params()?,
        };
        c.validate()?;
        Ok(c)
    }
}
