//! Boxes, per-frame detection arrays and the overlap measures built on them.
//!
//! Coordinates are real-valued pixels with the origin at the top-left corner.
//! Areas use the continuous convention (`width = x_max - x_min`), so there is
//! no `+1` pixel adjustment anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in corner form. Always has strictly positive area
/// and finite, non-negative coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input(format!("non-finite box coordinate in {coords:?}")));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::input(format!("negative box coordinate in {coords:?}")));
        }
        if x_min >= x_max {
            return Err(Error::input(format!("box x_min {x_min} is not below x_max {x_max}")));
        }
        if y_min >= y_max {
            return Err(Error::input(format!("box y_min {y_min} is not below y_max {y_max}")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns `None` when nothing
    /// of positive area is left.
    pub fn clip_to(x_min: f64, y_min: f64, x_max: f64, y_max: f64, meta: &FrameMeta) -> Option<Self> {
        let w = f64::from(meta.width);
        let h = f64::from(meta.height);
        let c = |v: f64, hi: f64| v.clamp(0.0, hi);
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return None;
        }
        Self::new(c(x_min, w), c(y_min, h), c(x_max, w), c(y_max, h)).ok()
    }

    /// Arithmetic mean of the corners of `boxes`. `None` for an empty slice.
    pub fn mean<'a, I>(boxes: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a BoundingBox>,
    {
        let mut sum = [0.0f64; 4];
        let mut n = 0usize;
        for b in boxes {
            for (s, v) in sum.iter_mut().zip(b.to_array()) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let k = n as f64;
        // The mean of valid boxes is itself valid, up to rounding which can
        // only collapse a box whose members were already one ulp wide.
        Self::new(sum[0] / k, sum[1] / k, sum[2] / k, sum[3] / k).ok()
    }

    fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Emitted by the upstream detector.
    Detector,
    /// Synthesized by missed-detection correction.
    Interpolated,
}

impl Origin {
    pub fn tag(self) -> &'static str {
        match self {
            Origin::Detector => "det",
            Origin::Interpolated => "interp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    confidence: f64,
    pub origin: Origin,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self> {
        Self::with_origin(bbox, confidence, Origin::Detector)
    }

    pub fn with_origin(bbox: BoundingBox, confidence: f64, origin: Origin) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::input(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            confidence,
            origin,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub width: u32,
    pub height: u32,
    pub frame_index: u64,
}

impl FrameMeta {
    pub fn new(width: u32, height: u32, frame_index: u64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!("frame dimensions {width}x{height} must be positive")));
        }
        Ok(Self {
            width,
            height,
            frame_index,
        })
    }
}

/// The detector output for one frame: every box lies inside the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub meta: FrameMeta,
    boxes: Vec<ScoredBox>,
}

impl FrameDetections {
    /// Builds the array from already-valid boxes, clipping each to the frame
    /// and dropping any whose clipped area is zero.
    pub fn new(meta: FrameMeta, boxes: impl IntoIterator<Item = ScoredBox>) -> Self {
        let boxes = boxes
            .into_iter()
            .filter_map(|sb| {
                let b = sb.bbox;
                BoundingBox::clip_to(b.x_min, b.y_min, b.x_max, b.y_max, &meta)
                    .map(|bbox| ScoredBox { bbox, ..sb })
            })
            .collect();
        Self { meta, boxes }
    }

    pub fn empty(meta: FrameMeta) -> Self {
        Self {
            meta,
            boxes: Vec::new(),
        }
    }

    pub fn boxes(&self) -> &[ScoredBox] {
        &self.boxes
    }

    /// Number of boxes in the array.
    pub fn nb(&self) -> usize {
        self.boxes.len()
    }

    /// Keeps only boxes scoring strictly above `gate`.
    pub fn gated(&self, gate: f64) -> Self {
        Self {
            meta: self.meta,
            boxes: self
                .boxes
                .iter()
                .copied()
                .filter(|b| b.confidence > gate)
                .collect(),
        }
    }
}

/// Annotation in centroid form, tagged with the polyp it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub width: f64,
    pub height: f64,
    pub polyp_id: String,
}

impl GroundTruthBox {
    pub fn new(
        centroid_x: f64,
        centroid_y: f64,
        width: f64,
        height: f64,
        polyp_id: impl Into<String>,
    ) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::input(format!(
                "ground-truth size {width}x{height} must be positive"
            )));
        }
        let g = Self {
            centroid_x,
            centroid_y,
            width,
            height,
            polyp_id: polyp_id.into(),
        };
        g.try_corners()?;
        Ok(g)
    }

    pub fn from_corners(b: &BoundingBox, polyp_id: impl Into<String>) -> Self {
        let (cx, cy) = b.center();
        Self {
            centroid_x: cx,
            centroid_y: cy,
            width: b.width(),
            height: b.height(),
            polyp_id: polyp_id.into(),
        }
    }

    fn try_corners(&self) -> Result<BoundingBox> {
        let hw = self.width / 2.0;
        let hh = self.height / 2.0;
        BoundingBox::new(
            self.centroid_x - hw,
            self.centroid_y - hh,
            self.centroid_x + hw,
            self.centroid_y + hh,
        )
    }

    pub fn corners(&self) -> BoundingBox {
        centroid_to_corners(self)
    }
}

/// `(cx, cy, w, h)` to `(cx - w/2, cy - h/2, cx + w/2, cy + h/2)`.
pub fn centroid_to_corners(g: &GroundTruthBox) -> BoundingBox {
    g.try_corners()
        .expect("GroundTruthBox is validated on construction")
}

/// Size-dependent overlap threshold for cross-frame matching: the mean of the
/// box's width and height expressed as fractions of the frame dimensions.
/// Not clamped, so a frame-sized box gets a threshold of 1 and can never be
/// matched by a strict `IoU > threshold` test.
pub fn adaptive_iou_threshold(c: &BoundingBox, meta: &FrameMeta) -> f64 {
    0.5 * (c.width() / f64::from(meta.width) + c.height() / f64::from(meta.height))
}
