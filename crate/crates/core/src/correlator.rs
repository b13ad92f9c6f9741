//! Streaming inter-frame similarity correlator.
//!
//! Each frame `t` is judged against the `half_window` frames before and after
//! it. Two independent passes run on the original (gated) detector output:
//!
//! * noise elimination keeps a box only if enough neighbors hold an
//!   overlapping box (`IoU` above the size-adaptive threshold). With `m` of
//!   the neighbors SSIM-similar to frame `t`, "enough" means more than `m/2`
//!   of those similar frames. When no neighbor is similar the fixed-count
//!   fallback asks for `fc_quorum` of all neighbors instead.
//! * missed-detection correction clusters neighbor boxes at a common
//!   location and, when a cluster spans at least `fill_quorum` frames on both
//!   sides of `t` and nothing in frame `t` already covers it, inserts the
//!   cluster's mean box.
//!
//! Near the ends of a sequence the window is truncated to the neighbors that
//! exist. A frame with no neighbors at all passes through untouched.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{adaptive_iou_threshold, iou, BoundingBox, FrameDetections, FrameMeta, Origin, ScoredBox};
use crate::similarity::{ssim, GrayFrame, SsimParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IscuConfig {
    /// Frames considered on each side of the current one.
    pub half_window: usize,
    /// Boxes scoring at or below this never enter the correlator.
    pub confidence_gate: f64,
    /// Neighbor count confirming a box when no neighbor is similar.
    pub fc_quorum: usize,
    /// Distinct neighbor frames a cluster must span to be interpolated.
    pub fill_quorum: usize,
    /// Overlap defining "the same location" for interpolation.
    pub fill_iou: f64,
    pub ssim: SsimParams,
}

impl Default for IscuConfig {
    fn default() -> Self {
        Self {
            half_window: 3,
            confidence_gate: 0.3,
            fc_quorum: 3,
            fill_quorum: 3,
            fill_iou: 0.5,
            ssim: SsimParams::default(),
        }
    }
}

impl IscuConfig {
    pub fn similarity_threshold(&self) -> f64 {
        self.ssim.similarity_threshold
    }

    pub fn validate(&self) -> Result<()> {
        let span = 2 * self.half_window;
        if self.half_window == 0 {
            return Err(Error::input("half_window must be at least 1"));
        }
        if self.fc_quorum == 0 || self.fc_quorum > span {
            return Err(Error::input(format!(
                "fc_quorum {} must be in 1..={span}",
                self.fc_quorum
            )));
        }
        if self.fill_quorum == 0 || self.fill_quorum > span {
            return Err(Error::input(format!(
                "fill_quorum {} must be in 1..={span}",
                self.fill_quorum
            )));
        }
        for (name, v) in [("confidence_gate", self.confidence_gate), ("fill_iou", self.fill_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} {v} outside [0, 1]")));
            }
        }
        self.ssim.validate()
    }

    /// The same operating point with a different window: the fixed-count
    /// fallback asks for half of the neighbors and the interpolation quorum
    /// is capped at the neighbor count.
    pub fn with_half_window(&self, half_window: usize) -> Self {
        Self {
            half_window,
            fc_quorum: half_window,
            fill_quorum: self.fill_quorum.min(2 * half_window),
            ..*self
        }
    }

    /// Fixed-count quorum for a window of `available` neighbors; equals
    /// `fc_quorum` for a full window and scales proportionally otherwise.
    pub fn fc_quorum_for(&self, available: usize) -> usize {
        let span = 2 * self.half_window;
        (available * self.fc_quorum).div_ceil(span).max(1)
    }
}

/// One neighbor of the frame being judged.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    /// Signed distance from the current frame; negative for previous frames.
    pub offset: i64,
    pub detections: &'a FrameDetections,
    /// Whether the neighbor's SSIM with the current frame is above threshold.
    pub similar: bool,
}

/// An explicit window: the current frame and its available neighbors, each
/// with the luma raster used for similarity.
#[derive(Debug, Clone)]
pub struct CorrelationWindow {
    pub center: (GrayFrame, FrameDetections),
    /// `(offset, luma, detections)`, any order.
    pub neighbors: Vec<(i64, GrayFrame, FrameDetections)>,
}

impl CorrelationWindow {
    /// Computes similarity flags against the center. Rasters are compared as
    /// stored, so they should already be at working resolution.
    pub fn neighbors_with_similarity(&self, p: &SsimParams) -> Result<Vec<Neighbor<'_>>> {
        self.neighbors
            .iter()
            .map(|(offset, luma, dets)| {
                Ok(Neighbor {
                    offset: *offset,
                    detections: dets,
                    similar: ssim(&self.center.0, luma, p)? > p.similarity_threshold,
                })
            })
            .collect()
    }

    pub fn evaluate(&self, cfg: &IscuConfig) -> Result<FilteredFrame> {
        let neighbors = self.neighbors_with_similarity(&cfg.ssim)?;
        Ok(judge(&self.center.1, &neighbors, cfg))
    }
}

/// Outcome of noise elimination for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDecision {
    pub kept: Vec<ScoredBox>,
    pub removed: usize,
    /// Number of SSIM-similar neighbors (`m`).
    pub similar: usize,
    /// True when the fixed-count fallback was used.
    pub used_fc: bool,
}

fn overlaps_any(c: &BoundingBox, threshold: f64, frame: &FrameDetections) -> bool {
    frame.boxes().iter().any(|b| iou(&b.bbox, c) > threshold)
}

pub fn eliminate_noise(center: &FrameDetections, neighbors: &[Neighbor<'_>], cfg: &IscuConfig) -> NoiseDecision {
    let similar = neighbors.iter().filter(|n| n.similar).count();
    if neighbors.is_empty() {
        return NoiseDecision {
            kept: center.boxes().to_vec(),
            removed: 0,
            similar: 0,
            used_fc: false,
        };
    }
    let used_fc = similar == 0;
    let quorum = cfg.fc_quorum_for(neighbors.len());
    let kept: Vec<ScoredBox> = center
        .boxes()
        .iter()
        .filter(|c| {
            let threshold = adaptive_iou_threshold(&c.bbox, &center.meta);
            let hits = neighbors
                .iter()
                .filter(|n| used_fc || n.similar)
                .filter(|n| overlaps_any(&c.bbox, threshold, n.detections))
                .count();
            if used_fc {
                hits >= quorum
            } else {
                2 * hits > similar
            }
        })
        .copied()
        .collect();
    NoiseDecision {
        removed: center.nb() - kept.len(),
        kept,
        similar,
        used_fc,
    }
}

/// Nearest first; at equal distance the previous frame comes first.
fn proximity_order(neighbors: &[Neighbor<'_>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..neighbors.len()).collect();
    order.sort_by_key(|&i| (neighbors[i].offset.unsigned_abs(), neighbors[i].offset));
    order
}

pub fn correct_missed(center: &FrameDetections, neighbors: &[Neighbor<'_>], cfg: &IscuConfig) -> Vec<ScoredBox> {
    let order = proximity_order(neighbors);
    let mut claimed: Vec<Vec<bool>> = neighbors.iter().map(|n| vec![false; n.detections.nb()]).collect();
    let mut clusters: Vec<Vec<(usize, usize)>> = Vec::new();

    for &ni in &order {
        for bi in 0..neighbors[ni].detections.nb() {
            if claimed[ni][bi] {
                continue;
            }
            claimed[ni][bi] = true;
            let seed = neighbors[ni].detections.boxes()[bi].bbox;
            let mut members = vec![(ni, bi)];
            for &nj in order.iter().filter(|&&nj| nj != ni) {
                let mut best: Option<(usize, f64)> = None;
                for (bj, b) in neighbors[nj].detections.boxes().iter().enumerate() {
                    if claimed[nj][bj] {
                        continue;
                    }
                    let v = iou(&seed, &b.bbox);
                    if v > cfg.fill_iou && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((bj, v));
                    }
                }
                if let Some((bj, _)) = best {
                    claimed[nj][bj] = true;
                    members.push((nj, bj));
                }
            }
            clusters.push(members);
        }
    }

    let mut added = Vec::new();
    for members in clusters {
        if members.len() < cfg.fill_quorum {
            continue;
        }
        let has_prev = members.iter().any(|&(n, _)| neighbors[n].offset < 0);
        let has_next = members.iter().any(|&(n, _)| neighbors[n].offset > 0);
        if !(has_prev && has_next) {
            continue;
        }
        let boxes: Vec<&ScoredBox> = members
            .iter()
            .map(|&(n, b)| &neighbors[n].detections.boxes()[b])
            .collect();
        let Some(mean) = BoundingBox::mean(boxes.iter().map(|b| &b.bbox)) else {
            continue;
        };
        if center.boxes().iter().any(|c| iou(&c.bbox, &mean) > cfg.fill_iou) {
            continue;
        }
        let confidence = boxes.iter().map(|b| b.confidence()).sum::<f64>() / boxes.len() as f64;
        let scored = ScoredBox::with_origin(mean, confidence.clamp(0.0, 1.0), Origin::Interpolated)
            .expect("mean confidence stays in [0, 1]");
        added.push(scored);
    }
    added
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredFrame {
    pub meta: FrameMeta,
    /// Detector boxes that survived noise elimination, in input order.
    pub kept: Vec<ScoredBox>,
    /// Interpolated boxes for missed detections.
    pub added: Vec<ScoredBox>,
    pub removed_count: usize,
    pub similar_neighbors: usize,
    pub used_fc: bool,
}

impl FilteredFrame {
    pub fn boxes(&self) -> impl Iterator<Item = &ScoredBox> {
        self.kept.iter().chain(&self.added)
    }
}

/// Both passes for one frame, given its gated detections and neighbors.
pub fn judge(center: &FrameDetections, neighbors: &[Neighbor<'_>], cfg: &IscuConfig) -> FilteredFrame {
    let noise = eliminate_noise(center, neighbors, cfg);
    let added = correct_missed(center, neighbors, cfg);
    FilteredFrame {
        meta: center.meta,
        kept: noise.kept,
        added,
        removed_count: noise.removed,
        similar_neighbors: noise.similar,
        used_fc: noise.used_fc,
    }
}

struct Slot {
    seq: u64,
    luma: GrayFrame,
    detections: FrameDetections,
}

/// Single-writer streaming stage. Frame `t` is emitted once frame
/// `t + half_window` has been pushed; [`Correlator::flush`] drains the tail.
pub struct Correlator {
    cfg: IscuConfig,
    slots: VecDeque<Slot>,
    pushed: u64,
    next_center: u64,
    ssim_cache: HashMap<(u64, u64), f64>,
    dims: Option<(u32, u32)>,
    last_index: Option<u64>,
}

impl Correlator {
    pub fn new(cfg: IscuConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            slots: VecDeque::with_capacity(2 * cfg.half_window + 1),
            pushed: 0,
            next_center: 0,
            ssim_cache: HashMap::new(),
            dims: None,
            last_index: None,
        })
    }

    pub fn config(&self) -> &IscuConfig {
        &self.cfg
    }

    /// Frames pushed but not yet emitted.
    pub fn pending(&self) -> usize {
        (self.pushed - self.next_center) as usize
    }

    pub fn push_frame(&mut self, frame: &GrayFrame, detections: &FrameDetections) -> Result<Option<FilteredFrame>> {
        let meta = detections.meta;
        if (frame.width(), frame.height()) != (meta.width, meta.height) {
            return Err(Error::input(format!(
                "frame {} raster is {}x{} but detections declare {}x{}",
                meta.frame_index,
                frame.width(),
                frame.height(),
                meta.width,
                meta.height
            )));
        }
        if let Some(dims) = self.dims {
            if dims != (meta.width, meta.height) {
                return Err(Error::input(format!(
                    "frame {} is {}x{}, stream started at {}x{}",
                    meta.frame_index, meta.width, meta.height, dims.0, dims.1
                )));
            }
        }
        if let Some(previous) = self.last_index {
            if meta.frame_index <= previous {
                return Err(Error::Sequencing {
                    previous,
                    got: meta.frame_index,
                });
            }
        }
        let luma = self.cfg.ssim.prepare(frame)?;
        self.dims = Some((meta.width, meta.height));
        self.last_index = Some(meta.frame_index);
        self.slots.push_back(Slot {
            seq: self.pushed,
            luma,
            detections: detections.gated(self.cfg.confidence_gate),
        });
        self.pushed += 1;

        let h = self.cfg.half_window as u64;
        if self.pushed > h && self.next_center + h < self.pushed {
            return self.emit_next().map(Some);
        }
        Ok(None)
    }

    /// Emits every pending frame with a truncated window and resets the
    /// correlator for a new sequence.
    pub fn flush(&mut self) -> Result<Vec<FilteredFrame>> {
        let mut out = Vec::with_capacity(self.pending());
        while self.next_center < self.pushed {
            out.push(self.emit_next()?);
        }
        *self = Self::new(self.cfg)?;
        Ok(out)
    }

    fn emit_next(&mut self) -> Result<FilteredFrame> {
        let h = self.cfg.half_window as u64;
        let center = self.next_center;
        let front = self.slots.front().map_or(0, |s| s.seq);
        let center_pos = (center - front) as usize;

        let mut flags = Vec::with_capacity(self.slots.len());
        for (pos, slot) in self.slots.iter().enumerate() {
            if pos == center_pos || slot.seq.abs_diff(center) > h {
                continue;
            }
            let key = (slot.seq.min(center), slot.seq.max(center));
            let score = match self.ssim_cache.get(&key) {
                Some(&v) => v,
                None => {
                    let v = ssim(&self.slots[center_pos].luma, &slot.luma, &self.cfg.ssim)?;
                    self.ssim_cache.insert(key, v);
                    v
                }
            };
            flags.push((pos, score > self.cfg.ssim.similarity_threshold));
        }
        let neighbors: Vec<Neighbor<'_>> = flags
            .iter()
            .map(|&(pos, similar)| Neighbor {
                offset: self.slots[pos].seq as i64 - center as i64,
                detections: &self.slots[pos].detections,
                similar,
            })
            .collect();
        let result = judge(&self.slots[center_pos].detections, &neighbors, &self.cfg);

        self.next_center += 1;
        let keep_from = self.next_center.saturating_sub(h);
        while self.slots.front().is_some_and(|s| s.seq < keep_from) {
            self.slots.pop_front();
        }
        self.ssim_cache.retain(|&(a, _), _| a >= keep_from);
        Ok(result)
    }
}

/// Batch form of the streaming correlator.
pub fn process_sequence(
    frames: &[GrayFrame],
    detections: &[FrameDetections],
    cfg: &IscuConfig,
) -> Result<Vec<FilteredFrame>> {
    if frames.len() != detections.len() {
        return Err(Error::input(format!(
            "{} frames but {} detection arrays",
            frames.len(),
            detections.len()
        )));
    }
    let mut correlator = Correlator::new(*cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    for (frame, dets) in frames.iter().zip(detections) {
        out.extend(correlator.push_frame(frame, dets)?);
    }
    out.extend(correlator.flush()?);
    Ok(out)
}
