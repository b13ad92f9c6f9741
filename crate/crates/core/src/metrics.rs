//! Polyp-level detection metrics.
//!
//! Matching is per frame. A detection whose IoU with a ground-truth box is
//! above the cut is a true positive the first time that ground truth is hit;
//! later hits on the same ground truth are duplicates and are neither TP nor
//! FP. A detection overlapping no ground truth is a false positive. A frame
//! with no ground truth and no output counts as one true negative.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, ScoredBox};

pub const DEFAULT_IOU_CUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// Detections that re-hit an already matched ground truth.
    pub duplicates: u64,
}

impl std::ops::AddAssign for FrameOutcome {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.duplicates += o.duplicates;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionClass {
    TruePositive,
    FalsePositive,
    Duplicate,
}

/// Full assignment for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// Class of each detection, in input order.
    pub classes: Vec<DetectionClass>,
    /// Whether each ground truth was detected, in input order.
    pub detected: Vec<bool>,
}

impl FrameMatch {
    pub fn outcome(&self) -> FrameOutcome {
        let count = |c| self.classes.iter().filter(|&&x| x == c).count() as u64;
        FrameOutcome {
            tp: count(DetectionClass::TruePositive),
            fp: count(DetectionClass::FalsePositive),
            fn_: self.detected.iter().filter(|d| !**d).count() as u64,
            tn: u64::from(self.classes.is_empty() && self.detected.is_empty()),
            duplicates: count(DetectionClass::Duplicate),
        }
    }
}

/// Greedy assignment in descending confidence (ties keep input order). Each
/// detection claims the unclaimed overlapping ground truth with the highest
/// IoU.
pub fn match_detections(dets: &[ScoredBox], gts: &[BoundingBox], iou_cut: f64) -> FrameMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence().total_cmp(&dets[a].confidence()));
    let mut detected = vec![false; gts.len()];
    let mut classes = vec![DetectionClass::FalsePositive; dets.len()];
    for i in order {
        let mut any = false;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(&dets[i].bbox, gt);
            if v > iou_cut {
                any = true;
                if !detected[g] && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
        }
        classes[i] = match (any, best) {
            (_, Some((g, _))) => {
                detected[g] = true;
                DetectionClass::TruePositive
            }
            (true, None) => DetectionClass::Duplicate,
            (false, None) => DetectionClass::FalsePositive,
        };
    }
    FrameMatch { classes, detected }
}

pub fn match_frame(dets: &[ScoredBox], gts: &[BoundingBox], iou_cut: f64) -> FrameOutcome {
    match_detections(dets, gts, iou_cut).outcome()
}

/// Totals plus every derived metric. Percentages are `None` where their
/// denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub negative_frames: u64,
    pub sen: Option<f64>,
    pub pre: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    /// False positives per frame.
    pub mnfp: f64,
    pub pdr: Option<f64>,
    /// Area under the precision/sensitivity curve, in `[0, 1]`.
    pub map: Option<f64>,
    pub mpt_ms: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64, negative_frames: u64, frames: u64) -> Result<Self> {
        if frames == 0 {
            return Err(Error::input("cannot aggregate zero frames"));
        }
        let sen = ratio(tp, tp + fn_);
        let pre = ratio(tp, tp + fp);
        let spe = ratio(tn, negative_frames);
        let f1 = match (sen, pre) {
            (Some(s), Some(p)) if s + p > 0.0 => Some(2.0 * s * p / (s + p)),
            _ => None,
        };
        let f2 = match (sen, pre) {
            (Some(s), Some(p)) if s + 4.0 * p > 0.0 => Some(5.0 * s * p / (s + 4.0 * p)),
            _ => None,
        };
        let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
        Ok(Self {
            frames,
            tp,
            fp,
            fn_,
            tn,
            negative_frames,
            sen: pct(sen),
            pre: pct(pre),
            spe: pct(spe),
            f1: pct(f1),
            f2: pct(f2),
            mnfp: fp as f64 / frames as f64,
            pdr: None,
            map: None,
            mpt_ms: None,
        })
    }
}

pub fn aggregate(outcomes: &[FrameOutcome], n_negative_frames: u64) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(Error::input("cannot aggregate zero frames"));
    }
    let mut t = FrameOutcome::default();
    for o in outcomes {
        t += *o;
    }
    EvalReport::from_counts(t.tp, t.fp, t.fn_, t.tn, n_negative_frames, outcomes.len() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// Precision/recall at every distinct detection score, highest score first.
///
/// Greedy matching in descending confidence is prefix-stable: lowering the
/// threshold never changes the class of an already admitted detection. One
/// full matching per frame therefore classifies every detection for every
/// threshold at once.
pub fn pr_curve(dets: &[Vec<ScoredBox>], gts: &[Vec<BoundingBox>], iou_cut: f64) -> Result<Vec<PrPoint>> {
    if dets.len() != gts.len() {
        return Err(Error::input(format!(
            "{} detection frames but {} ground-truth frames",
            dets.len(),
            gts.len()
        )));
    }
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::input("average precision needs at least one ground truth"));
    }
    let mut scored: Vec<(f64, DetectionClass)> = Vec::new();
    for (d, g) in dets.iter().zip(gts) {
        let m = match_detections(d, g, iou_cut);
        scored.extend(d.iter().map(|b| b.confidence()).zip(m.classes));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            match scored[i].1 {
                DetectionClass::TruePositive => tp += 1,
                DetectionClass::FalsePositive => fp += 1,
                DetectionClass::Duplicate => {}
            }
            i += 1;
        }
        if tp + fp > 0 {
            points.push(PrPoint {
                recall: tp as f64 / total_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
                threshold,
            });
        }
    }
    Ok(points)
}

/// All-points interpolated area under a precision/recall staircase.
pub fn area_under_pr(points: &[PrPoint]) -> f64 {
    let mut envelope: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in envelope {
        area += (r - prev_recall) * p;
        prev_recall = r;
    }
    area
}

pub fn average_precision(dets: &[Vec<ScoredBox>], gts: &[Vec<BoundingBox>], iou_cut: f64) -> Result<f64> {
    Ok(area_under_pr(&pr_curve(dets, gts, iou_cut)?))
}

/// Tracks, per individual polyp, whether it was detected at least once.
#[derive(Debug, Clone, Default)]
pub struct PolypTally {
    seen: BTreeMap<String, bool>,
}

impl PolypTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, polyp: &str, detected: bool) {
        let e = self.seen.entry(polyp.to_owned()).or_insert(false);
        *e |= detected;
    }

    pub fn polyps(&self) -> usize {
        self.seen.len()
    }

    pub fn detected(&self) -> usize {
        self.seen.values().filter(|d| **d).count()
    }

    pub fn flags(&self) -> impl Iterator<Item = (&str, bool)> {
        self.seen.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn pdr(&self) -> Option<f64> {
        pdr(self.seen.values().copied())
    }
}

/// Percentage of polyps detected at least once.
pub fn pdr(flags: impl IntoIterator<Item = bool>) -> Option<f64> {
    let (mut n, mut hit) = (0u64, 0u64);
    for f in flags {
        n += 1;
        hit += u64::from(f);
    }
    ratio(hit, n).map(|r| 100.0 * r)
}

/// Mean processing time per frame, in milliseconds.
pub fn mpt(durations: &[Duration]) -> Result<f64> {
    if durations.is_empty() {
        return Err(Error::input("mean processing time needs at least one frame"));
    }
    let total: Duration = durations.iter().sum();
    Ok(total.as_secs_f64() * 1000.0 / durations.len() as f64)
}

/// One annotated frame: detections and ground truths with polyp identities.
#[derive(Debug, Clone, Default)]
pub struct EvalFrame {
    pub detections: Vec<ScoredBox>,
    pub ground_truth: Vec<(String, BoundingBox)>,
}

/// Evaluates sequences of frames. Polyp identities are scoped by sequence
/// name, so `p1` in two videos counts as two polyps.
pub fn evaluate<'a, I>(sequences: I, iou_cut: f64) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a str, &'a [EvalFrame])>,
{
    let mut outcomes = Vec::new();
    let mut negatives = 0u64;
    let mut tally = PolypTally::new();
    let mut all_dets = Vec::new();
    let mut all_gts = Vec::new();
    for (name, frames) in sequences {
        for f in frames {
            let gts: Vec<BoundingBox> = f.ground_truth.iter().map(|(_, b)| *b).collect();
            let m = match_detections(&f.detections, &gts, iou_cut);
            for ((id, _), hit) in f.ground_truth.iter().zip(&m.detected) {
                tally.record(&format!("{name}/{id}"), *hit);
            }
            negatives += u64::from(gts.is_empty());
            outcomes.push(m.outcome());
            all_dets.push(f.detections.clone());
            all_gts.push(gts);
        }
    }
    let mut report = aggregate(&outcomes, negatives)?;
    let total_gt = report.tp + report.fn_;
    let gt_boxes: u64 = all_gts.iter().map(|g| g.len() as u64).sum();
    if total_gt != gt_boxes {
        return Err(Error::Invariant(format!(
            "TP + FN = {total_gt} but the dataset holds {gt_boxes} ground-truth boxes"
        )));
    }
    report.pdr = tally.pdr();
    if gt_boxes > 0 {
        report.map = Some(average_precision(&all_dets, &all_gts, iou_cut)?);
    }
    Ok(report)
}
