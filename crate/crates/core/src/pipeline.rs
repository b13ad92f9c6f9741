//! Whole-sequence workflows: streaming filter, evaluation against ground
//! truth, window-size sweeps and the correlator timing benchmark.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::correlator::{Correlator, FilteredFrame, IscuConfig};
use crate::error::{Error, Result};
use crate::geometry::{FrameDetections, GroundTruthBox, ScoredBox};
use crate::metrics::{evaluate, mpt, EvalFrame, EvalReport};
use crate::similarity::GrayFrame;
use crate::synth::{ground_truth, simulate_detector, FrameRenderer, ScenarioConfig};

/// Frames produced on demand by index.
pub type FrameSource<'a> = &'a dyn Fn(usize) -> Result<GrayFrame>;

/// Runs the correlator over `detections`, fetching frame `i` from `frames`.
pub fn filter_stream(frames: FrameSource<'_>, detections: &[FrameDetections], cfg: &IscuConfig) -> Result<Vec<FilteredFrame>> {
    let mut c = Correlator::new(*cfg)?;
    let mut out = Vec::with_capacity(detections.len());
    for (i, d) in detections.iter().enumerate() {
        out.extend(c.push_frame(&frames(i)?, d)?);
    }
    out.extend(c.flush()?);
    Ok(out)
}

/// Pairs per-frame boxes with ground truth. The shorter side is padded
/// with empty frames.
pub fn eval_frames<I>(boxes: I, gts: &[Vec<GroundTruthBox>]) -> Vec<EvalFrame>
where
    I: IntoIterator<Item = Vec<ScoredBox>>,
{
    let mut frames: Vec<EvalFrame> = boxes
        .into_iter()
        .map(|detections| EvalFrame {
            detections,
            ground_truth: Vec::new(),
        })
        .collect();
    if frames.len() < gts.len() {
        frames.resize_with(gts.len(), EvalFrame::default);
    }
    for (f, g) in frames.iter_mut().zip(gts) {
        f.ground_truth = g.iter().map(|g| (g.polyp_id.clone(), g.corners())).collect();
    }
    frames
}

pub fn raw_boxes(detections: &[FrameDetections]) -> impl Iterator<Item = Vec<ScoredBox>> + '_ {
    detections.iter().map(|d| d.boxes().to_vec())
}

pub fn filtered_boxes(filtered: &[FilteredFrame]) -> impl Iterator<Item = Vec<ScoredBox>> + '_ {
    filtered.iter().map(|f| f.boxes().copied().collect())
}

/// One sequence of a sweep.
pub struct SweepInput<'a> {
    pub name: String,
    pub frames: FrameSource<'a>,
    pub detections: Vec<FrameDetections>,
    pub ground_truth: Vec<Vec<GroundTruthBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub half_window: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Unfiltered detector output, for reference.
    pub raw: EvalReport,
    pub rows: Vec<SweepRow>,
}

/// Filters every sequence once per window size and evaluates the pooled
/// result. Each run uses [`IscuConfig::with_half_window`].
pub fn sweep(inputs: &[SweepInput<'_>], half_windows: &[usize], base: &IscuConfig, iou_cut: f64) -> Result<SweepReport> {
    if inputs.is_empty() {
        return Err(Error::input("sweep needs at least one sequence"));
    }
    let pooled = |per_seq: Vec<Vec<EvalFrame>>| {
        let seqs: Vec<(&str, &[EvalFrame])> = inputs
            .iter()
            .zip(&per_seq)
            .map(|(i, f)| (i.name.as_str(), f.as_slice()))
            .collect();
        evaluate(seqs, iou_cut)
    };
    let raw = pooled(
        inputs
            .iter()
            .map(|i| eval_frames(raw_boxes(&i.detections), &i.ground_truth))
            .collect(),
    )?;
    let mut rows = Vec::with_capacity(half_windows.len());
    for &h in half_windows {
        let cfg = base.with_half_window(h);
        let mut per_seq = Vec::with_capacity(inputs.len());
        for i in inputs {
            let filtered = filter_stream(i.frames, &i.detections, &cfg)?;
            per_seq.push(eval_frames(filtered_boxes(&filtered), &i.ground_truth));
        }
        rows.push(SweepRow {
            half_window: h,
            report: pooled(per_seq)?,
        });
    }
    Ok(SweepReport { raw, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub half_window: usize,
    /// Mean correlator time per frame (push plus its share of the final
    /// flush), excluding frame loading.
    pub mpt_ms: f64,
    pub max_push_ms: f64,
    pub total_ms: f64,
}

/// Times the correlator over `n` frames. `source` is called outside the
/// timed region.
pub fn bench<F>(n: usize, cfg: &IscuConfig, mut source: F) -> Result<BenchReport>
where
    F: FnMut(usize) -> Result<(GrayFrame, FrameDetections)>,
{
    if n == 0 {
        return Err(Error::input("bench needs at least one frame"));
    }
    let mut c = Correlator::new(*cfg)?;
    let mut times: Vec<Duration> = Vec::with_capacity(n);
    let mut dims = (0, 0);
    for i in 0..n {
        let (frame, dets) = source(i)?;
        dims = (frame.width(), frame.height());
        let start = Instant::now();
        let out = c.push_frame(&frame, &dets)?;
        times.push(start.elapsed());
        drop(out);
    }
    let start = Instant::now();
    let tail = c.flush()?;
    let flush_time = start.elapsed();
    drop(tail);
    let max_push = times.iter().max().copied().unwrap_or_default();
    *times.last_mut().expect("n > 0") += flush_time;
    let total: Duration = times.iter().sum();
    Ok(BenchReport {
        frames: n,
        width: dims.0,
        height: dims.1,
        half_window: cfg.half_window,
        mpt_ms: mpt(&times)?,
        max_push_ms: max_push.as_secs_f64() * 1e3,
        total_ms: total.as_secs_f64() * 1e3,
    })
}

/// Benchmarks on the standard noise scenario rendered at `width x height`,
/// generating each frame just before it is pushed.
pub fn bench_synthetic(width: u32, height: u32, n: usize, seed: u64, cfg: &IscuConfig) -> Result<BenchReport> {
    let scenario = ScenarioConfig::standard_noise_sized(width, height, n, seed);
    let gt = ground_truth(&scenario)?;
    let dets = simulate_detector(&gt, &scenario)?;
    let renderer = FrameRenderer::new(&scenario, &gt)?;
    bench(n, cfg, |i| Ok((renderer.render(i), dets[i].clone())))
}
