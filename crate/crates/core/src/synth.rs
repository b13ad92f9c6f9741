//! Deterministic synthetic video and detector output.
//!
//! Frames are a smooth, slowly panning background with a brighter ellipse
//! per polyp track. Scene breaks swap in a new background whose mean brightness
//! alternates between dark and bright, so frames on either side of a break
//! are never SSIM-similar while frames inside a scene always are.
//!
//! The simulated detector reports every visible polyp with bounded corner
//! jitter, drops true boxes in runs of `dropout_run` frames, and injects
//! spurious boxes that stay put for `fp_lifetime` frames. Spurious boxes are
//! placed clear of every polyp and of every other spurious box within
//! [`CLEARANCE_FRAMES`] frames, so each one is unambiguously false.
//!
//! # Randomness
//!
//! All randomness comes from `ChaCha8Rng` (crate `rand_chacha` 0.9), seeded
//! with `rng_seed` and split into independent streams:
//!
//! | stream            | use                                   |
//! |-------------------|---------------------------------------|
//! | 1                 | detector simulation                   |
//! | `16 + scene`      | background of each scene              |
//! | `2^32 + frame`    | per-pixel noise of each frame         |
//!
//! Generated scenarios are part of the test fixtures, so changing the
//! generator or the PRNG changes expected values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, FrameDetections, FrameMeta, GroundTruthBox, ScoredBox};
use crate::similarity::{GrayFrame, RgbFrame};

/// Frames on either side within which spurious boxes avoid polyps and each
/// other.
pub const CLEARANCE_FRAMES: usize = 4;

/// Largest allowed corner jitter, as a fraction of the frame dimensions.
pub const MAX_BOX_JITTER: f64 = 0.02;

const DETECTOR_STREAM: u64 = 1;
const SCENE_STREAM_BASE: u64 = 16;
const NOISE_STREAM_BASE: u64 = 1 << 32;
const PLACEMENT_ATTEMPTS: usize = 64;
const POLYP_CONTRAST: u8 = 50;

fn default_period() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    /// Box at the track's first frame, corner form.
    pub start: [f64; 4],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Radius of a circular wobble superimposed on the motion.
    #[serde(default)]
    pub wobble_amplitude: f64,
    #[serde(default = "default_period")]
    pub wobble_period: f64,
    #[serde(default)]
    pub first_frame: usize,
    /// Last visible frame, inclusive. Defaults to the end of the sequence.
    #[serde(default)]
    pub last_frame: Option<usize>,
    #[serde(default)]
    pub polyp_id: Option<String>,
}

impl TrackSpec {
    pub fn fixed(start: [f64; 4]) -> Self {
        Self {
            start,
            velocity: [0.0, 0.0],
            wobble_amplitude: 0.0,
            wobble_period: default_period(),
            first_frame: 0,
            last_frame: None,
            polyp_id: None,
        }
    }

    fn box_at(&self, t: usize) -> [f64; 4] {
        let dt = (t - self.first_frame) as f64;
        let phase = std::f64::consts::TAU * dt / self.wobble_period;
        let dx = self.velocity[0] * dt + self.wobble_amplitude * phase.sin();
        let dy = self.velocity[1] * dt + self.wobble_amplitude * (1.0 - phase.cos());
        let [a, b, c, d] = self.start;
        [a + dx, b + dy, c + dx, d + dy]
    }

    fn visible(&self, t: usize) -> bool {
        t >= self.first_frame && self.last_frame.is_none_or(|l| t <= l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceModel {
    pub tp_mean: f64,
    pub fp_mean: f64,
    /// Standard deviation of the clipped normal around either mean.
    pub jitter: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            tp_mean: 0.85,
            fp_mean: 0.6,
            jitter: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frame_w: u32,
    pub frame_h: u32,
    pub n_frames: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub tracks: Vec<TrackSpec>,
    /// Expected number of spurious boxes present in a frame.
    #[serde(default)]
    pub transient_fp_rate: f64,
    /// Frames each spurious box stays visible.
    #[serde(default = "one")]
    pub fp_lifetime: usize,
    /// Spurious box side range, as a fraction of the smaller frame dimension.
    #[serde(default = "default_fp_size")]
    pub fp_size: [f64; 2],
    /// Fraction of true boxes missing from the detector output.
    #[serde(default)]
    pub tp_dropout_rate: f64,
    /// Length of each run of consecutive misses. 1 gives independent
    /// per-frame misses.
    #[serde(default = "one")]
    pub dropout_run: usize,
    /// Bound on corner jitter of true boxes, as a fraction of frame size.
    #[serde(default)]
    pub box_jitter: f64,
    #[serde(default)]
    pub scene_break_frames: Vec<usize>,
    #[serde(default)]
    pub confidence: ConfidenceModel,
    /// Background pan in pixels per frame.
    #[serde(default = "default_pan")]
    pub pan_speed: f64,
    /// Per-pixel uniform noise amplitude.
    #[serde(default = "default_noise")]
    pub pixel_noise: u8,
}

fn one() -> usize {
    1
}

fn default_fp_size() -> [f64; 2] {
    [0.06, 0.14]
}

fn default_pan() -> f64 {
    0.5
}

fn default_noise() -> u8 {
    2
}

impl ScenarioConfig {
    /// Noise-free scenario with the given geometry and no tracks.
    pub fn blank(frame_w: u32, frame_h: u32, n_frames: usize, rng_seed: u64) -> Self {
        Self {
            frame_w,
            frame_h,
            n_frames,
            rng_seed,
            tracks: Vec::new(),
            transient_fp_rate: 0.0,
            fp_lifetime: 1,
            fp_size: default_fp_size(),
            tp_dropout_rate: 0.0,
            dropout_run: 1,
            box_jitter: 0.0,
            scene_break_frames: Vec::new(),
            confidence: ConfidenceModel::default(),
            pan_speed: default_pan(),
            pixel_noise: default_noise(),
        }
    }

    /// The reference noise scenario used to compare raw and filtered output:
    /// 320x240, 1000 frames, one wobbling polyp, 0.25 spurious boxes per frame
    /// living 3 frames each, 5% of true boxes lost in 16-frame runs.
    pub fn standard_noise(rng_seed: u64) -> Self {
        Self::standard_noise_sized(320, 240, 1000, rng_seed)
    }

    /// [`standard_noise`](Self::standard_noise) with the geometry scaled to
    /// another frame size and length.
    pub fn standard_noise_sized(frame_w: u32, frame_h: u32, n_frames: usize, rng_seed: u64) -> Self {
        let (w, h) = (f64::from(frame_w), f64::from(frame_h));
        let (bw, bh) = (w / 8.0, h / 6.0);
        let x0 = (w - bw) / 2.0;
        let y0 = (h - bh) / 2.0 - h / 12.0;
        let mut track = TrackSpec::fixed([x0, y0, x0 + bw, y0 + bh]);
        track.wobble_amplitude = 0.09375 * w.min(h * 4.0 / 3.0);
        track.wobble_period = 60.0;
        Self {
            tracks: vec![track],
            transient_fp_rate: 0.25,
            fp_lifetime: 3,
            tp_dropout_rate: 0.05,
            dropout_run: 16,
            box_jitter: 0.005,
            ..Self::blank(frame_w, frame_h, n_frames, rng_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_w == 0 || self.frame_h == 0 {
            return Err(Error::input("scenario frame size must be positive"));
        }
        if self.n_frames == 0 {
            return Err(Error::input("scenario needs at least one frame"));
        }
        for (name, v) in [
            ("transient_fp_rate", self.transient_fp_rate),
            ("tp_dropout_rate", self.tp_dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.tp_dropout_rate >= 1.0 && self.dropout_run > 1 {
            return Err(Error::input("dropout rate 1 cannot be split into runs"));
        }
        if self.fp_lifetime == 0 || self.dropout_run == 0 {
            return Err(Error::input("fp_lifetime and dropout_run must be at least 1"));
        }
        if !(0.0..=MAX_BOX_JITTER).contains(&self.box_jitter) {
            return Err(Error::input(format!(
                "box_jitter {} outside [0, {MAX_BOX_JITTER}]",
                self.box_jitter
            )));
        }
        let [lo, hi] = self.fp_size;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::input(format!("fp_size range {lo}..{hi} is invalid")));
        }
        let c = self.confidence;
        if !(c.jitter >= 0.0 && (0.0..=1.0).contains(&c.tp_mean) && (0.0..=1.0).contains(&c.fp_mean)) {
            return Err(Error::input("confidence model means must be in [0, 1] and jitter >= 0"));
        }
        if let Some(&b) = self.scene_break_frames.iter().find(|&&b| b == 0 || b >= self.n_frames) {
            return Err(Error::input(format!("scene break {b} outside 1..{}", self.n_frames)));
        }
        for (i, t) in self.tracks.iter().enumerate() {
            BoundingBox::try_from(t.start).map_err(|e| Error::input(format!("track {i}: {e}")))?;
            if t.wobble_period <= 0.0 {
                return Err(Error::input(format!("track {i}: wobble_period must be positive")));
            }
        }
        Ok(())
    }

    fn meta(&self, t: usize) -> FrameMeta {
        FrameMeta {
            width: self.frame_w,
            height: self.frame_h,
            frame_index: t as u64,
        }
    }

    fn polyp_id(&self, track: usize) -> String {
        self.tracks[track]
            .polyp_id
            .clone()
            .unwrap_or_else(|| format!("p{track}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<GrayFrame>,
    pub ground_truth: Vec<Vec<GroundTruthBox>>,
    pub raw_detections: Vec<FrameDetections>,
}

impl Scenario {
    /// Gray frame `i` replicated into RGB; converts back to luma exactly.
    pub fn rgb_frame(&self, i: usize) -> RgbFrame {
        let f = &self.frames[i];
        RgbFrame {
            width: f.width(),
            height: f.height(),
            data: f.samples().iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let ground_truth = ground_truth(cfg)?;
    let raw_detections = simulate_detector(&ground_truth, cfg)?;
    let renderer = FrameRenderer::new(cfg, &ground_truth)?;
    let frames = (0..cfg.n_frames).map(|t| renderer.render(t)).collect();
    Ok(Scenario {
        frames,
        ground_truth,
        raw_detections,
    })
}

/// Exact per-frame annotations for every visible track.
pub fn ground_truth(cfg: &ScenarioConfig) -> Result<Vec<Vec<GroundTruthBox>>> {
    cfg.validate()?;
    let mut out = vec![Vec::new(); cfg.n_frames];
    for (k, track) in cfg.tracks.iter().enumerate() {
        let id = cfg.polyp_id(k);
        for (t, frame) in out.iter_mut().enumerate() {
            if !track.visible(t) {
                continue;
            }
            let [a, b, c, d] = track.box_at(t);
            let Some(clipped) = BoundingBox::clip_to(a, b, c, d, &cfg.meta(t)) else {
                return Err(Error::input(format!("track {k} leaves the frame at frame {t}")));
            };
            frame.push(GroundTruthBox::from_corners(&clipped, id.clone()));
        }
    }
    Ok(out)
}

struct ClippedNormal(Normal<f64>);

impl ClippedNormal {
    fn new(mean: f64, sd: f64) -> Self {
        Self(Normal::new(mean, sd).expect("validated standard deviation"))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.0.sample(rng).clamp(0.0, 1.0)
    }
}

struct LiveFp {
    bbox: BoundingBox,
    confidence: f64,
    remaining: usize,
}

/// Detector output for the given ground truth.
pub fn simulate_detector(ground_truth: &[Vec<GroundTruthBox>], cfg: &ScenarioConfig) -> Result<Vec<FrameDetections>> {
    cfg.validate()?;
    if ground_truth.len() != cfg.n_frames {
        return Err(Error::input(format!(
            "{} ground-truth frames for a {}-frame scenario",
            ground_truth.len(),
            cfg.n_frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(DETECTOR_STREAM);
    let tp_conf = ClippedNormal::new(cfg.confidence.tp_mean, cfg.confidence.jitter);
    let fp_conf = ClippedNormal::new(cfg.confidence.fp_mean, cfg.confidence.jitter);

    // A run starts with probability a on a frame that is not already in one;
    // runs of length L then cover a/(a + (1 - a)/L) of the frames.
    let run = cfg.dropout_run as f64;
    let p = cfg.tp_dropout_rate;
    let start_prob = if p >= 1.0 { 1.0 } else { p / (p + run * (1.0 - p)) };
    let birth_prob = (cfg.transient_fp_rate / cfg.fp_lifetime as f64).min(1.0);

    let (w, h) = (f64::from(cfg.frame_w), f64::from(cfg.frame_h));
    let jx = cfg.box_jitter * w;
    let jy = cfg.box_jitter * h;

    let mut dropout_left: std::collections::HashMap<String, usize> = Default::default();
    let mut live: Vec<LiveFp> = Vec::new();
    let mut fp_history: Vec<Vec<BoundingBox>> = Vec::with_capacity(cfg.n_frames);
    let mut out = Vec::with_capacity(cfg.n_frames);

    for (t, gts) in ground_truth.iter().enumerate() {
        let meta = cfg.meta(t);
        let mut boxes = Vec::new();
        for g in gts {
            let left = dropout_left.entry(g.polyp_id.clone()).or_insert(0);
            if *left == 0 && rng.random_bool(start_prob) {
                *left = cfg.dropout_run;
            }
            if *left > 0 {
                *left -= 1;
                continue;
            }
            let c = g.corners();
            let mut jit = |v: f64, j: f64| if j > 0.0 { v + rng.random_range(-j..=j) } else { v };
            let (a, b, cc, d) = (jit(c.x_min(), jx), jit(c.y_min(), jy), jit(c.x_max(), jx), jit(c.y_max(), jy));
            let Some(bbox) = BoundingBox::clip_to(a, b, cc, d, &meta) else {
                continue;
            };
            boxes.push(ScoredBox::new(bbox, tp_conf.sample(&mut rng))?);
        }

        if birth_prob > 0.0 && rng.random_bool(birth_prob) {
            let lo = t.saturating_sub(CLEARANCE_FRAMES);
            let hi = (t + CLEARANCE_FRAMES).min(cfg.n_frames - 1);
            let side_range = cfg.fp_size[0] * w.min(h)..=cfg.fp_size[1] * w.min(h);
            for _ in 0..PLACEMENT_ATTEMPTS {
                let side = rng.random_range(side_range.clone());
                let aspect: f64 = rng.random_range(0.75..=1.33);
                let bw = (side * aspect.sqrt()).min(w);
                let bh = (side / aspect.sqrt()).min(h);
                let x = rng.random_range(0.0..=(w - bw));
                let y = rng.random_range(0.0..=(h - bh));
                let Ok(candidate) = BoundingBox::new(x, y, x + bw, y + bh) else {
                    continue;
                };
                let near_polyp = ground_truth[lo..=hi]
                    .iter()
                    .flatten()
                    .any(|g| iou(&g.corners(), &candidate) > 0.0);
                let near_fp = fp_history[lo..t]
                    .iter()
                    .flatten()
                    .chain(live.iter().map(|f| &f.bbox))
                    .any(|b| iou(b, &candidate) > 0.0);
                if !near_polyp && !near_fp {
                    live.push(LiveFp {
                        bbox: candidate,
                        confidence: fp_conf.sample(&mut rng),
                        remaining: cfg.fp_lifetime,
                    });
                    break;
                }
            }
        }
        let mut fps_here = Vec::with_capacity(live.len());
        for fp in &mut live {
            boxes.push(ScoredBox::new(fp.bbox, fp.confidence)?);
            fps_here.push(fp.bbox);
            fp.remaining -= 1;
        }
        live.retain(|f| f.remaining > 0);
        fp_history.push(fps_here);
        out.push(FrameDetections::new(meta, boxes));
    }
    Ok(out)
}

struct SceneBackground {
    base: f32,
    // (amplitude, angular frequency, phase) for the x wave, y wave and the
    // separable product wave.
    x_wave: (f32, f32, f32),
    y_wave: (f32, f32, f32),
    xy_wave: (f32, f32, f32, f32, f32),
}

impl SceneBackground {
    fn new(cfg: &ScenarioConfig, scene: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(SCENE_STREAM_BASE + scene as u64);
        let (w, h) = (cfg.frame_w as f32, cfg.frame_h as f32);
        let tau = std::f32::consts::TAU;
        let mut wave = |extent: f32, amp: f32| {
            let wavelength = rng.random_range(0.35..1.2) * extent;
            (amp, tau / wavelength, rng.random_range(0.0..tau))
        };
        let x_wave = wave(w, 25.0);
        let y_wave = wave(h, 20.0);
        let (a, fx, px) = wave(w, 15.0);
        let (_, fy, py) = wave(h, 0.0);
        Self {
            base: if scene.is_multiple_of(2) { 70.0 } else { 170.0 },
            x_wave,
            y_wave,
            xy_wave: (a, fx, px, fy, py),
        }
    }
}

/// Renders frames on demand so long or large sequences need not be held in
/// memory.
pub struct FrameRenderer {
    cfg: ScenarioConfig,
    scenes: Vec<(usize, SceneBackground)>,
    ellipses: Vec<Vec<BoundingBox>>,
}

impl FrameRenderer {
    pub fn new(cfg: &ScenarioConfig, ground_truth: &[Vec<GroundTruthBox>]) -> Result<Self> {
        cfg.validate()?;
        let mut starts: Vec<usize> = std::iter::once(0).chain(cfg.scene_break_frames.iter().copied()).collect();
        starts.sort_unstable();
        starts.dedup();
        let scenes = starts
            .iter()
            .enumerate()
            .map(|(k, &s)| (s, SceneBackground::new(cfg, k)))
            .collect();
        let ellipses = ground_truth
            .iter()
            .map(|g| g.iter().map(GroundTruthBox::corners).collect())
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            scenes,
            ellipses,
        })
    }

    pub fn len(&self) -> usize {
        self.cfg.n_frames
    }

    pub fn is_empty(&self) -> bool {
        self.cfg.n_frames == 0
    }

    pub fn render(&self, t: usize) -> GrayFrame {
        let (w, h) = (self.cfg.frame_w as usize, self.cfg.frame_h as usize);
        let bg = &self
            .scenes
            .iter()
            .rev()
            .find(|(start, _)| *start <= t)
            .expect("scene 0 starts at frame 0")
            .1;
        let shift = self.cfg.pan_speed as f32 * t as f32;
        let (ax, fx, px) = bg.x_wave;
        let (ay, fy, py) = bg.y_wave;
        let (axy, fxx, pxx, fyy, pyy) = bg.xy_wave;
        let x1: Vec<f32> = (0..w).map(|x| ax * (fx * (x as f32 + shift) + px).sin()).collect();
        let x2: Vec<f32> = (0..w).map(|x| axy * (fxx * (x as f32 + shift) + pxx).sin()).collect();
        let y1: Vec<f32> = (0..h).map(|y| bg.base + ay * (fy * y as f32 + py).sin()).collect();
        let y2: Vec<f32> = (0..h).map(|y| (fyy * y as f32 + pyy).sin()).collect();

        let mut samples = vec![0u8; w * h];
        for (y, row) in samples.chunks_exact_mut(w).enumerate() {
            let (b, s) = (y1[y], y2[y]);
            for ((px, &u), &v) in row.iter_mut().zip(&x1).zip(&x2) {
                *px = (b + u + v * s).clamp(0.0, 255.0) as u8;
            }
        }
        if t < self.ellipses.len() {
            for e in &self.ellipses[t] {
                draw_ellipse(&mut samples, w, h, e);
            }
        }
        if self.cfg.pixel_noise > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
            rng.set_stream(NOISE_STREAM_BASE + t as u64);
            let a = i16::from(self.cfg.pixel_noise);
            for px in samples.iter_mut() {
                let n: i16 = rng.random_range(-a..=a);
                *px = (i16::from(*px) + n).clamp(0, 255) as u8;
            }
        }
        GrayFrame::new(self.cfg.frame_w, self.cfg.frame_h, samples).expect("sized from config")
    }
}

fn draw_ellipse(samples: &mut [u8], w: usize, h: usize, b: &BoundingBox) {
    let (cx, cy) = b.center();
    let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
    let y0 = b.y_min().floor() as usize;
    let y1 = (b.y_max().ceil() as usize).min(h);
    let x0 = b.x_min().floor() as usize;
    let x1 = (b.x_max().ceil() as usize).min(w);
    for y in y0..y1 {
        let dy = (y as f64 + 0.5 - cy) / ry;
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            if dx * dx + dy * dy <= 1.0 {
                samples[y * w + x] = samples[y * w + x].saturating_add(POLYP_CONTRAST);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{ssim, to_luma, SsimParams};

    fn one_track(n: usize, seed: u64) -> ScenarioConfig {
        let mut t = TrackSpec::fixed([100.0, 60.0, 140.0, 100.0]);
        t.wobble_amplitude = 20.0;
        ScenarioConfig {
            tracks: vec![t],
            ..ScenarioConfig::blank(320, 240, n, seed)
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig {
            scene_break_frames: vec![5],
            ..ScenarioConfig::standard_noise(9)
        };
        let cfg = ScenarioConfig { n_frames: 40, ..cfg };
        assert_eq!(generate_scenario(&cfg).unwrap(), generate_scenario(&cfg).unwrap());
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let s = generate_scenario(&one_track(50, 1)).unwrap();
        for (d, g) in s.raw_detections.iter().zip(&s.ground_truth) {
            let got: Vec<[f64; 4]> = d.boxes().iter().map(|b| b.bbox.to_array()).collect();
            let want: Vec<[f64; 4]> = g.iter().map(|g| g.corners().to_array()).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn dropout_count_is_binomial() {
        let cfg = ScenarioConfig {
            tp_dropout_rate: 0.1,
            ..one_track(1000, 77)
        };
        let gt = ground_truth(&cfg).unwrap();
        let dets = simulate_detector(&gt, &cfg).unwrap();
        let dropped = dets.iter().filter(|d| d.nb() == 0).count();
        // 99% two-sided interval of Binomial(1000, 0.1) is [76, 125].
        assert!((76..=125).contains(&dropped), "{dropped}");
    }

    #[test]
    fn dropout_runs_have_fixed_length() {
        let cfg = ScenarioConfig {
            tp_dropout_rate: 0.05,
            dropout_run: 8,
            ..one_track(2000, 3)
        };
        let gt = ground_truth(&cfg).unwrap();
        let dets = simulate_detector(&gt, &cfg).unwrap();
        let mut run = 0;
        let mut runs = Vec::new();
        for d in &dets {
            if d.nb() == 0 {
                run += 1;
            } else if run > 0 {
                runs.push(run);
                run = 0;
            }
        }
        assert!(!runs.is_empty());
        assert!(runs.iter().all(|r| r % 8 == 0), "{runs:?}");
    }

    #[test]
    fn single_frame_fps_never_repeat_in_place() {
        let cfg = ScenarioConfig {
            transient_fp_rate: 0.8,
            ..one_track(400, 5)
        };
        let s = generate_scenario(&cfg).unwrap();
        for t in 1..s.raw_detections.len() {
            for a in s.raw_detections[t].boxes() {
                for b in s.raw_detections[t - 1].boxes() {
                    let is_truth = |x: &ScoredBox, f: usize| {
                        s.ground_truth[f].iter().any(|g| g.corners() == x.bbox)
                    };
                    if !is_truth(a, t) && !is_truth(b, t - 1) {
                        assert!(iou(&a.bbox, &b.bbox) <= 0.5);
                    }
                }
            }
        }
    }

    #[test]
    fn jittered_boxes_stay_bounded() {
        let cfg = ScenarioConfig {
            box_jitter: 0.02,
            confidence: ConfidenceModel {
                tp_mean: 0.95,
                fp_mean: 0.1,
                jitter: 0.4,
            },
            transient_fp_rate: 0.5,
            ..one_track(200, 8)
        };
        let s = generate_scenario(&cfg).unwrap();
        for (d, g) in s.raw_detections.iter().zip(&s.ground_truth) {
            for b in d.boxes() {
                assert!((0.0..=1.0).contains(&b.confidence()));
            }
            let truth = g[0].corners();
            let closest = d
                .boxes()
                .iter()
                .map(|b| {
                    let (u, v) = (b.bbox.to_array(), truth.to_array());
                    (u[0] - v[0]).abs().max((u[2] - v[2]).abs()) / 320.0
                })
                .fold(f64::INFINITY, f64::min);
            assert!(closest <= 0.02 + 1e-12);
        }
        assert!(ScenarioConfig { box_jitter: 0.03, ..one_track(5, 1) }.validate().is_err());
    }

    #[test]
    fn infeasible_track_rejected() {
        let mut cfg = one_track(100, 1);
        cfg.tracks[0].velocity = [10.0, 0.0];
        assert!(matches!(generate_scenario(&cfg), Err(Error::Input(_))));
    }

    #[test]
    fn similarity_within_and_across_scenes() {
        let cfg = ScenarioConfig {
            scene_break_frames: vec![20, 21, 40],
            ..ScenarioConfig::standard_noise(4)
        };
        let cfg = ScenarioConfig { n_frames: 60, ..cfg };
        let s = generate_scenario(&cfg).unwrap();
        let p = SsimParams::default();
        let small: Vec<_> = s.frames.iter().map(|f| p.prepare(f).unwrap()).collect();
        for t in 1..small.len() {
            for d in 1..=CLEARANCE_FRAMES.min(t) {
                let v = ssim(&small[t - d], &small[t], &p).unwrap();
                let crosses = cfg.scene_break_frames.iter().any(|&b| b > t - d && b <= t);
                if crosses {
                    if d == 1 {
                        assert!(v < 0.85, "break at {t}: {v}");
                    }
                } else {
                    assert!(v > 0.85, "frames {} and {t}: {v}", t - d);
                }
            }
        }
    }

    #[test]
    fn rgb_export_round_trips_through_luma() {
        let s = generate_scenario(&one_track(3, 2)).unwrap();
        assert_eq!(to_luma(&s.rgb_frame(1)).unwrap(), s.frames[1]);
    }
}
