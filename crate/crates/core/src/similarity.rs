//! Luma frames and the structural similarity index between them.
//!
//! SSIM is the product of a luminance, a contrast and a structure term, each
//! regularized by a small constant derived from the dynamic range:
//!
//! ```text
//! l   = (2 mu_x mu_y + b1) / (mu_x^2 + mu_y^2 + b1)
//! con = (2 s_x s_y + b2)   / (s_x^2 + s_y^2 + b2)
//! s   = (s_xy + b3)        / (s_x s_y + b3)
//! b1 = (k1 L)^2, b2 = (k2 L)^2, b3 = b2 / 2
//! ```
//!
//! Statistics use the population (divide by N) convention. In the default
//! global mode they are taken over the whole frame; windowed mode averages the
//! index over a grid of square windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit luma raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!("frame dimensions {width}x{height} must be positive")));
        }
        let expected = width as usize * height as usize;
        if samples.len() != expected {
            return Err(Error::input(format!(
                "{width}x{height} frame needs {expected} samples, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Rec.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
pub fn to_luma(rgb: &RgbFrame) -> Result<GrayFrame> {
    let n = rgb.width as usize * rgb.height as usize;
    if rgb.data.len() != n * 3 {
        return Err(Error::input(format!(
            "{}x{} RGB raster needs {} bytes, got {}",
            rgb.width,
            rgb.height,
            n * 3,
            rgb.data.len()
        )));
    }
    // Integer weights keep the rounding exact.
    let samples = rgb
        .data
        .chunks_exact(3)
        .map(|p| {
            let v = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
            ((v + 500) / 1000) as u8
        })
        .collect();
    GrayFrame::new(rgb.width, rgb.height, samples)
}

/// Area-average resampling to `target_w x target_h`.
///
/// Every output pixel is the exact area-weighted mean of the source pixels it
/// covers, rounded half up. The arithmetic is done in integers so the result
/// does not depend on floating-point evaluation order.
pub fn downsample(g: &GrayFrame, target_w: u32, target_h: u32) -> Result<GrayFrame> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::input("downsample target must be non-empty"));
    }
    if target_w > g.width || target_h > g.height {
        return Err(Error::input(format!(
            "cannot downsample {}x{} to larger {target_w}x{target_h}",
            g.width, g.height
        )));
    }
    if target_w == g.width && target_h == g.height {
        return Ok(g.clone());
    }
    if g.width.is_multiple_of(target_w) && g.height.is_multiple_of(target_h) {
        return Ok(downsample_integral(g, g.width / target_w, g.height / target_h));
    }

    let (sw, sh) = (g.width as usize, g.height as usize);
    let (tw, th) = (target_w as usize, target_h as usize);
    let xw = axis_weights(sw, tw);
    let yw = axis_weights(sh, th);

    // Horizontal pass: each weight is in units of 1/tw source pixels.
    let mut rows = vec![0u64; sh * tw];
    for y in 0..sh {
        let src = &g.samples[y * sw..(y + 1) * sw];
        let dst = &mut rows[y * tw..(y + 1) * tw];
        for (ox, taps) in xw.iter().enumerate() {
            dst[ox] = taps
                .iter()
                .map(|&(i, w)| w * u64::from(src[i]))
                .sum();
        }
    }
    let denom = (sw * sh) as u64;
    let mut out = Vec::with_capacity(tw * th);
    for taps in &yw {
        for ox in 0..tw {
            let acc: u64 = taps.iter().map(|&(j, w)| w * rows[j * tw + ox]).sum();
            out.push(((2 * acc + denom) / (2 * denom)) as u8);
        }
    }
    GrayFrame::new(target_w, target_h, out)
}

/// Source taps per output cell. In units where a source pixel spans `dst`
/// and an output cell spans `src`, every overlap is an integer.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|o| {
            let lo = o * src;
            let hi = (o + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .filter_map(|i| {
                    let a = (i * dst).max(lo);
                    let b = ((i + 1) * dst).min(hi);
                    (b > a).then(|| (i, (b - a) as u64))
                })
                .collect()
        })
        .collect()
}

fn downsample_integral(g: &GrayFrame, fx: u32, fy: u32) -> GrayFrame {
    let (fx, fy) = (fx as usize, fy as usize);
    let sw = g.width as usize;
    let tw = sw / fx;
    let th = g.height as usize / fy;
    let area = (fx * fy) as u32;
    let mut acc = vec![0u32; tw];
    let mut out = Vec::with_capacity(tw * th);
    for oy in 0..th {
        acc.iter_mut().for_each(|a| *a = 0);
        for row in g.samples[oy * fy * sw..(oy + 1) * fy * sw].chunks_exact(sw) {
            for (a, block) in acc.iter_mut().zip(row.chunks_exact(fx)) {
                *a += block.iter().map(|&v| u32::from(v)).sum::<u32>();
            }
        }
        out.extend(acc.iter().map(|&s| ((2 * s + area) / (2 * area)) as u8));
    }
    GrayFrame {
        width: tw as u32,
        height: th as u32,
        samples: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SsimMode {
    Global,
    Windowed { window_size: u32, stride: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the samples.
    pub dynamic_range: f64,
    pub mode: SsimMode,
    pub downsample_w: u32,
    pub downsample_h: u32,
    /// Two frames are "similar" when their SSIM is strictly above this.
    pub similarity_threshold: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            mode: SsimMode::Global,
            downsample_w: 160,
            downsample_h: 120,
            similarity_threshold: 0.85,
        }
    }
}

impl SsimParams {
    pub const DEFAULT_WINDOW: SsimMode = SsimMode::Windowed {
        window_size: 8,
        stride: 4,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::input("k1, k2 and dynamic_range must be positive"));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::input(format!(
                "similarity threshold {} outside (0, 1]",
                self.similarity_threshold
            )));
        }
        if self.downsample_w == 0 || self.downsample_h == 0 {
            return Err(Error::input("downsample size must be positive"));
        }
        if let SsimMode::Windowed { window_size, stride } = self.mode {
            if window_size == 0 || stride == 0 {
                return Err(Error::input("window size and stride must be positive"));
            }
        }
        Ok(())
    }

    pub fn b1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn b2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn b3(&self) -> f64 {
        self.b2() / 2.0
    }

    /// Working resolution for a source frame: the configured size, never
    /// larger than the source.
    pub fn working_size(&self, width: u32, height: u32) -> (u32, u32) {
        (self.downsample_w.min(width), self.downsample_h.min(height))
    }

    /// Reduces a full-resolution frame to the working resolution.
    pub fn prepare(&self, frame: &GrayFrame) -> Result<GrayFrame> {
        let (w, h) = self.working_size(frame.width, frame.height);
        downsample(frame, w, h)
    }
}

/// SSIM between two equally sized frames, as given (no downsampling).
pub fn ssim(x: &GrayFrame, y: &GrayFrame, p: &SsimParams) -> Result<f64> {
    if x.width != y.width || x.height != y.height {
        return Err(Error::input(format!(
            "SSIM needs equal dimensions, got {}x{} and {}x{}",
            x.width, x.height, y.width, y.height
        )));
    }
    match p.mode {
        SsimMode::Global => {
            let s = Sums::over(x, y, 0, 0, x.width, x.height);
            Ok(s.ssim(p))
        }
        SsimMode::Windowed { window_size, stride } => {
            let ww = window_size.min(x.width);
            let wh = window_size.min(x.height);
            let mut total = 0.0;
            let mut count = 0usize;
            let mut oy = 0;
            while oy + wh <= x.height {
                let mut ox = 0;
                while ox + ww <= x.width {
                    total += Sums::over(x, y, ox, oy, ww, wh).ssim(p);
                    count += 1;
                    ox += stride;
                }
                oy += stride;
            }
            Ok(total / count as f64)
        }
    }
}

/// Exact integer moments of a pair of windows.
struct Sums {
    n: u64,
    sx: u64,
    sy: u64,
    sxx: u64,
    syy: u64,
    sxy: u64,
}

impl Sums {
    fn over(x: &GrayFrame, y: &GrayFrame, ox: u32, oy: u32, w: u32, h: u32) -> Self {
        let stride = x.width as usize;
        let mut s = Sums {
            n: u64::from(w) * u64::from(h),
            sx: 0,
            sy: 0,
            sxx: 0,
            syy: 0,
            sxy: 0,
        };
        for row in oy as usize..(oy + h) as usize {
            let start = row * stride + ox as usize;
            let xs = &x.samples[start..start + w as usize];
            let ys = &y.samples[start..start + w as usize];
            // Per-row partials fit in u32 for any row shorter than 66k pixels.
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0u32, 0u32, 0u64, 0u64, 0u64);
            for (&a, &b) in xs.iter().zip(ys) {
                let (a, b) = (u32::from(a), u32::from(b));
                sx += a;
                sy += b;
                sxx += u64::from(a * a);
                syy += u64::from(b * b);
                sxy += u64::from(a * b);
            }
            s.sx += u64::from(sx);
            s.sy += u64::from(sy);
            s.sxx += sxx;
            s.syy += syy;
            s.sxy += sxy;
        }
        s
    }

    fn ssim(&self, p: &SsimParams) -> f64 {
        let n = self.n as f64;
        let nn = (self.n as i128) * (self.n as i128);
        // N * sum(ab) - sum(a) sum(b) is exact in i128.
        let central = |sab: u64, sa: u64, sb: u64| -> f64 {
            let num = self.n as i128 * sab as i128 - sa as i128 * sb as i128;
            num as f64 / nn as f64
        };
        let mx = self.sx as f64 / n;
        let my = self.sy as f64 / n;
        let vx = central(self.sxx, self.sx, self.sx);
        let vy = central(self.syy, self.sy, self.sy);
        let cxy = central(self.sxy, self.sx, self.sy);
        ssim_from_moments(mx, my, vx, vy, cxy, p)
    }
}

fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, p: &SsimParams) -> f64 {
    let (b1, b2, b3) = (p.b1(), p.b2(), p.b3());
    let sx = vx.max(0.0).sqrt();
    let sy = vy.max(0.0).sqrt();
    let luminance = (2.0 * mx * my + b1) / (mx * mx + my * my + b1);
    let contrast = (2.0 * sx * sy + b2) / (vx + vy + b2);
    let structure = (cxy + b3) / (sx * sy + b3);
    luminance * contrast * structure
}

/// Indices of the neighbors whose SSIM with `current` is strictly above the
/// similarity threshold, in input order.
pub fn similar_frames(
    current: &GrayFrame,
    neighbors: &[GrayFrame],
    p: &SsimParams,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, n) in neighbors.iter().enumerate() {
        if ssim(current, n, p)? > p.similarity_threshold {
            out.push(i);
        }
    }
    Ok(out)
}
