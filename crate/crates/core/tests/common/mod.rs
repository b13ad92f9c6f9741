//! Shared test helpers: a direct, window-materializing reference of the
//! correlator and a naive SSIM.
#![allow(dead_code)]

use framecorr::{ssim, BoundingBox, FrameDetections, GrayFrame, IscuConfig, Origin, ScoredBox};

/// Output of the reference for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RefFrame {
    pub kept: Vec<ScoredBox>,
    pub added: Vec<ScoredBox>,
}

fn area(b: &[f64; 4]) -> f64 {
    (b[2] - b[0]) * (b[3] - b[1])
}

pub fn ref_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (area(a) + area(b) - inter)
}

/// Builds every window from scratch: for frame `t`, the neighbors are the
/// frames within `half_window` of it that exist.
pub fn reference(frames: &[GrayFrame], dets: &[FrameDetections], cfg: &IscuConfig) -> Vec<RefFrame> {
    let n = frames.len();
    let h = cfg.half_window;
    let small: Vec<GrayFrame> = frames.iter().map(|f| cfg.ssim.prepare(f).unwrap()).collect();
    let gated: Vec<Vec<ScoredBox>> = dets
        .iter()
        .map(|d| d.boxes().iter().copied().filter(|b| b.confidence() > cfg.confidence_gate).collect())
        .collect();

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let lo = t.saturating_sub(h);
        let hi = (t + h).min(n - 1);
        let window: Vec<usize> = (lo..=hi).filter(|&j| j != t).collect();
        let similar: Vec<bool> = window
            .iter()
            .map(|&j| ssim(&small[t], &small[j], &cfg.ssim).unwrap() > cfg.ssim.similarity_threshold)
            .collect();
        let m = similar.iter().filter(|&&s| s).count();
        let (fw, fh) = (f64::from(dets[t].meta.width), f64::from(dets[t].meta.height));

        let mut kept = Vec::new();
        for c in &gated[t] {
            let cb = c.bbox.to_array();
            let th = 0.5 * ((cb[2] - cb[0]) / fw + (cb[3] - cb[1]) / fh);
            let hit = |j: usize| gated[j].iter().any(|b| ref_iou(&b.bbox.to_array(), &cb) > th);
            let keep = if window.is_empty() {
                true
            } else if m > 0 {
                let hits = window.iter().zip(&similar).filter(|(&j, &s)| s && hit(j)).count();
                2 * hits > m
            } else {
                let hits = window.iter().filter(|&&j| hit(j)).count();
                let need = (window.len() * cfg.fc_quorum).div_ceil(2 * h).max(1);
                hits >= need
            };
            if keep {
                kept.push(*c);
            }
        }

        // Seeds: nearest frames first, the earlier one first at equal distance.
        let mut order = window.clone();
        order.sort_by_key(|&j| {
            let off = j as i64 - t as i64;
            (off.unsigned_abs(), off)
        });
        let mut claimed: Vec<Vec<bool>> = (0..n).map(|j| vec![false; gated[j].len()]).collect();
        let mut added = Vec::new();
        for &sj in &order {
            for si in 0..gated[sj].len() {
                if claimed[sj][si] {
                    continue;
                }
                claimed[sj][si] = true;
                let seed = gated[sj][si].bbox.to_array();
                let mut members = vec![(sj, si)];
                for &oj in order.iter().filter(|&&oj| oj != sj) {
                    let mut best: Option<(usize, f64)> = None;
                    for (oi, b) in gated[oj].iter().enumerate() {
                        if claimed[oj][oi] {
                            continue;
                        }
                        let v = ref_iou(&seed, &b.bbox.to_array());
                        if v > cfg.fill_iou && best.is_none_or(|(_, bv)| v > bv) {
                            best = Some((oi, v));
                        }
                    }
                    if let Some((oi, _)) = best {
                        claimed[oj][oi] = true;
                        members.push((oj, oi));
                    }
                }
                let before = members.iter().any(|&(j, _)| j < t);
                let after = members.iter().any(|&(j, _)| j > t);
                if members.len() < cfg.fill_quorum || !before || !after {
                    continue;
                }
                let mut sum = [0.0; 4];
                let mut conf = 0.0;
                for &(j, i) in &members {
                    let b = gated[j][i].bbox.to_array();
                    for k in 0..4 {
                        sum[k] += b[k];
                    }
                    conf += gated[j][i].confidence();
                }
                let k = members.len() as f64;
                let mean = [sum[0] / k, sum[1] / k, sum[2] / k, sum[3] / k];
                if gated[t].iter().any(|c| ref_iou(&c.bbox.to_array(), &mean) > cfg.fill_iou) {
                    continue;
                }
                let bbox = BoundingBox::new(mean[0], mean[1], mean[2], mean[3]).unwrap();
                added.push(ScoredBox::with_origin(bbox, conf / k, Origin::Interpolated).unwrap());
            }
        }
        out.push(RefFrame { kept, added });
    }
    out
}

/// Two-pass population statistics straight from the SSIM definition.
pub fn naive_ssim(x: &[u8], y: &[u8], k1: f64, k2: f64, l: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let my = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (f64::from(a) - mx, f64::from(b) - my);
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    let b1 = (k1 * l).powi(2);
    let b2 = (k2 * l).powi(2);
    let b3 = b2 / 2.0;
    let (sx, sy) = (vx.sqrt(), vy.sqrt());
    let lum = (2.0 * mx * my + b1) / (mx * mx + my * my + b1);
    let con = (2.0 * sx * sy + b2) / (vx + vy + b2);
    let st = (cxy + b3) / (sx * sy + b3);
    lum * con * st
}
