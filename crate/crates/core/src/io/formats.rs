//! Line-oriented text records.
//!
//! Detections: `frame_index x_min y_min x_max y_max confidence`, plus a
//! trailing `origin` (`det` or `interp`) on filtered output.
//! Ground truth: `frame_index polyp_id cx cy w h`.
//!
//! Fields are whitespace-separated, `#` starts a comment, blank lines are
//! ignored. Numbers are written with 6 significant digits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::correlator::FilteredFrame;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDetections, FrameMeta, GroundTruthBox, Origin, ScoredBox};

/// One detection line before clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: u64,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub frame_index: u64,
    pub polyp_id: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

fn parse_error(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn number(file: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_error(file, line, format!("{name} {s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(file, line, format!("{name} {s:?} is not finite")));
    }
    Ok(v)
}

fn index(file: &Path, line: usize, s: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| parse_error(file, line, format!("frame index {s:?} is not a non-negative integer")))
}

/// Parses detection lines. `file` is only used in error messages. The
/// optional seventh field is the origin tag written by `filter`.
pub fn parse_detection_records(text: &str, file: &Path) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 6 && f.len() != 7 {
            return Err(parse_error(
                file,
                line,
                format!("expected 6 fields (frame x_min y_min x_max y_max confidence), found {}", f.len()),
            ));
        }
        let frame_index = index(file, line, f[0])?;
        let [x_min, y_min, x_max, y_max, confidence] = [
            ("x_min", f[1]),
            ("y_min", f[2]),
            ("x_max", f[3]),
            ("y_max", f[4]),
            ("confidence", f[5]),
        ]
        .map(|(name, s)| number(file, line, name, s));
        let (x_min, y_min, x_max, y_max, confidence) = (x_min?, y_min?, x_max?, y_max?, confidence?);
        if x_min >= x_max {
            return Err(parse_error(file, line, format!("x_min {x_min} is not below x_max {x_max}")));
        }
        if y_min >= y_max {
            return Err(parse_error(file, line, format!("y_min {y_min} is not below y_max {y_max}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_error(file, line, format!("confidence {confidence} outside [0, 1]")));
        }
        let origin = match f.get(6) {
            None | Some(&"det") => Origin::Detector,
            Some(&"interp") => Origin::Interpolated,
            Some(other) => return Err(parse_error(file, line, format!("unknown origin {other:?}"))),
        };
        out.push(DetectionRecord {
            frame_index,
            x_min,
            y_min,
            x_max,
            y_max,
            confidence,
            origin,
        });
    }
    Ok(out)
}

/// Groups detections into per-frame arrays for a `width x height` sequence of
/// `n_frames` frames, clipping boxes to the frame. Frames without records are
/// empty. With `n_frames = None` the sequence ends at the highest index seen.
pub fn parse_detections(
    text: &str,
    file: &Path,
    width: u32,
    height: u32,
    n_frames: Option<usize>,
) -> Result<Vec<FrameDetections>> {
    let recs = parse_detection_records(text, file)?;
    let seen = recs.iter().map(|r| r.frame_index as usize + 1).max().unwrap_or(0);
    let len = n_frames.unwrap_or(seen);
    if seen > len {
        let line = records(text)
            .zip(&recs)
            .find(|(_, r)| r.frame_index as usize >= len)
            .map_or(0, |((line, _), _)| line);
        return Err(parse_error(
            file,
            line,
            format!("frame index {} beyond the {len}-frame sequence", seen - 1),
        ));
    }
    let mut grouped: Vec<Vec<ScoredBox>> = vec![Vec::new(); len];
    for (r, (line, _)) in recs.iter().zip(records(text)) {
        let meta = FrameMeta::new(width, height, r.frame_index)?;
        if let Some(bbox) = BoundingBox::clip_to(r.x_min, r.y_min, r.x_max, r.y_max, &meta) {
            let sb = ScoredBox::with_origin(bbox, r.confidence, r.origin).map_err(|e| parse_error(file, line, e.to_string()))?;
            grouped[r.frame_index as usize].push(sb);
        }
    }
    grouped
        .into_iter()
        .enumerate()
        .map(|(i, boxes)| Ok(FrameDetections::new(FrameMeta::new(width, height, i as u64)?, boxes)))
        .collect()
}

pub fn parse_groundtruth_records(text: &str, file: &Path) -> Result<Vec<GroundTruthRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, f) in records(text) {
        if f.len() != 6 {
            return Err(parse_error(
                file,
                line,
                format!("expected 6 fields (frame polyp_id cx cy w h), found {}", f.len()),
            ));
        }
        let frame_index = index(file, line, f[0])?;
        let polyp_id = f[1].to_string();
        let [cx, cy, w, h] = [("cx", f[2]), ("cy", f[3]), ("w", f[4]), ("h", f[5])].map(|(n, s)| number(file, line, n, s));
        let (cx, cy, w, h) = (cx?, cy?, w?, h?);
        if !seen.insert((frame_index, polyp_id.clone())) {
            return Err(parse_error(
                file,
                line,
                format!("polyp {polyp_id} annotated twice in frame {frame_index}"),
            ));
        }
        GroundTruthBox::new(cx, cy, w, h, polyp_id.clone()).map_err(|e| parse_error(file, line, e.to_string()))?;
        out.push(GroundTruthRecord {
            frame_index,
            polyp_id,
            cx,
            cy,
            w,
            h,
        });
    }
    Ok(out)
}

/// Per-frame annotations. The result covers at least `n_frames` frames and
/// always reaches the highest annotated index.
pub fn parse_groundtruth(text: &str, file: &Path, n_frames: Option<usize>) -> Result<Vec<Vec<GroundTruthBox>>> {
    let recs = parse_groundtruth_records(text, file)?;
    let seen = recs.iter().map(|r| r.frame_index as usize + 1).max().unwrap_or(0);
    let len = n_frames.unwrap_or(0).max(seen);
    let mut out = vec![Vec::new(); len];
    for r in recs {
        let g = GroundTruthBox::new(r.cx, r.cy, r.w, r.h, r.polyp_id)?;
        out[r.frame_index as usize].push(g);
    }
    Ok(out)
}

/// `printf("%g")`: 6 significant digits, trailing zeros removed, exponent
/// form outside `[1e-4, 1e6)`.
pub fn format_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    let fixed = format!("{v:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn push_box(out: &mut String, frame: u64, b: &ScoredBox) {
    let [a, c, d, e] = b.bbox.to_array();
    let _ = write!(
        out,
        "{frame} {} {} {} {} {}",
        format_g(a),
        format_g(c),
        format_g(d),
        format_g(e),
        format_g(b.confidence())
    );
}

pub fn write_detections(frames: &[FrameDetections]) -> String {
    let mut out = String::new();
    for f in frames {
        for b in f.boxes() {
            push_box(&mut out, f.meta.frame_index, b);
            out.push('\n');
        }
    }
    out
}

/// Detection records with the trailing origin tag.
pub fn write_filtered(frames: &[FilteredFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        for b in f.boxes() {
            push_box(&mut out, f.meta.frame_index, b);
            out.push(' ');
            out.push_str(b.origin.tag());
            out.push('\n');
        }
    }
    out
}

pub fn write_groundtruth(frames: &[Vec<GroundTruthBox>]) -> String {
    let mut out = String::new();
    for (i, f) in frames.iter().enumerate() {
        for g in f {
            let _ = writeln!(
                out,
                "{i} {} {} {} {} {}",
                g.polyp_id,
                format_g(g.centroid_x),
                format_g(g.centroid_y),
                format_g(g.width),
                format_g(g.height)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("dets.txt")
    }

    #[test]
    fn g_format_matches_printf() {
        let cases = [
            (0.9, "0.9"),
            (10.0, "10"),
            (123.456789, "123.457"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1234567.0, "1.23457e+06"),
            (999999.5, "1e+06"),
            (-2.5, "-2.5"),
            (0.1 + 0.2, "0.3"),
            (100000.0, "100000"),
        ];
        for (v, want) in cases {
            assert_eq!(format_g(v), want, "{v}");
        }
    }

    #[test]
    fn one_detection() {
        let f = parse_detections("0 10 10 20 20 0.9\n", p(), 100, 100, None).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].boxes()[0].bbox.to_array(), [10.0, 10.0, 20.0, 20.0]);
        assert_eq!(f[0].boxes()[0].confidence(), 0.9);
    }

    #[test]
    fn empty_file_gives_empty_frames() {
        let f = parse_detections("# nothing\n\n", p(), 64, 48, Some(4)).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|d| d.nb() == 0));
        assert_eq!(f[3].meta.frame_index, 3);
    }

    #[test]
    fn errors_name_file_and_line() {
        let e = parse_detections("0 1 1 2 2 0.5\n3 20 10 10 20 0.5\n", p(), 100, 100, None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(e.to_string().starts_with("dets.txt:2:"), "{e}");
        for bad in ["0 1 1 2 2", "0 1 1 2 2 nan", "0 1 1 2 2 1.5", "-1 1 1 2 2 0.5", "0 1 1 2 inf 0.5", "0 1 1 2 2 0.5 maybe"] {
            assert!(parse_detection_records(bad, p()).is_err(), "{bad}");
        }
        let e = parse_detections("5 1 1 2 2 0.5\n", p(), 10, 10, Some(3)).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn boxes_are_clipped() {
        let f = parse_detections("0 -5 -5 20 200 0.5\n0 200 200 300 300 0.5\n", p(), 100, 100, None).unwrap();
        assert_eq!(f[0].nb(), 1);
        assert_eq!(f[0].boxes()[0].bbox.to_array(), [0.0, 0.0, 20.0, 100.0]);
    }

    #[test]
    fn ground_truth_records() {
        let g = parse_groundtruth("5 p1 50 50 20 10\n", Path::new("gt.txt"), None).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[5][0].corners().to_array(), [40.0, 45.0, 60.0, 55.0]);
        assert_eq!(g[5][0].polyp_id, "p1");
        assert!(parse_groundtruth("5 p1 50 50 20 10\n5 p1 51 50 20 10\n", p(), None).is_err());
        let e = parse_groundtruth("\n5 p1 50 50 0 10\n", Path::new("gt.txt"), None).unwrap_err();
        assert!(e.to_string().starts_with("gt.txt:2:"), "{e}");
    }

    #[test]
    fn filtered_output_tags_origin() {
        let meta = FrameMeta::new(100, 100, 2).unwrap();
        let b = BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        let f = FilteredFrame {
            meta,
            kept: vec![ScoredBox::new(b, 0.5).unwrap()],
            added: vec![ScoredBox::with_origin(b, 0.25, Origin::Interpolated).unwrap()],
            removed_count: 0,
            similar_neighbors: 0,
            used_fc: false,
        };
        let text = write_filtered(&[f]);
        assert_eq!(text, "2 1 2 3 4 0.5 det\n2 1 2 3 4 0.25 interp\n");
        let back = parse_detection_records(&text, p()).unwrap();
        assert_eq!(back[1].origin, Origin::Interpolated);
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-6 * a.abs().max(b.abs()) + 1e-300
    }

    proptest! {
        #[test]
        fn detections_round_trip(
            boxes in prop::collection::vec(
                (0u64..20, 0.0f64..500.0, 0.0f64..500.0, 1.0f64..100.0, 1.0f64..100.0, 0.0f64..=1.0),
                0..40,
            )
        ) {
            let n = 20usize;
            let mut frames: Vec<Vec<ScoredBox>> = vec![Vec::new(); n];
            for &(f, x, y, w, h, c) in &boxes {
                frames[f as usize].push(ScoredBox::new(BoundingBox::new(x, y, x + w, y + h).unwrap(), c).unwrap());
            }
            let dets: Vec<FrameDetections> = frames
                .into_iter()
                .enumerate()
                .map(|(i, b)| FrameDetections::new(FrameMeta::new(640, 640, i as u64).unwrap(), b))
                .collect();
            let text = write_detections(&dets);
            let back = parse_detections(&text, p(), 640, 640, Some(n)).unwrap();
            prop_assert_eq!(back.len(), n);
            for (a, b) in dets.iter().zip(&back) {
                prop_assert_eq!(a.nb(), b.nb());
                for (x, y) in a.boxes().iter().zip(b.boxes()) {
                    for (u, v) in x.bbox.to_array().iter().zip(y.bbox.to_array()) {
                        prop_assert!(close(*u, v), "{} vs {}", u, v);
                    }
                    prop_assert!(close(x.confidence(), y.confidence()));
                }
            }
            prop_assert_eq!(write_detections(&back), text);
        }

        #[test]
        fn ground_truth_round_trip(
            gts in prop::collection::vec((0usize..10, 20.0f64..400.0, 20.0f64..400.0, 1.0f64..40.0, 1.0f64..40.0), 0..20)
        ) {
            let mut frames: Vec<Vec<GroundTruthBox>> = vec![Vec::new(); 10];
            for (k, &(f, cx, cy, w, h)) in gts.iter().enumerate() {
                frames[f].push(GroundTruthBox::new(cx, cy, w, h, format!("p{k}")).unwrap());
            }
            let text = write_groundtruth(&frames);
            let back = parse_groundtruth(&text, p(), Some(10)).unwrap();
            for (a, b) in frames.iter().zip(&back) {
                prop_assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(&x.polyp_id, &y.polyp_id);
                    for (u, v) in [(x.centroid_x, y.centroid_x), (x.centroid_y, y.centroid_y), (x.width, y.width), (x.height, y.height)] {
                        prop_assert!(close(u, v));
                    }
                }
            }
        }
    }
}
