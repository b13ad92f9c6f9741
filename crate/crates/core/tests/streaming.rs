mod common;

use framecorr::{
    iou, process_sequence, BoundingBox, Correlator, Error, FrameDetections, FrameMeta, GrayFrame, IscuConfig, Origin,
    ScoredBox,
};
use proptest::prelude::*;

const W: u32 = 48;
const H: u32 = 36;

fn meta(i: u64) -> FrameMeta {
    FrameMeta::new(W, H, i).unwrap()
}

/// A short random sequence: frames are one of a few flat or textured
/// images, so similarity varies; boxes cluster around a few anchors so
/// correlations actually occur.
fn sequence() -> impl Strategy<Value = (Vec<GrayFrame>, Vec<FrameDetections>)> {
    let frame = (0u8..4, any::<u8>()).prop_map(|(kind, level)| {
        let s = (0..W * H)
            .map(|i| match kind {
                0 => level,
                1 => ((i % W) * 5) as u8,
                2 => ((i / W) * 7) as u8,
                _ => (((i % W) * 5) as u8).wrapping_add(level / 8),
            })
            .collect();
        GrayFrame::new(W, H, s).unwrap()
    });
    let bx = (0usize..3, -2.0f64..2.0, -2.0f64..2.0, 0.0f64..1.0).prop_map(|(a, dx, dy, c)| {
        let anchors = [(5.0, 5.0), (20.0, 12.0), (30.0, 20.0)];
        let (x, y) = anchors[a];
        (x + dx, y + dy, c)
    });
    let frame_dets = prop::collection::vec(bx, 0..4);
    prop::collection::vec((frame, frame_dets), 0..20).prop_map(|v| {
        let mut frames = Vec::new();
        let mut dets = Vec::new();
        for (i, (f, boxes)) in v.into_iter().enumerate() {
            frames.push(f);
            let sb = boxes
                .into_iter()
                .map(|(x, y, c)| ScoredBox::new(BoundingBox::new(x.max(0.0), y.max(0.0), x.max(0.0) + 10.0, y.max(0.0) + 8.0).unwrap(), c).unwrap());
            dets.push(FrameDetections::new(meta(i as u64), sb));
        }
        (frames, dets)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn streaming_equals_batch_and_reference((frames, dets) in sequence(), h in 1usize..4) {
        let cfg = IscuConfig::default().with_half_window(h);
        let batch = process_sequence(&frames, &dets, &cfg).unwrap();
        let mut c = Correlator::new(cfg).unwrap();
        let mut streamed = Vec::new();
        for (i, (f, d)) in frames.iter().zip(&dets).enumerate() {
            let out = c.push_frame(f, d).unwrap();
            // Frame t comes out exactly when t + h has been pushed.
            if i >= h {
                prop_assert_eq!(out.as_ref().map(|o| o.meta.frame_index), Some((i - h) as u64));
            } else {
                prop_assert!(out.is_none());
            }
            streamed.extend(out);
        }
        streamed.extend(c.flush().unwrap());
        prop_assert_eq!(&streamed, &batch);
        let naive = common::reference(&frames, &dets, &cfg);
        prop_assert_eq!(naive.len(), batch.len());
        for (b, r) in batch.iter().zip(&naive) {
            prop_assert_eq!(&b.kept, &r.kept);
            prop_assert_eq!(&b.added, &r.added);
        }
    }

    #[test]
    fn output_invariants((frames, dets) in sequence()) {
        let cfg = IscuConfig::default();
        let out = process_sequence(&frames, &dets, &cfg).unwrap();
        prop_assert_eq!(out.len(), dets.len());
        for (i, (f, d)) in out.iter().zip(&dets).enumerate() {
            prop_assert_eq!(f.meta.frame_index, i as u64);
            let gated: Vec<ScoredBox> = d.boxes().iter().copied().filter(|b| b.confidence() > cfg.confidence_gate).collect();
            // kept is an order-preserving subsequence of the gated input
            let mut it = gated.iter();
            for k in &f.kept {
                prop_assert!(it.any(|g| g == k));
                prop_assert_eq!(k.origin, Origin::Detector);
            }
            prop_assert_eq!(f.kept.len() + f.removed_count, gated.len());
            for a in &f.added {
                prop_assert_eq!(a.origin, Origin::Interpolated);
                for c in d.boxes() {
                    if c.confidence() > cfg.confidence_gate {
                        prop_assert!(iou(&a.bbox, &c.bbox) <= cfg.fill_iou);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic((frames, dets) in sequence()) {
        let cfg = IscuConfig::default();
        let a = process_sequence(&frames, &dets, &cfg).unwrap();
        let b = process_sequence(&frames, &dets, &cfg).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    /// All six neighbors similar: no overlapping neighbor means removal,
    /// four or more mean the box stays.
    #[test]
    fn transience_filter(hits in prop::collection::vec(any::<bool>(), 6)) {
        let cfg = IscuConfig::default();
        let frame = GrayFrame::new(W, H, (0..W * H).map(|i| (i % 251) as u8).collect()).unwrap();
        let frames = vec![frame; 7];
        let b = ScoredBox::new(BoundingBox::new(10.0, 10.0, 20.0, 18.0).unwrap(), 0.9).unwrap();
        let dets: Vec<FrameDetections> = (0..7u64)
            .map(|i| {
                let present = match i {
                    3 => true,
                    i if i < 3 => hits[i as usize],
                    i => hits[i as usize - 1],
                };
                FrameDetections::new(meta(i), present.then_some(b))
            })
            .collect();
        let out = process_sequence(&frames, &dets, &cfg).unwrap();
        let n = hits.iter().filter(|&&h| h).count();
        prop_assert_eq!(out[3].similar_neighbors, 6);
        if n == 0 {
            prop_assert!(out[3].kept.is_empty());
        }
        if n >= 4 {
            prop_assert_eq!(out[3].kept.len(), 1);
        }
    }
}

#[test]
fn latency_contract() {
    let cfg = IscuConfig::default();
    let mut c = Correlator::new(cfg).unwrap();
    let f = GrayFrame::filled(W, H, 9).unwrap();
    let mut emitted = 0;
    for i in 0..4 {
        emitted += usize::from(c.push_frame(&f, &FrameDetections::empty(meta(i))).unwrap().is_some());
    }
    assert_eq!(emitted, 1);
    assert_eq!(c.pending(), 3);
    assert_eq!(c.flush().unwrap().len(), 3);
}

#[test]
fn single_frame_passes_through() {
    let b = ScoredBox::new(BoundingBox::new(1.0, 1.0, 5.0, 5.0).unwrap(), 0.5).unwrap();
    let d = FrameDetections::new(meta(0), [b]);
    let mut c = Correlator::new(IscuConfig::default()).unwrap();
    assert!(c.push_frame(&GrayFrame::filled(W, H, 0).unwrap(), &d).unwrap().is_none());
    let out = c.flush().unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].kept, vec![b]);
    assert!(out[0].added.is_empty());
}

#[test]
fn stream_errors() {
    let mut c = Correlator::new(IscuConfig::default()).unwrap();
    let f = GrayFrame::filled(W, H, 0).unwrap();
    c.push_frame(&f, &FrameDetections::empty(meta(5))).unwrap();
    let e = c.push_frame(&f, &FrameDetections::empty(meta(5))).unwrap_err();
    assert!(matches!(e, Error::Sequencing { previous: 5, got: 5 }));
    let big = GrayFrame::filled(W + 1, H, 0).unwrap();
    let e = c
        .push_frame(&big, &FrameDetections::empty(FrameMeta::new(W + 1, H, 6).unwrap()))
        .unwrap_err();
    assert!(matches!(e, Error::Input(_)));
    assert!(process_sequence(&[f], &[], &IscuConfig::default()).is_err());
    assert!(process_sequence(&[], &[], &IscuConfig::default()).unwrap().is_empty());
}
