mod common;

use proptest::prelude::*;
use sphx_core::adjacency::{Connectivity, ImageAdjacency};
use sphx_core::container::container_paths;
use sphx_core::image::{preprocess_clip_normalize, GroundTruthLabels, HighDimImage};
use sphx_core::Error;

#[test]
fn two_by_two_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("tiny");
    let img = HighDimImage::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    img.save(&base).unwrap();
    let back = HighDimImage::load(&base).unwrap();
    assert_eq!(back.values(), &[0.0, 1.0, 2.0, 3.0]);
    assert_eq!(back.pixel(back.pixel_id(1, 1)), &[3.0]);
}

#[test]
fn save_load_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let img = common::random_image(5, 3, 4, 1)
        .with_channel_names(vec!["r".into(), "g".into(), "b".into(), "nir".into()])
        .unwrap();
    img.save(&a).unwrap();
    HighDimImage::load(&a).unwrap().save(&b).unwrap();
    let (ma, ra) = container_paths(&a);
    let (mb, rb) = container_paths(&b);
    assert_eq!(std::fs::read(ma).unwrap(), std::fs::read(mb).unwrap());
    assert_eq!(std::fs::read(ra).unwrap(), std::fs::read(rb).unwrap());
}

#[test]
fn malformed_containers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("bad");
    let (meta, raw) = container_paths(&base);
    std::fs::write(&meta, "width=2\nheight=2\nchannels=1\ndtype=f32\n").unwrap();
    std::fs::write(&raw, [0u8; 12]).unwrap();
    assert!(matches!(
        HighDimImage::load(&base),
        Err(Error::PayloadSize {
            expected: 16,
            found: 12
        })
    ));

    std::fs::write(&meta, "width=2\nheight=two\nchannels=1\ndtype=f32\n").unwrap();
    assert!(matches!(HighDimImage::load(&base), Err(Error::Format { .. })));

    std::fs::write(&meta, "width=2\nheight=2\nchannels=1\ndtype=f32\n").unwrap();
    let mut payload = Vec::new();
    for v in [0.0f32, 1.0, f32::NAN, 3.0] {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&raw, payload).unwrap();
    match HighDimImage::load(&base) {
        Err(Error::NonFinite { pixel, channel, .. }) => assert_eq!((pixel, channel), (2, 0)),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("gt");
    let gt = GroundTruthLabels::new(3, 1, vec![0, 7, 2]).unwrap();
    gt.save(&base).unwrap();
    let back = GroundTruthLabels::load(&base).unwrap();
    assert_eq!(back.labels(), &[0, 7, 2]);
    assert_eq!(back.background_id(), 0);
}

#[test]
fn constant_image_normalizes_to_one() {
    let img = HighDimImage::new(3, 2, 2, vec![5.0; 12]).unwrap();
    let (out, report) = preprocess_clip_normalize(&img, 0.98).unwrap();
    assert!(out.values().iter().all(|&v| v == 1.0));
    assert!(!report.all_zero);
}

#[test]
fn unit_max_scaling() {
    let img = HighDimImage::new(3, 1, 1, vec![0.0, 2.0, 4.0]).unwrap();
    let (out, _) = preprocess_clip_normalize(&img, 1.0).unwrap();
    assert_eq!(out.values(), &[0.0, 0.5, 1.0]);
}

#[test]
fn percentile_clip_matches_sort_oracle() {
    let values: Vec<f32> = (1..=100).map(|v| v as f32).collect();
    let img = HighDimImage::new(10, 10, 1, values.clone()).unwrap();
    let (out, report) = preprocess_clip_normalize(&img, 0.98).unwrap();
    assert_eq!(report.threshold, 98.0);
    assert_eq!(out.values(), common::clip_normalize_oracle(&values, 1, 0.98).as_slice());

    let img = common::random_image(7, 5, 3, 9);
    let (out, _) = preprocess_clip_normalize(&img, 0.9).unwrap();
    assert_eq!(
        out.values(),
        common::clip_normalize_oracle(img.values(), 3, 0.9).as_slice()
    );
}

#[test]
fn all_zero_image_is_flagged() {
    let img = HighDimImage::new(2, 2, 2, vec![0.0; 8]).unwrap();
    let (out, report) = preprocess_clip_normalize(&img, 0.98).unwrap();
    assert!(report.all_zero);
    assert_eq!(out, img);
    assert!(preprocess_clip_normalize(&img, 0.0).is_err());
    assert!(preprocess_clip_normalize(&img, 1.5).is_err());
}

#[test]
fn adjacency_small_grids() {
    let one = ImageAdjacency::build(1, 1, Connectivity::Four).unwrap();
    assert!(one.neighbors(0).is_empty());
    let four = ImageAdjacency::build(3, 3, Connectivity::Four).unwrap();
    assert_eq!(four.neighbors(4).len(), 4);
    assert_eq!(four.neighbors(0).len(), 2);
    let eight = ImageAdjacency::build(3, 3, Connectivity::Eight).unwrap();
    assert_eq!(eight.neighbors(4).len(), 8);
    assert_eq!(eight.neighbors(0).len(), 3);
    assert!(Connectivity::from_number(6).is_err());
}

#[test]
fn adjacency_edge_count_matches_enumeration() {
    for (w, h) in [(3, 3), (5, 2), (1, 7), (4, 4)] {
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let adj = ImageAdjacency::build(w, h, conn).unwrap();
            let mut count = 0;
            for a in 0..w * h {
                for b in 0..w * h {
                    let (ax, ay) = ((a % w) as i64, (a / w) as i64);
                    let (bx, by) = ((b % w) as i64, (b / w) as i64);
                    let (dx, dy) = ((ax - bx).abs(), (ay - by).abs());
                    let adjacent = match conn {
                        Connectivity::Four => dx + dy == 1,
                        Connectivity::Eight => a != b && dx <= 1 && dy <= 1,
                    };
                    if adjacent {
                        count += 1;
                        assert!(adj.neighbors(a).contains(&(b as u32)));
                    }
                }
            }
            assert_eq!(adj.directed_edge_count(), count);
        }
    }
}

proptest! {
    #[test]
    fn adjacency_is_symmetric(w in 1usize..9, h in 1usize..9, eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let adj = ImageAdjacency::build(w, h, conn).unwrap();
        for a in 0..w * h {
            for &b in adj.neighbors(a) {
                prop_assert!(adj.neighbors(b as usize).contains(&(a as u32)));
                prop_assert_ne!(a as u32, b);
            }
            let (x, y) = (a % w, a / w);
            if x > 0 && y > 0 && x + 1 < w && y + 1 < h {
                prop_assert_eq!(adj.neighbors(a).len(), conn.as_number() as usize);
            }
        }
    }

    #[test]
    fn preprocessing_is_idempotent(
        values in prop::collection::vec(0.0f32..1000.0, 24),
        fraction in 0.5f64..=1.0,
    ) {
        let img = HighDimImage::new(4, 3, 2, values).unwrap();
        let (once, _) = preprocess_clip_normalize(&img, fraction).unwrap();
        let (twice, _) = preprocess_clip_normalize(&once, fraction).unwrap();
        prop_assert_eq!(once.values(), twice.values());
        for c in 0..2 {
            let max = once.values().iter().skip(c).step_by(2).fold(0.0f32, |a, &b| a.max(b));
            prop_assert!(max == 1.0 || max == 0.0);
        }
    }
}
