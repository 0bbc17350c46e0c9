//! Property tests for the metric suite, matching, classification
//! aggregation and track scoring.

use atdr_core::annotations::{
    dataset_to_string, load_dataset, save_dataset, BoundingBox, ClassTaxonomy, Detection,
    FrameRecord, ObjectTruth,
};
use atdr_core::classify::{aggregate_to_recognition, confusion, ClassLevel};
use atdr_core::detect::{
    is_good_detection, jaccard, m1_localization, m2_scale, m3_aspect, match_frame, roc_curve,
    score_dataset_at, MatchCriterion,
};
use atdr_core::track::{score_timeline, AssociationTimeline};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (
        -100.0f64..100.0,
        -100.0f64..100.0,
        0.5f64..80.0,
        0.5f64..80.0,
    )
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

/// Boxes with integer corners, for exact raster comparisons.
fn arb_int_box() -> impl Strategy<Value = BoundingBox> {
    (-20i64..20, -20i64..20, 1i64..25, 1i64..25).prop_map(|(x0, y0, w, h)| {
        BoundingBox::new(
            x0 as f64 + w as f64 / 2.0,
            y0 as f64 + h as f64 / 2.0,
            w as f64,
            h as f64,
        )
        .unwrap()
    })
}

fn jaccard_raster(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let corners = |bb: &BoundingBox| {
        (
            bb.x_center - bb.width / 2.0,
            bb.y_center - bb.height / 2.0,
            bb.x_center + bb.width / 2.0,
            bb.y_center + bb.height / 2.0,
        )
    };
    let (ax0, ay0, ax1, ay1) = corners(a);
    let (bx0, by0, bx1, by1) = corners(b);
    let (mut inter, mut union) = (0u64, 0u64);
    for y in ay0.min(by0).floor() as i64..ay1.max(by1).ceil() as i64 {
        for x in ax0.min(bx0).floor() as i64..ax1.max(bx1).ceil() as i64 {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let in_a = cx > ax0 && cx < ax1 && cy > ay0 && cy < ay1;
            let in_b = cx > bx0 && cx < bx1 && cy > by0 && cy < by1;
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    inter as f64 / union as f64
}

proptest! {
    #[test]
    fn jaccard_symmetric_bounded(a in arb_box(), b in arb_box()) {
        let ab = jaccard(&a, &b);
        let ba = jaccard(&b, &a);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
    }

    #[test]
    fn jaccard_equals_raster_on_integer_boxes(a in arb_int_box(), b in arb_int_box()) {
        prop_assert_eq!(jaccard(&a, &b), jaccard_raster(&a, &b));
    }

    #[test]
    fn metric_ranges_and_zeros(a in arb_box(), b in arb_box()) {
        let m1 = m1_localization(&a, &b);
        let m2 = m2_scale(&a, &b);
        let m3 = m3_aspect(&a, &b);
        prop_assert!((0.0..1.0).contains(&m1));
        prop_assert!((0.0..=1.0).contains(&m2));
        prop_assert!((0.0..1.0).contains(&m3));
        prop_assert_eq!(
            m1 == 0.0,
            a.x_center == b.x_center && a.y_center == b.y_center
        );
        prop_assert_eq!(m2 == 0.0, a.surface() == b.surface());
        prop_assert_eq!(m3 == 0.0, a.height / a.width == b.height / b.width);
    }

    #[test]
    fn m2_scale_invariant(a in arb_box(), b in arb_box(), k in 0.1f64..10.0) {
        let scale = |bb: &BoundingBox| {
            BoundingBox::new(bb.x_center, bb.y_center, bb.width * k, bb.height * k).unwrap()
        };
        let before = m2_scale(&a, &b);
        let after = m2_scale(&scale(&a), &scale(&b));
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn m3_scale_invariant_each_argument(a in arb_box(), b in arb_box(), k in 0.1f64..10.0) {
        let scale = |bb: &BoundingBox| {
            BoundingBox::new(bb.x_center, bb.y_center, bb.width * k, bb.height * k).unwrap()
        };
        prop_assert!((m3_aspect(&scale(&a), &b) - m3_aspect(&a, &b)).abs() < 1e-12);
        prop_assert!((m3_aspect(&a, &scale(&b)) - m3_aspect(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn self_detection_is_good_in_both_modes(z in arb_box()) {
        prop_assert!(is_good_detection(&z, &z, &MatchCriterion::jaccard()));
        prop_assert!(is_good_detection(&z, &z, &MatchCriterion::robin()));
    }
}

fn truth(id: i64, bbox: BoundingBox) -> ObjectTruth {
    ObjectTruth {
        object_id: id,
        bbox,
        recognition_class: "tank".into(),
        identification_class: "T72".into(),
        occlusion_fraction: 0.0,
    }
}

fn arb_frame() -> impl Strategy<Value = FrameRecord> {
    (
        proptest::collection::vec(arb_box(), 0..5),
        proptest::collection::vec((arb_box(), 0.0f64..=1.0), 0..7),
    )
        .prop_map(|(truth_boxes, det_specs)| FrameRecord {
            frame_index: 0,
            image_path: String::new(),
            truths: truth_boxes
                .into_iter()
                .enumerate()
                .map(|(i, b)| truth(i as i64, b))
                .collect(),
            detections: det_specs
                .into_iter()
                .map(|(bbox, conf)| Detection {
                    bbox,
                    confidence: conf,
                    claimed_class: None,
                    tracker_id: None,
                })
                .collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tp_bounded_by_min_cardinality(frame in arb_frame()) {
        for criterion in [MatchCriterion::jaccard(), MatchCriterion::robin()] {
            let score = match_frame(&frame.truths, &frame.detections, &criterion).score();
            prop_assert!(
                score.true_positives <= frame.truths.len().min(frame.detections.len())
            );
            prop_assert_eq!(
                score.true_positives + score.missed,
                frame.truths.len()
            );
        }
    }

    #[test]
    fn roc_is_monotone_staircase(mut frames in proptest::collection::vec(arb_frame(), 1..6)) {
        for (i, f) in frames.iter_mut().enumerate() {
            f.frame_index = i as u64;
        }
        let total_truths: usize = frames.iter().map(|f| f.truths.len()).sum();
        prop_assume!(total_truths > 0);
        let curve = roc_curve(&frames, &MatchCriterion::jaccard()).unwrap();
        for pair in curve.points.windows(2) {
            prop_assert!(pair[1].threshold < pair[0].threshold);
            prop_assert!(pair[1].dr >= pair[0].dr);
            prop_assert!(pair[1].far >= pair[0].far);
        }
    }

    #[test]
    fn removing_a_detection_never_increases_dr(
        mut frames in proptest::collection::vec(arb_frame(), 1..4),
        pick in any::<prop::sample::Index>(),
    ) {
        for (i, f) in frames.iter_mut().enumerate() {
            f.frame_index = i as u64;
        }
        let total_truths: usize = frames.iter().map(|f| f.truths.len()).sum();
        let total_dets: usize = frames.iter().map(|f| f.detections.len()).sum();
        prop_assume!(total_truths > 0 && total_dets > 0);

        // flat index of the detection to remove
        let flat = pick.index(total_dets);
        let mut reduced = frames.clone();
        let mut seen = 0;
        'outer: for f in reduced.iter_mut() {
            for d in 0..f.detections.len() {
                if seen == flat {
                    f.detections.remove(d);
                    break 'outer;
                }
                seen += 1;
            }
        }
        let criterion = MatchCriterion::jaccard();
        let thresholds: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.detections.iter().map(|d| d.confidence))
            .chain([0.0])
            .collect();
        for threshold in thresholds {
            let full = score_dataset_at(&frames, &criterion, threshold);
            let less = score_dataset_at(&reduced, &criterion, threshold);
            prop_assert!(less.true_positives <= full.true_positives);
        }
    }
}

fn taxonomy() -> ClassTaxonomy {
    ClassTaxonomy::from_groups([
        ("tank", vec!["AMX30", "Leclerc", "T72"]),
        ("truck", vec!["TRM2000", "VAB"]),
        ("car", vec!["P4"]),
    ])
    .unwrap()
}

fn arb_labeled_frame() -> impl Strategy<Value = FrameRecord> {
    let id_labels = ["AMX30", "Leclerc", "T72", "TRM2000", "VAB", "P4"];
    let rec_of = |id: &str| match id {
        "TRM2000" | "VAB" => "truck",
        "P4" => "car",
        _ => "tank",
    };
    proptest::collection::vec(
        (arb_box(), 0usize..6, proptest::option::of(0usize..6), 0.0f64..=1.0),
        0..6,
    )
    .prop_map(move |specs| {
        let truths = specs
            .iter()
            .enumerate()
            .map(|(i, (bbox, id_idx, _, _))| ObjectTruth {
                object_id: i as i64,
                bbox: *bbox,
                recognition_class: rec_of(id_labels[*id_idx]).to_string(),
                identification_class: id_labels[*id_idx].to_string(),
                occlusion_fraction: 0.0,
            })
            .collect();
        // detections reuse the truth boxes so matches actually occur;
        // claimed labels are identification-level or absent
        let detections = specs
            .iter()
            .map(|(bbox, _, claim_idx, conf)| Detection {
                bbox: *bbox,
                confidence: *conf,
                claimed_class: claim_idx.map(|i| id_labels[i].to_string()),
                tracker_id: None,
            })
            .collect();
        FrameRecord {
            frame_index: 0,
            image_path: String::new(),
            truths,
            detections,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The recognition-level matrix equals the identification-level
    /// matrix aggregated through the parent map, for identification-level
    /// (or absent) claims.
    #[test]
    fn recognition_matrix_is_identification_blocksum(
        mut frames in proptest::collection::vec(arb_labeled_frame(), 1..4)
    ) {
        for (i, f) in frames.iter_mut().enumerate() {
            f.frame_index = i as u64;
        }
        let tax = taxonomy();
        let criterion = MatchCriterion::jaccard();
        let rec = confusion(&frames, &criterion, ClassLevel::Recognition, &tax).unwrap();
        let id = confusion(&frames, &criterion, ClassLevel::Identification, &tax).unwrap();
        let aggregated = aggregate_to_recognition(&id, &tax);
        prop_assert_eq!(rec, aggregated);
    }
}

fn arb_timeline() -> impl Strategy<Value = AssociationTimeline> {
    proptest::collection::vec(
        proptest::collection::btree_map(0i64..5, 0i64..5, 0..4),
        0..12,
    )
    .prop_map(|frames| AssociationTimeline {
        frames: frames
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn track_counts_invariant_under_relabeling(
        timeline in arb_timeline(),
        offset in 1i64..1000,
    ) {
        let relabeled = AssociationTimeline {
            frames: timeline
                .frames
                .iter()
                .map(|f| f.iter().map(|&(o, t)| (o, t * 7 + offset)).collect())
                .collect(),
        };
        let a = score_timeline(&timeline);
        let b = score_timeline(&relabeled);
        prop_assert_eq!(a.fit_count, b.fit_count);
        prop_assert_eq!(a.fio_count, b.fio_count);
    }

    /// Self-concatenation preserves all internal identity changes and
    /// adds at most one junction change per object/tracker history.
    #[test]
    fn track_counts_self_concatenation_bounds(timeline in arb_timeline()) {
        let doubled = AssociationTimeline {
            frames: timeline
                .frames
                .iter()
                .chain(timeline.frames.iter())
                .cloned()
                .collect(),
        };
        let once = score_timeline(&timeline);
        let twice = score_timeline(&doubled);
        let objects = once.per_object_tracker_history.len();
        let trackers = once.per_tracker_object_history.len();
        prop_assert!(twice.fit_count >= 2 * once.fit_count);
        prop_assert!(twice.fit_count <= 2 * once.fit_count + objects);
        prop_assert!(twice.fio_count >= 2 * once.fio_count);
        prop_assert!(twice.fio_count <= 2 * once.fio_count + trackers);
    }

    /// Zero counts exactly when the compressed association relation is a
    /// constant partial bijection.
    #[test]
    fn zero_counts_iff_constant_partial_bijection(timeline in arb_timeline()) {
        let score = score_timeline(&timeline);
        let constant = score
            .per_object_tracker_history
            .values()
            .all(|h| h.len() <= 1)
            && score
                .per_tracker_object_history
                .values()
                .all(|h| h.len() <= 1);
        prop_assert_eq!(score.fit_count == 0 && score.fio_count == 0, constant);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// A canonically saved dataset reloads identically and re-saves to
    /// the same bytes.
    #[test]
    fn dataset_roundtrip_canonical(
        mut frames in proptest::collection::vec(arb_labeled_frame(), 0..4)
    ) {
        for (i, f) in frames.iter_mut().enumerate() {
            f.frame_index = i as u64 * 2; // strictly increasing, with gaps
            for (j, d) in f.detections.iter_mut().enumerate() {
                d.tracker_id = Some(j as i64); // unique within the frame
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        save_dataset(&path, &frames).unwrap();
        let loaded = load_dataset(&path).unwrap();
        prop_assert_eq!(&loaded, &frames);
        let canon = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(dataset_to_string(&loaded), canon);
    }
}
