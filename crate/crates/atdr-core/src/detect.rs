//! Detection scoring: match validity (Jaccard or the localization /
//! scale / aspect criteria triple), greedy one-to-one assignment with
//! multiple-tracker and multiple-object counts, DR/FAR aggregation and
//! ROC construction.

use std::f64::consts::FRAC_2_PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{BoundingBox, Detection, FrameRecord, ObjectTruth};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("detection rate undefined: dataset contains no ground-truth objects")]
    NoTruths,
    #[error("invalid criterion: {0}")]
    BadCriterion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Intersection-over-union strictly above `epsilon0`.
    Jaccard,
    /// Localization, scale and aspect criteria all within their
    /// (inclusive) thresholds.
    Robin,
}

/// Validity rule for a detection against a reference box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCriterion {
    pub mode: MatchMode,
    /// Jaccard threshold (strict `>`).
    pub epsilon0: f64,
    /// Localization bound (inclusive `<=`).
    pub epsilon1: f64,
    /// Scale bound (inclusive `<=`).
    pub epsilon2: f64,
    /// Aspect bound (inclusive `<=`).
    pub epsilon3: f64,
}

impl MatchCriterion {
    pub fn jaccard() -> Self {
        Self {
            mode: MatchMode::Jaccard,
            ..Self::default()
        }
    }

    pub fn robin() -> Self {
        Self {
            mode: MatchMode::Robin,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, eps) in [
            ("epsilon0", self.epsilon0),
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
            ("epsilon3", self.epsilon3),
        ] {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(EvalError::BadCriterion(format!(
                    "{name} = {eps} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for MatchCriterion {
    fn default() -> Self {
        Self {
            mode: MatchMode::Jaccard,
            epsilon0: 0.5,
            epsilon1: 0.15,
            epsilon2: 0.5,
            epsilon3: 0.15,
        }
    }
}

/// Intersection-over-union of two boxes, 0 when disjoint.
///
/// Areas and overlap are both computed from the corner representation,
/// so identical boxes score exactly 1 and the ratio never exceeds 1.
pub fn jaccard(z: &BoundingBox, z_ref: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = z.corners();
    let (bx0, by0, bx1, by1) = z_ref.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    let union = area_a + area_b - inter;
    inter / union
}

/// Localization error: arctan of the larger center offset relative to the
/// reference size, normalized to [0, 1).
pub fn m1_localization(z: &BoundingBox, z_ref: &BoundingBox) -> f64 {
    let dx = (z.x_center - z_ref.x_center).abs() / z_ref.width;
    let dy = (z.y_center - z_ref.y_center).abs() / z_ref.height;
    FRAC_2_PI * dx.max(dy).atan()
}

/// Scale error: surface difference over the larger surface, in [0, 1].
pub fn m2_scale(z: &BoundingBox, z_ref: &BoundingBox) -> f64 {
    let sd = z.surface();
    let sr = z_ref.surface();
    (sd - sr).abs() / sd.max(sr)
}

/// Aspect error: arctan of the height/width ratio difference, in [0, 1).
pub fn m3_aspect(z: &BoundingBox, z_ref: &BoundingBox) -> f64 {
    let rd = z.height / z.width;
    let rr = z_ref.height / z_ref.width;
    FRAC_2_PI * (rd - rr).abs().atan()
}

/// Whether detection `z` is a valid hit on reference `z_ref`.
pub fn is_good_detection(z: &BoundingBox, z_ref: &BoundingBox, c: &MatchCriterion) -> bool {
    match c.mode {
        MatchMode::Jaccard => jaccard(z, z_ref) > c.epsilon0,
        MatchMode::Robin => {
            m1_localization(z, z_ref) <= c.epsilon1
                && m2_scale(z, z_ref) <= c.epsilon2
                && m3_aspect(z, z_ref) <= c.epsilon3
        }
    }
}

/// Per-frame tallies. Multiple-tracker detections are counted separately
/// and excluded from false alarms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FrameDetectionScore {
    pub true_positives: usize,
    pub false_alarms: usize,
    pub missed: usize,
    pub mt_count: usize,
    pub mo_count: usize,
}

/// One-to-one assignment of a frame's detections to its truths.
#[derive(Debug, Clone, Default)]
pub struct FrameAssignment {
    /// (truth index, detection index) pairs chosen as true positives.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_truths: Vec<usize>,
    /// Unmatched detections that still pass the criterion against an
    /// already-matched truth (surplus boxes on one target).
    pub mt_detections: Vec<usize>,
    /// Unmatched detections passing against no truth: the false alarms.
    pub false_alarm_detections: Vec<usize>,
    /// Detections that pass the criterion against two or more truths
    /// simultaneously (one box covering several targets).
    pub mo_detections: Vec<usize>,
}

impl FrameAssignment {
    pub fn score(&self) -> FrameDetectionScore {
        FrameDetectionScore {
            true_positives: self.pairs.len(),
            false_alarms: self.false_alarm_detections.len(),
            missed: self.unmatched_truths.len(),
            mt_count: self.mt_detections.len(),
            mo_count: self.mo_detections.len(),
        }
    }
}

/// Greedy one-to-one matching. Candidate pairs passing the criterion are
/// taken in order of descending Jaccard overlap (ties broken by
/// descending confidence, then input order), independent of the
/// criterion mode so that the assignment order is criterion-free.
pub fn match_frame(
    truths: &[ObjectTruth],
    detections: &[Detection],
    criterion: &MatchCriterion,
) -> FrameAssignment {
    // valid[d] holds the truth indices detection d passes against
    let mut valid: Vec<Vec<usize>> = vec![Vec::new(); detections.len()];
    let mut candidates: Vec<(f64, f64, usize, usize)> = Vec::new();
    for (d_idx, det) in detections.iter().enumerate() {
        for (t_idx, truth) in truths.iter().enumerate() {
            if is_good_detection(&det.bbox, &truth.bbox, criterion) {
                valid[d_idx].push(t_idx);
                candidates.push((jaccard(&det.bbox, &truth.bbox), det.confidence, d_idx, t_idx));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let mut truth_used = vec![false; truths.len()];
    let mut det_used = vec![false; detections.len()];
    let mut assignment = FrameAssignment::default();
    for &(_, _, d_idx, t_idx) in &candidates {
        if !truth_used[t_idx] && !det_used[d_idx] {
            truth_used[t_idx] = true;
            det_used[d_idx] = true;
            assignment.pairs.push((t_idx, d_idx));
        }
    }
    assignment.unmatched_truths = (0..truths.len()).filter(|&t| !truth_used[t]).collect();
    for (d_idx, truth_hits) in valid.iter().enumerate() {
        if truth_hits.len() >= 2 {
            assignment.mo_detections.push(d_idx);
        }
        if !det_used[d_idx] {
            // a surplus passing detection always points at a matched truth:
            // had its truth been free, the greedy pass would have taken it
            if truth_hits.iter().any(|&t| truth_used[t]) {
                assignment.mt_detections.push(d_idx);
            } else {
                assignment.false_alarm_detections.push(d_idx);
            }
        }
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Confidence cut; detections with `conf >= threshold` are kept.
    pub threshold: f64,
    /// False alarms per frame at this cut.
    pub far: f64,
    /// Good-detection rate over all ground-truth objects at this cut.
    pub dr: f64,
}

/// DR-vs-FAR locus swept over the detection confidence threshold,
/// ordered by decreasing threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Operating point with every detection admitted.
    pub fn loosest(&self) -> &RocPoint {
        self.points.last().expect("curve has the sentinel point")
    }
}

/// Aggregate detection score of a dataset at one confidence threshold.
pub fn score_dataset_at(
    frames: &[FrameRecord],
    criterion: &MatchCriterion,
    threshold: f64,
) -> FrameDetectionScore {
    let mut total = FrameDetectionScore::default();
    let mut kept: Vec<Detection> = Vec::new();
    for frame in frames {
        kept.clear();
        kept.extend(
            frame
                .detections
                .iter()
                .filter(|d| d.confidence >= threshold)
                .cloned(),
        );
        let score = match_frame(&frame.truths, &kept, criterion).score();
        total.true_positives += score.true_positives;
        total.false_alarms += score.false_alarms;
        total.missed += score.missed;
        total.mt_count += score.mt_count;
        total.mo_count += score.mo_count;
    }
    total
}

/// Sweeps the threshold over the distinct confidence values (plus a +inf
/// sentinel that always yields the empty operating point) and re-matches
/// every frame at each cut.
pub fn roc_curve(frames: &[FrameRecord], criterion: &MatchCriterion) -> Result<RocCurve, EvalError> {
    let total_truths: usize = frames.iter().map(|f| f.truths.len()).sum();
    if total_truths == 0 {
        return Err(EvalError::NoTruths);
    }
    let n_frames = frames.len().max(1) as f64;

    let mut thresholds: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.detections.iter().map(|d| d.confidence))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        dr: 0.0,
    }];
    for threshold in thresholds {
        let score = score_dataset_at(frames, criterion, threshold);
        points.push(RocPoint {
            threshold,
            far: score.false_alarms as f64 / n_frames,
            dr: score.true_positives as f64 / total_truths as f64,
        });
    }
    Ok(RocCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bb(xc: f64, yc: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(xc, yc, w, h).unwrap()
    }

    fn truth(bbox: BoundingBox) -> ObjectTruth {
        ObjectTruth {
            object_id: 0,
            bbox,
            recognition_class: "tank".into(),
            identification_class: "T72".into(),
            occlusion_fraction: 0.0,
        }
    }

    fn det(bbox: BoundingBox, conf: f64) -> Detection {
        Detection {
            bbox,
            confidence: conf,
            claimed_class: None,
            tracker_id: None,
        }
    }

    /// Counts unit pixels inside each box and their overlap on an integer
    /// grid; exact for integer-cornered boxes.
    fn jaccard_raster_oracle(a: &BoundingBox, b: &BoundingBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = a.corners();
        let (bx0, by0, bx1, by1) = b.corners();
        let x_lo = ax0.min(bx0).floor() as i64;
        let x_hi = ax1.max(bx1).ceil() as i64;
        let y_lo = ay0.min(by0).floor() as i64;
        let y_hi = ay1.max(by1).ceil() as i64;
        let mut inter = 0u64;
        let mut union = 0u64;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let cx = x as f64 + 0.5;
                let cy = y as f64 + 0.5;
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

    #[test]
    fn jaccard_identical_and_disjoint() {
        let a = bb(3.0, 4.0, 10.0, 6.0);
        assert_eq!(jaccard(&a, &a), 1.0);
        let far = bb(100.0, 100.0, 10.0, 6.0);
        assert_eq!(jaccard(&a, &far), 0.0);
    }

    #[test]
    fn jaccard_half_offset_is_one_third() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(5.0, 0.0, 10.0, 10.0);
        // intersection 50, union 150
        assert_relative_eq!(jaccard(&a, &b), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(jaccard(&a, &b), jaccard_raster_oracle(&a, &b));
    }

    #[test]
    fn jaccard_matches_raster_oracle_exhaustively() {
        // every offset of a 6x4 box against a 5x7 box over a 20x20 grid
        let a = bb(10.0, 10.0, 6.0, 4.0);
        for oy in 0..20 {
            for ox in 0..20 {
                let b = bb(ox as f64 + 2.5, oy as f64 + 3.5, 5.0, 7.0);
                let analytic = jaccard(&a, &b);
                let counted = jaccard_raster_oracle(&a, &b);
                assert_eq!(analytic, counted, "offset ({ox},{oy})");
            }
        }
    }

    #[test]
    fn m1_values() {
        let r = bb(0.0, 0.0, 10.0, 20.0);
        assert_eq!(m1_localization(&bb(0.0, 0.0, 3.0, 3.0), &r), 0.0);
        // |dx| = W_ref, y aligned -> (2/pi) atan(1) = 0.5
        assert_relative_eq!(
            m1_localization(&bb(10.0, 0.0, 3.0, 3.0), &r),
            0.5,
            max_relative = 1e-15
        );
        // offsets (3, 8) with W=10, H=20 -> (2/pi) atan(0.4)
        assert_relative_eq!(
            m1_localization(&bb(3.0, 8.0, 3.0, 3.0), &r),
            0.2422378831816868,
            max_relative = 1e-15
        );
    }

    #[test]
    fn m2_values() {
        let r = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(m2_scale(&bb(50.0, 50.0, 10.0, 10.0), &r), 0.0);
        // double surface -> exactly 0.5
        assert_eq!(m2_scale(&bb(0.0, 0.0, 20.0, 10.0), &r), 0.5);
        // 150 vs 100 -> 1/3
        assert_relative_eq!(
            m2_scale(&bb(0.0, 0.0, 15.0, 10.0), &r),
            1.0 / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn m3_values() {
        let r = bb(0.0, 0.0, 10.0, 10.0);
        // same aspect at a different scale
        assert_eq!(m3_aspect(&bb(0.0, 0.0, 30.0, 30.0), &r), 0.0);
        // ratio 2 vs 1 -> (2/pi) atan(1) = 0.5
        assert_relative_eq!(
            m3_aspect(&bb(0.0, 0.0, 10.0, 20.0), &r),
            0.5,
            max_relative = 1e-15
        );
        // 1.5 vs 1.2 -> (2/pi) atan(0.3)
        assert_relative_eq!(
            m3_aspect(&bb(0.0, 0.0, 10.0, 15.0), &bb(0.0, 0.0, 10.0, 12.0)),
            0.18554715815548469,
            max_relative = 1e-14
        );
    }

    #[test]
    fn good_detection_modes() {
        let r = bb(0.0, 0.0, 10.0, 10.0);
        assert!(is_good_detection(&r, &r, &MatchCriterion::jaccard()));
        assert!(is_good_detection(&r, &r, &MatchCriterion::robin()));
        let far = bb(50.0, 50.0, 10.0, 10.0);
        assert!(!is_good_detection(&far, &r, &MatchCriterion::jaccard()));
        // jaccard exactly at epsilon0 is rejected: the inequality is strict
        let half = bb(0.0, 0.0, 10.0, 5.0);
        let c = MatchCriterion {
            epsilon0: 0.5,
            ..MatchCriterion::jaccard()
        };
        assert_eq!(jaccard(&half, &r), 0.5);
        assert!(!is_good_detection(&half, &r, &c));
    }

    #[test]
    fn match_frame_simple_tp() {
        let t = vec![truth(bb(10.0, 10.0, 6.0, 4.0))];
        let d = vec![det(bb(10.0, 10.0, 6.0, 4.0), 1.0)];
        let score = match_frame(&t, &d, &MatchCriterion::jaccard()).score();
        assert_eq!(
            score,
            FrameDetectionScore {
                true_positives: 1,
                false_alarms: 0,
                missed: 0,
                mt_count: 0,
                mo_count: 0
            }
        );
    }

    #[test]
    fn match_frame_multiple_trackers() {
        let t = vec![truth(bb(10.0, 10.0, 8.0, 8.0))];
        let d = vec![
            det(bb(10.0, 10.0, 8.0, 8.0), 0.9),
            det(bb(10.5, 10.0, 8.0, 8.0), 0.8),
        ];
        let score = match_frame(&t, &d, &MatchCriterion::jaccard()).score();
        assert_eq!(score.true_positives, 1);
        assert_eq!(score.mt_count, 1);
        assert_eq!(score.false_alarms, 0);
    }

    #[test]
    fn match_frame_multiple_objects() {
        // two adjacent truths, one large detection valid against both
        let t = vec![
            truth(bb(10.0, 10.0, 10.0, 10.0)),
            truth(bb(21.0, 10.0, 10.0, 10.0)),
        ];
        let big = bb(15.5, 10.0, 21.0, 10.0);
        let c = MatchCriterion {
            mode: MatchMode::Robin,
            epsilon1: 0.5,
            epsilon2: 0.6,
            epsilon3: 0.5,
            ..MatchCriterion::default()
        };
        assert!(is_good_detection(&big, &t[0].bbox, &c));
        assert!(is_good_detection(&big, &t[1].bbox, &c));
        let score = match_frame(&t, &[det(big, 1.0)], &c).score();
        assert_eq!(score.mo_count, 1);
        assert_eq!(score.true_positives, 1);
        assert_eq!(score.missed, 1);
        assert_eq!(score.false_alarms, 0);
    }

    #[test]
    fn match_frame_false_alarm() {
        let t = vec![truth(bb(10.0, 10.0, 6.0, 4.0))];
        let d = vec![det(bb(100.0, 100.0, 6.0, 4.0), 0.7)];
        let score = match_frame(&t, &d, &MatchCriterion::jaccard()).score();
        assert_eq!(score.false_alarms, 1);
        assert_eq!(score.missed, 1);
    }

    fn frame(truths: Vec<ObjectTruth>, detections: Vec<Detection>, idx: u64) -> FrameRecord {
        FrameRecord {
            frame_index: idx,
            image_path: String::new(),
            truths,
            detections,
        }
    }

    #[test]
    fn roc_perfect_detector() {
        let frames = vec![frame(
            vec![truth(bb(10.0, 10.0, 6.0, 4.0))],
            vec![det(bb(10.0, 10.0, 6.0, 4.0), 1.0)],
            0,
        )];
        let curve = roc_curve(&frames, &MatchCriterion::jaccard()).unwrap();
        // +inf sentinel first, then the single operating point
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[0].far, 0.0);
        assert_eq!(curve.points[0].dr, 0.0);
        assert_eq!(curve.loosest().far, 0.0);
        assert_eq!(curve.loosest().dr, 1.0);
    }

    #[test]
    fn roc_zero_detections() {
        let frames = vec![frame(vec![truth(bb(10.0, 10.0, 6.0, 4.0))], vec![], 0)];
        let curve = roc_curve(&frames, &MatchCriterion::jaccard()).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.loosest().dr, 0.0);
        assert_eq!(curve.loosest().far, 0.0);
    }

    #[test]
    fn roc_requires_truths() {
        let frames = vec![frame(vec![], vec![det(bb(0.0, 0.0, 2.0, 2.0), 0.5)], 0)];
        assert!(matches!(
            roc_curve(&frames, &MatchCriterion::jaccard()),
            Err(EvalError::NoTruths)
        ));
    }

    #[test]
    fn roc_monotone_staircase() {
        // a mix of good detections and clutter at assorted confidences
        let truths = vec![
            truth(bb(10.0, 10.0, 8.0, 6.0)),
            truth(bb(40.0, 40.0, 8.0, 6.0)),
        ];
        let dets = vec![
            det(bb(10.2, 10.0, 8.0, 6.0), 0.9),
            det(bb(40.0, 40.8, 8.0, 6.0), 0.4),
            det(bb(70.0, 70.0, 8.0, 6.0), 0.6),
            det(bb(90.0, 20.0, 8.0, 6.0), 0.2),
        ];
        let frames = vec![frame(truths, dets, 0)];
        let curve = roc_curve(&frames, &MatchCriterion::jaccard()).unwrap();
        for pair in curve.points.windows(2) {
            assert!(pair[1].threshold < pair[0].threshold);
            assert!(pair[1].dr >= pair[0].dr);
            assert!(pair[1].far >= pair[0].far);
        }
        assert_eq!(curve.loosest().dr, 1.0);
        assert_eq!(curve.loosest().far, 2.0);
    }
}
