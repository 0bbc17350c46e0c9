//! Tracker identity continuity over sequences: counts of targets whose
//! tracker identity changes (FIT) and of trackers that jump between
//! targets (FIO).
//!
//! An association exists in a frame when a true-positive match carries a
//! tracker id. Event counting compresses consecutive duplicates, so a
//! coverage gap costs nothing by itself; only an actual identity change
//! does. A revisit of an earlier id after another id still counts as a
//! change, because each switch is an identity discontinuity.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::annotations::FrameRecord;
use crate::detect::{match_frame, MatchCriterion};

/// Per-frame (object_id, tracker_id) associations derived from matching.
#[derive(Debug, Clone, Default)]
pub struct AssociationTimeline {
    /// One entry per frame, in input order.
    pub frames: Vec<Vec<(i64, i64)>>,
}

impl AssociationTimeline {
    pub fn from_frames(frames: &[FrameRecord], criterion: &MatchCriterion) -> Self {
        let mut timeline = Vec::with_capacity(frames.len());
        for frame in frames {
            let assignment = match_frame(&frame.truths, &frame.detections, criterion);
            let mut pairs: Vec<(i64, i64)> = assignment
                .pairs
                .iter()
                .filter_map(|&(t_idx, d_idx)| {
                    frame.detections[d_idx]
                        .tracker_id
                        .map(|tid| (frame.truths[t_idx].object_id, tid))
                })
                .collect();
            pairs.sort_unstable();
            timeline.push(pairs);
        }
        Self { frames: timeline }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrackScore {
    /// Identity changes summed over targets.
    pub fit_count: usize,
    /// Target changes summed over trackers.
    pub fio_count: usize,
    /// object_id -> tracker ids seen over time, consecutive duplicates
    /// compressed.
    pub per_object_tracker_history: BTreeMap<i64, Vec<i64>>,
    /// tracker_id -> object ids seen over time, consecutive duplicates
    /// compressed.
    pub per_tracker_object_history: BTreeMap<i64, Vec<i64>>,
}

fn push_compressed(history: &mut Vec<i64>, value: i64) {
    if history.last() != Some(&value) {
        history.push(value);
    }
}

pub fn score_timeline(timeline: &AssociationTimeline) -> TrackScore {
    let mut objects: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    let mut trackers: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for frame in &timeline.frames {
        for &(object_id, tracker_id) in frame {
            push_compressed(objects.entry(object_id).or_default(), tracker_id);
            push_compressed(trackers.entry(tracker_id).or_default(), object_id);
        }
    }
    let fit_count = objects.values().map(|h| h.len().saturating_sub(1)).sum();
    let fio_count = trackers.values().map(|h| h.len().saturating_sub(1)).sum();
    TrackScore {
        fit_count,
        fio_count,
        per_object_tracker_history: objects,
        per_tracker_object_history: trackers,
    }
}

/// Scores tracker continuity for a sequence given in temporal order.
pub fn score_tracks(frames: &[FrameRecord], criterion: &MatchCriterion) -> TrackScore {
    score_timeline(&AssociationTimeline::from_frames(frames, criterion))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timeline(frames: Vec<Vec<(i64, i64)>>) -> AssociationTimeline {
        AssociationTimeline { frames }
    }

    #[test]
    fn stable_track_costs_nothing() {
        let score = score_timeline(&timeline(vec![
            vec![(1, 10)],
            vec![(1, 10)],
            vec![(1, 10)],
        ]));
        assert_eq!(score.fit_count, 0);
        assert_eq!(score.fio_count, 0);
    }

    #[test]
    fn scenario_one_fit_one_fio() {
        // target 1 gets tracker 1 then tracker 2; tracker 3 starts on
        // target 2 then jumps to target 3
        let score = score_timeline(&timeline(vec![
            vec![(1, 1), (2, 3)],
            vec![(1, 1), (2, 3)],
            vec![(1, 2), (3, 3)],
            vec![(1, 2), (3, 3)],
        ]));
        assert_eq!(score.fit_count, 1);
        assert_eq!(score.fio_count, 1);
        assert_eq!(score.per_object_tracker_history[&1], vec![1, 2]);
        assert_eq!(score.per_tracker_object_history[&3], vec![2, 3]);
    }

    #[test]
    fn revisit_counts_twice() {
        let score = score_timeline(&timeline(vec![
            vec![(1, 1)],
            vec![(1, 2)],
            vec![(1, 1)],
        ]));
        assert_eq!(score.per_object_tracker_history[&1], vec![1, 2, 1]);
        assert_eq!(score.fit_count, 2);
    }

    #[test]
    fn gaps_do_not_create_events() {
        let score = score_timeline(&timeline(vec![
            vec![(1, 1)],
            vec![],
            vec![(1, 1)],
        ]));
        assert_eq!(score.fit_count, 0);
        assert_eq!(score.fio_count, 0);
    }

    #[test]
    fn empty_timeline_zero_counts() {
        let score = score_timeline(&timeline(vec![]));
        assert_eq!(score, TrackScore::default());
    }
}
