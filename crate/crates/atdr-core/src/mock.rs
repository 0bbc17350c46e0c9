//! Synthetic detector: perturbs ground truth into detections with
//! controllable pathologies, standing in for an algorithm under test so
//! the whole evaluation pipeline can run end to end.
//!
//! Pathologies: Gaussian center/size jitter (scaled by the box size),
//! dropped truths, Poisson clutter, label corruption and tracker-id
//! switching. Confidence decays with the jitter magnitude, giving the
//! ROC sweep a meaningful score axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::annotations::{BoundingBox, ClassTaxonomy, Detection, FrameRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockParams {
    /// Center jitter sigma as a fraction of the box width (both axes use
    /// the width, so flat boxes miss more often on y), and size jitter
    /// sigma as a fraction of each dimension.
    pub jitter_sigma: f64,
    /// Probability of dropping a truth entirely.
    pub miss_rate: f64,
    /// Expected clutter boxes per frame (Poisson).
    pub clutter_rate: f64,
    /// Probability that a kept detection claims the correct
    /// identification label; otherwise a random other label.
    pub classify_accuracy: f64,
    /// Per-frame probability that an object's tracker id switches to a
    /// fresh id.
    pub track_switch_rate: f64,
    pub seed: u64,
    /// Frame extent for clutter placement, pixels.
    pub frame_size: [f64; 2],
}

impl Default for MockParams {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.0,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            classify_accuracy: 1.0,
            track_switch_rate: 0.0,
            seed: 0,
            frame_size: [640.0, 512.0],
        }
    }
}

impl MockParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("miss_rate", self.miss_rate),
            ("classify_accuracy", self.classify_accuracy),
            ("track_switch_rate", self.track_switch_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.jitter_sigma < 0.0 || self.clutter_rate < 0.0 {
            return Err("jitter_sigma and clutter_rate must be >= 0".into());
        }
        Ok(())
    }
}

/// Returns a copy of the frames with synthetic detections replacing
/// whatever detections were present.
pub fn generate_mock_detections(
    frames: &[FrameRecord],
    params: &MockParams,
    taxonomy: Option<&ClassTaxonomy>,
) -> Result<Vec<FrameRecord>, String> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // label universe for corruption: the taxonomy's identification
    // labels, or the labels observed in the data
    let label_pool: Vec<String> = match taxonomy {
        Some(tax) => tax.identification_classes().map(str::to_string).collect(),
        None => {
            let mut labels: Vec<String> = frames
                .iter()
                .flat_map(|f| f.truths.iter().map(|t| t.identification_class.clone()))
                .collect();
            labels.sort();
            labels.dedup();
            labels
        }
    };

    // tracker ids persist across frames until a switch event
    let mut current_tracker: std::collections::BTreeMap<i64, i64> = Default::default();
    let mut next_tracker_id: i64 = 1;

    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut detections = Vec::new();
        for truth in &frame.truths {
            // tracker id evolves even through misses: the simulated
            // tracker keeps its state while the detector blinks
            let tid = match current_tracker.get(&truth.object_id) {
                None => {
                    let id = next_tracker_id;
                    next_tracker_id += 1;
                    current_tracker.insert(truth.object_id, id);
                    id
                }
                Some(&id) => {
                    if params.track_switch_rate > 0.0
                        && rng.gen_bool(params.track_switch_rate)
                    {
                        let fresh = next_tracker_id;
                        next_tracker_id += 1;
                        current_tracker.insert(truth.object_id, fresh);
                        fresh
                    } else {
                        id
                    }
                }
            };

            if params.miss_rate > 0.0 && rng.gen_bool(params.miss_rate) {
                continue;
            }

            let b = &truth.bbox;
            let dx = params.jitter_sigma * b.width * unit.sample(&mut rng);
            let dy = params.jitter_sigma * b.width * unit.sample(&mut rng);
            let sw = 1.0 + params.jitter_sigma * unit.sample(&mut rng);
            let sh = 1.0 + params.jitter_sigma * unit.sample(&mut rng);
            let width = (b.width * sw).max(0.1 * b.width);
            let height = (b.height * sh).max(0.1 * b.height);
            let bbox = BoundingBox::new(b.x_center + dx, b.y_center + dy, width, height)
                .expect("positive dimensions");
            // confidence decays with the normalized perturbation
            let jitter_mag = ((dx / b.width).powi(2) + (dy / b.width).powi(2)).sqrt()
                + (width - b.width).abs() / b.width
                + (height - b.height).abs() / b.height;
            let confidence = (-jitter_mag).exp().clamp(0.0, 1.0);

            let claimed_class = if label_pool.is_empty() {
                None
            } else if params.classify_accuracy >= 1.0
                || rng.gen_bool(params.classify_accuracy)
            {
                Some(truth.identification_class.clone())
            } else {
                let others: Vec<&String> = label_pool
                    .iter()
                    .filter(|l| **l != truth.identification_class)
                    .collect();
                if others.is_empty() {
                    Some(truth.identification_class.clone())
                } else {
                    Some(others[rng.gen_range(0..others.len())].clone())
                }
            };

            detections.push(Detection {
                bbox,
                confidence,
                claimed_class,
                tracker_id: Some(tid),
            });
        }

        if params.clutter_rate > 0.0 {
            let poisson = Poisson::new(params.clutter_rate).map_err(|e| e.to_string())?;
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                let width = rng.gen_range(8.0..64.0);
                let height = rng.gen_range(8.0..64.0);
                let x = rng.gen_range(0.0..params.frame_size[0]);
                let y = rng.gen_range(0.0..params.frame_size[1]);
                // clutter scores skew low but overlap the true range
                let u: f64 = rng.gen_range(0.0..1.0);
                detections.push(Detection {
                    bbox: BoundingBox::new(x, y, width, height).expect("positive dims"),
                    confidence: u * u,
                    claimed_class: None,
                    tracker_id: None,
                });
            }
        }

        out.push(FrameRecord {
            frame_index: frame.frame_index,
            image_path: frame.image_path.clone(),
            truths: frame.truths.clone(),
            detections,
        });
    }
    Ok(out)
}
