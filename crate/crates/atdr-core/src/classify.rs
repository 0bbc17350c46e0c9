//! Confusion matrices over matched detections, at the recognition
//! (coarse) or identification (fine) level.
//!
//! Misses and false alarms are excluded: detection quality is reported
//! by the detection metrics, classification quality by these matrices.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::annotations::{AnnotationError, ClassTaxonomy, FrameRecord};
use crate::detect::{match_frame, MatchCriterion};

/// Reserved predicted bucket for detections that carry no usable label.
pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLevel {
    Recognition,
    Identification,
}

/// Square count grid indexed `[true label][predicted label]`, with the
/// reserved "unclassified" label appended as the last column/row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    fn new(mut labels: Vec<String>) -> Self {
        labels.push(UNCLASSIFIED.to_string());
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, true_label: &str, predicted: &str) -> u64 {
        match (self.index_of(true_label), self.index_of(predicted)) {
            (Some(t), Some(p)) => self.counts[t][p],
            _ => 0,
        }
    }

    fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn add(&mut self, true_idx: usize, pred_idx: usize) {
        self.counts[true_idx][pred_idx] += 1;
    }
}

/// Per-class correct-classification ratios plus overall accuracy.
/// Classes whose row is empty are undefined, not zero.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationRates {
    pub per_class: BTreeMap<String, Option<f64>>,
    pub overall: Option<f64>,
}

/// Builds the confusion matrix at the requested level by running the
/// detection matching and tallying each true-positive pair.
///
/// Identification-level claimed labels are projected to their parent when
/// scoring at the recognition level. A claim at the recognition level
/// cannot be refined downward, so at the identification level it lands in
/// the "unclassified" bucket.
pub fn confusion(
    frames: &[FrameRecord],
    criterion: &MatchCriterion,
    level: ClassLevel,
    taxonomy: &ClassTaxonomy,
) -> Result<ConfusionMatrix, AnnotationError> {
    let labels: Vec<String> = match level {
        ClassLevel::Recognition => taxonomy.recognition_classes().map(str::to_string).collect(),
        ClassLevel::Identification => taxonomy
            .identification_classes()
            .map(str::to_string)
            .collect(),
    };
    let mut matrix = ConfusionMatrix::new(labels);

    for frame in frames {
        let assignment = match_frame(&frame.truths, &frame.detections, criterion);
        for &(t_idx, d_idx) in &assignment.pairs {
            let truth = &frame.truths[t_idx];
            let true_label = match level {
                ClassLevel::Recognition => &truth.recognition_class,
                ClassLevel::Identification => &truth.identification_class,
            };
            let true_idx = matrix.index_of(true_label).ok_or_else(|| {
                AnnotationError::UnknownLabel {
                    label: true_label.clone(),
                    frame: frame.frame_index,
                }
            })?;

            let claimed = frame.detections[d_idx].claimed_class.as_deref();
            let pred_label = match claimed {
                None => UNCLASSIFIED.to_string(),
                Some(label) => {
                    if !taxonomy.is_recognition(label) && !taxonomy.is_identification(label) {
                        return Err(AnnotationError::UnknownLabel {
                            label: label.to_string(),
                            frame: frame.frame_index,
                        });
                    }
                    match level {
                        ClassLevel::Recognition => {
                            if taxonomy.is_recognition(label) {
                                label.to_string()
                            } else {
                                taxonomy.parent_of(label).expect("identification label").to_string()
                            }
                        }
                        ClassLevel::Identification => {
                            if taxonomy.is_identification(label) {
                                label.to_string()
                            } else {
                                UNCLASSIFIED.to_string()
                            }
                        }
                    }
                }
            };
            let pred_idx = matrix.index_of(&pred_label).expect("label or unclassified");
            matrix.add(true_idx, pred_idx);
        }
    }
    Ok(matrix)
}

/// Diagonal-over-row rates and trace-over-total accuracy.
pub fn classification_rates(matrix: &ConfusionMatrix) -> ClassificationRates {
    let n = matrix.labels.len();
    let mut per_class = BTreeMap::new();
    let mut trace = 0u64;
    for i in 0..n {
        let row_sum: u64 = matrix.counts[i].iter().sum();
        trace += matrix.counts[i][i];
        let rate = if row_sum > 0 {
            Some(matrix.counts[i][i] as f64 / row_sum as f64)
        } else {
            None
        };
        per_class.insert(matrix.labels[i].clone(), rate);
    }
    let total = matrix.total();
    ClassificationRates {
        per_class,
        overall: if total > 0 {
            Some(trace as f64 / total as f64)
        } else {
            None
        },
    }
}

/// Aggregates an identification-level matrix through the taxonomy's
/// parent map; used to cross-check the recognition-level matrix.
pub fn aggregate_to_recognition(
    identification: &ConfusionMatrix,
    taxonomy: &ClassTaxonomy,
) -> ConfusionMatrix {
    let labels: Vec<String> = taxonomy.recognition_classes().map(str::to_string).collect();
    let mut out = ConfusionMatrix::new(labels);
    let project = |label: &str| -> String {
        taxonomy
            .parent_of(label)
            .map(str::to_string)
            .unwrap_or_else(|| UNCLASSIFIED.to_string())
    };
    for (i, true_label) in identification.labels.iter().enumerate() {
        for (j, pred_label) in identification.labels.iter().enumerate() {
            let count = identification.counts[i][j];
            if count == 0 {
                continue;
            }
            let ti = out.index_of(&project(true_label)).expect("projected label");
            let pj = out.index_of(&project(pred_label)).expect("projected label");
            out.counts[ti][pj] += count;
        }
    }
    out
}
