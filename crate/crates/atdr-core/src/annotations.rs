//! Canonical data model for ground truth, detections and class labels,
//! plus the JSON Lines dataset format shared by every other module.
//!
//! One line per frame:
//!
//! ```json
//! {"frame": 0, "image": "frames/000000.png",
//!  "truths": [{"id": 1, "bbox": [64.0, 48.0, 20.0, 10.0],
//!              "rec_class": "tank", "id_class": "T72", "occ": 0.0}],
//!  "detections": [{"bbox": [64.5, 48.2, 21.0, 9.5], "conf": 0.93,
//!                  "class": "T72", "track": 4}]}
//! ```
//!
//! All types are immutable after construction and safe to share across
//! parallel workers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("invalid {field} at line {line}: {reason}")]
    Invalid {
        field: &'static str,
        line: usize,
        reason: String,
    },
    #[error("frame_index not increasing at line {line}")]
    FrameOrder { line: usize },
    #[error("unknown label \"{label}\" at frame {frame}")]
    UnknownLabel { label: String, frame: u64 },
    #[error("taxonomy error: {0}")]
    Taxonomy(String),
}

/// Axis-aligned box with center/size semantics and continuous
/// (sub-pixel) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x_center: f64, y_center: f64, width: f64, height: f64) -> Option<Self> {
        if width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite() {
            Some(Self {
                x_center,
                y_center,
                width,
                height,
            })
        } else {
            None
        }
    }

    pub fn surface(&self) -> f64 {
        self.width * self.height
    }

    /// Corner form (x_min, y_min, x_max, y_max); internal helper for
    /// overlap computations.
    pub(crate) fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.x_center - self.width / 2.0,
            self.y_center - self.height / 2.0,
            self.x_center + self.width / 2.0,
            self.y_center + self.height / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTruth {
    /// Stable identity across the frames of a sequence.
    pub object_id: i64,
    pub bbox: BoundingBox,
    /// Coarse label ("tank", "truck", ...).
    pub recognition_class: String,
    /// Fine label ("T72", "AMX30", ...); must map to `recognition_class`
    /// in the taxonomy.
    pub identification_class: String,
    /// Occluded fraction of the target surface, in [0, 1].
    pub occlusion_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Confidence in [0, 1]. Score-less algorithms should write 1.0,
    /// which degenerates the ROC to a single operating point.
    pub confidence: f64,
    /// Claimed label at either taxonomy level, if the algorithm classifies.
    pub claimed_class: Option<String>,
    /// Stable tracker identity, if the algorithm tracks.
    pub tracker_id: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub image_path: String,
    pub truths: Vec<ObjectTruth>,
    pub detections: Vec<Detection>,
}

/// Two-level class taxonomy: identification labels (fine) grouped under
/// recognition labels (coarse).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTaxonomy {
    recognition: BTreeSet<String>,
    identification: BTreeSet<String>,
    parent: BTreeMap<String, String>,
}

impl ClassTaxonomy {
    /// Builds from (recognition label, identification labels) groups.
    pub fn from_groups<I, S, T>(groups: I) -> Result<Self, AnnotationError>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut recognition = BTreeSet::new();
        let mut identification = BTreeSet::new();
        let mut parent = BTreeMap::new();
        for (rec, ids) in groups {
            let rec = rec.into();
            recognition.insert(rec.clone());
            for id in ids {
                let id = id.into();
                if let Some(prev) = parent.get(&id) {
                    if prev != &rec {
                        return Err(AnnotationError::Taxonomy(format!(
                            "identification label \"{id}\" mapped to both \"{prev}\" and \"{rec}\""
                        )));
                    }
                }
                identification.insert(id.clone());
                parent.insert(id, rec.clone());
            }
        }
        Ok(Self {
            recognition,
            identification,
            parent,
        })
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: TaxonomyFile =
            serde_json::from_str(&text).map_err(|source| AnnotationError::Parse {
                line: source.line(),
                source,
            })?;
        Self::from_groups(file.classes)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotationError> {
        let mut classes: BTreeMap<String, Vec<String>> = self
            .recognition
            .iter()
            .map(|r| (r.clone(), Vec::new()))
            .collect();
        for (id, rec) in &self.parent {
            classes.get_mut(rec).expect("parent in recognition").push(id.clone());
        }
        let text = serde_json::to_string_pretty(&TaxonomyFile { classes }).expect("serialize");
        std::fs::write(path, text).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn recognition_classes(&self) -> impl Iterator<Item = &str> {
        self.recognition.iter().map(String::as_str)
    }

    pub fn identification_classes(&self) -> impl Iterator<Item = &str> {
        self.identification.iter().map(String::as_str)
    }

    pub fn is_recognition(&self, label: &str) -> bool {
        self.recognition.contains(label)
    }

    pub fn is_identification(&self, label: &str) -> bool {
        self.identification.contains(label)
    }

    /// Recognition parent of an identification label.
    pub fn parent_of(&self, identification: &str) -> Option<&str> {
        self.parent.get(identification).map(String::as_str)
    }

    /// Fails on the first truth whose identification label is missing from
    /// the taxonomy or mapped to a different recognition class.
    pub fn validate_frames(&self, frames: &[FrameRecord]) -> Result<(), AnnotationError> {
        for frame in frames {
            for truth in &frame.truths {
                match self.parent_of(&truth.identification_class) {
                    None => {
                        return Err(AnnotationError::UnknownLabel {
                            label: truth.identification_class.clone(),
                            frame: frame.frame_index,
                        })
                    }
                    Some(rec) if rec != truth.recognition_class => {
                        return Err(AnnotationError::Taxonomy(format!(
                            "frame {}: \"{}\" belongs to \"{}\", not \"{}\"",
                            frame.frame_index,
                            truth.identification_class,
                            rec,
                            truth.recognition_class
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    classes: BTreeMap<String, Vec<String>>,
}

// Wire schema. Field order here is the canonical serialization order.
#[derive(Serialize, Deserialize)]
struct FrameWire {
    frame: u64,
    image: String,
    truths: Vec<TruthWire>,
    detections: Vec<DetectionWire>,
}

#[derive(Serialize, Deserialize)]
struct TruthWire {
    id: i64,
    bbox: [f64; 4],
    rec_class: String,
    id_class: String,
    occ: f64,
}

#[derive(Serialize, Deserialize)]
struct DetectionWire {
    bbox: [f64; 4],
    conf: f64,
    class: Option<String>,
    track: Option<i64>,
}

fn bbox_from_wire(raw: [f64; 4], line: usize) -> Result<BoundingBox, AnnotationError> {
    BoundingBox::new(raw[0], raw[1], raw[2], raw[3]).ok_or(AnnotationError::Invalid {
        field: "bbox",
        line,
        reason: format!("width and height must be positive, got [{}, {}]", raw[2], raw[3]),
    })
}

fn frame_from_wire(wire: FrameWire, line: usize) -> Result<FrameRecord, AnnotationError> {
    let mut truths = Vec::with_capacity(wire.truths.len());
    let mut object_ids = HashSet::new();
    for t in wire.truths {
        if !object_ids.insert(t.id) {
            return Err(AnnotationError::Invalid {
                field: "id",
                line,
                reason: format!("object_id {} repeated within frame", t.id),
            });
        }
        if !(0.0..=1.0).contains(&t.occ) {
            return Err(AnnotationError::Invalid {
                field: "occ",
                line,
                reason: format!("occlusion fraction {} outside [0, 1]", t.occ),
            });
        }
        truths.push(ObjectTruth {
            object_id: t.id,
            bbox: bbox_from_wire(t.bbox, line)?,
            recognition_class: t.rec_class,
            identification_class: t.id_class,
            occlusion_fraction: t.occ,
        });
    }
    let mut detections = Vec::with_capacity(wire.detections.len());
    let mut tracker_ids = HashSet::new();
    for d in wire.detections {
        if !(0.0..=1.0).contains(&d.conf) {
            return Err(AnnotationError::Invalid {
                field: "conf",
                line,
                reason: format!("confidence {} outside [0, 1]", d.conf),
            });
        }
        if let Some(track) = d.track {
            if !tracker_ids.insert(track) {
                return Err(AnnotationError::Invalid {
                    field: "track",
                    line,
                    reason: format!("tracker_id {track} repeated within frame"),
                });
            }
        }
        detections.push(Detection {
            bbox: bbox_from_wire(d.bbox, line)?,
            confidence: d.conf,
            claimed_class: d.class,
            tracker_id: d.track,
        });
    }
    Ok(FrameRecord {
        frame_index: wire.frame,
        image_path: wire.image,
        truths,
        detections,
    })
}

fn frame_to_wire(frame: &FrameRecord) -> FrameWire {
    FrameWire {
        frame: frame.frame_index,
        image: frame.image_path.clone(),
        truths: frame
            .truths
            .iter()
            .map(|t| TruthWire {
                id: t.object_id,
                bbox: [t.bbox.x_center, t.bbox.y_center, t.bbox.width, t.bbox.height],
                rec_class: t.recognition_class.clone(),
                id_class: t.identification_class.clone(),
                occ: t.occlusion_fraction,
            })
            .collect(),
        detections: frame
            .detections
            .iter()
            .map(|d| DetectionWire {
                bbox: [d.bbox.x_center, d.bbox.y_center, d.bbox.width, d.bbox.height],
                conf: d.confidence,
                class: d.claimed_class.clone(),
                track: d.tracker_id,
            })
            .collect(),
    }
}

/// Loads a JSON Lines dataset, validating all record invariants.
///
/// Image assets are not opened here; a missing asset only logs a warning
/// because the metric modules never need pixels.
pub fn load_dataset(path: &Path) -> Result<Vec<FrameRecord>, AnnotationError> {
    let file = std::fs::File::open(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut frames: Vec<FrameRecord> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: FrameWire =
            serde_json::from_str(&line).map_err(|source| AnnotationError::Parse {
                line: line_no,
                source,
            })?;
        let frame = frame_from_wire(wire, line_no)?;
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(AnnotationError::FrameOrder { line: line_no });
            }
        }
        if !frame.image_path.is_empty() && !base.join(&frame.image_path).exists() {
            log::warn!(
                "image asset {} referenced at line {} not found",
                frame.image_path,
                line_no
            );
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Canonical serialization of one frame (fixed field order, minimal
/// JSON number formatting).
pub fn frame_to_json(frame: &FrameRecord) -> String {
    serde_json::to_string(&frame_to_wire(frame)).expect("frame serialization")
}

pub fn dataset_to_string(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for frame in frames {
        let _ = writeln!(out, "{}", frame_to_json(frame));
    }
    out
}

/// Writes the canonical JSON Lines form; `save_dataset` after
/// `load_dataset` is byte-stable.
pub fn save_dataset(path: &Path, frames: &[FrameRecord]) -> Result<(), AnnotationError> {
    let mut file = std::fs::File::create(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(dataset_to_string(frames).as_bytes())
        .map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn bbox_surface() {
        assert_eq!(BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap().surface(), 100.0);
        assert_eq!(BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap().surface(), 1.0);
        assert_eq!(BoundingBox::new(5.0, -2.0, 3.5, 2.0).unwrap().surface(), 7.0);
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_none());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -2.0).is_none());
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let (_dir, path) = write_lines(&[]);
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn minimal_record() {
        let (_dir, path) = write_lines(&[
            r#"{"frame": 0, "image": "a.png", "truths": [{"id": 1, "bbox": [10, 10, 4, 4], "rec_class": "tank", "id_class": "T72", "occ": 0.0}], "detections": []}"#,
        ]);
        let frames = load_dataset(&path).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].truths.len(), 1);
        assert!(frames[0].detections.is_empty());
    }

    #[test]
    fn frame_order_error_names_line() {
        let rec = |f: u64| {
            format!(
                r#"{{"frame": {f}, "image": "", "truths": [], "detections": []}}"#
            )
        };
        let lines = [rec(0), rec(2), rec(1)];
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let (_dir, path) = write_lines(&refs);
        let err = load_dataset(&path).unwrap_err();
        assert_eq!(err.to_string(), "frame_index not increasing at line 3");
    }

    #[test]
    fn parse_error_names_line() {
        let (_dir, path) = write_lines(&[
            r#"{"frame": 0, "image": "", "truths": [], "detections": []}"#,
            r#"{"frame": 1, nope}"#,
        ]);
        match load_dataset(&path).unwrap_err() {
            AnnotationError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_object_id_rejected() {
        let (_dir, path) = write_lines(&[
            r#"{"frame": 0, "image": "", "truths": [{"id": 1, "bbox": [0,0,1,1], "rec_class": "a", "id_class": "b", "occ": 0}, {"id": 1, "bbox": [5,5,1,1], "rec_class": "a", "id_class": "b", "occ": 0}], "detections": []}"#,
        ]);
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("id"), "{err}");
    }

    #[test]
    fn confidence_out_of_range_rejected() {
        let (_dir, path) = write_lines(&[
            r#"{"frame": 0, "image": "", "truths": [], "detections": [{"bbox": [0,0,1,1], "conf": 1.5, "class": null, "track": null}]}"#,
        ]);
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("conf"), "{err}");
    }

    #[test]
    fn canonical_save_is_byte_stable() {
        let (_dir, path) = write_lines(&[
            r#"{"frame": 0, "image": "x.png", "truths": [{"id": 3, "bbox": [10.5, 10.25, 4, 4], "rec_class": "tank", "id_class": "T72", "occ": 0.25}], "detections": [{"bbox": [10, 10, 4, 4], "conf": 0.5, "class": "T72", "track": 9}]}"#,
            r#"{"frame": 4, "image": "y.png", "truths": [], "detections": [{"bbox": [1, 2, 3, 4], "conf": 1.0, "class": null, "track": null}]}"#,
        ]);
        let frames = load_dataset(&path).unwrap();
        let canon = dataset_to_string(&frames);
        let dir2 = tempfile::tempdir().unwrap();
        let path2 = dir2.path().join("canon.jsonl");
        save_dataset(&path2, &frames).unwrap();
        let frames2 = load_dataset(&path2).unwrap();
        assert_eq!(frames, frames2);
        assert_eq!(canon, dataset_to_string(&frames2));
        assert_eq!(std::fs::read_to_string(&path2).unwrap(), canon);
    }

    #[test]
    fn taxonomy_roundtrip_and_validation() {
        let tax = ClassTaxonomy::from_groups([
            ("tank", vec!["AMX30", "Leclerc", "T72"]),
            ("truck", vec!["TRM2000"]),
        ])
        .unwrap();
        assert_eq!(tax.parent_of("T72"), Some("tank"));
        assert!(tax.is_recognition("truck"));
        assert!(!tax.is_identification("tank"));

        let frame = FrameRecord {
            frame_index: 0,
            image_path: String::new(),
            truths: vec![ObjectTruth {
                object_id: 1,
                bbox: BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
                recognition_class: "tank".into(),
                identification_class: "BTR80".into(),
                occlusion_fraction: 0.0,
            }],
            detections: vec![],
        };
        let err = tax.validate_frames(&[frame]).unwrap_err().to_string();
        assert!(err.contains("BTR80"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tax.json");
        tax.save(&path).unwrap();
        assert_eq!(ClassTaxonomy::load(&path).unwrap(), tax);
    }

    #[test]
    fn conflicting_parent_rejected() {
        let err = ClassTaxonomy::from_groups([
            ("tank", vec!["T72"]),
            ("truck", vec!["T72"]),
        ])
        .unwrap_err()
        .to_string();
        assert!(err.contains("T72"), "{err}");
    }
}
