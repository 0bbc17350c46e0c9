//! Scoring and test-data generation for automatic target detection,
//! recognition and tracking (ATD/R/T) on infrared imagery.
//!
//! Two halves share one data model:
//!
//! - **Evaluation**: detection validity (Jaccard or the localization /
//!   scale / aspect triple), DR/FAR aggregation and ROC curves
//!   ([`detect`]), confusion matrices at two class levels ([`classify`]),
//!   and tracker identity continuity ([`track`]).
//! - **Generation**: hybrid infrared scenes composited under explicit
//!   image-quality constraints ([`scene`]), a sensor chain of MTF blur,
//!   sampling and noise ([`sensor`]), per-region thermal signature
//!   interpolation ([`thermal`]), and moving-target sequences
//!   ([`sequence`]).
//!
//! [`annotations`] defines the ground-truth/detections data model and
//! its JSON Lines format, [`mock`] a synthetic detector for end-to-end
//! pipeline runs, and [`report`] the CSV/SVG/JSON report writers.

pub mod annotations;
pub mod assets;
pub mod classify;
pub mod detect;
pub mod mock;
pub mod raster;
pub mod report;
pub mod scene;
pub mod sensor;
pub mod sequence;
pub mod thermal;
pub mod track;

pub use annotations::{BoundingBox, Detection, FrameRecord, ObjectTruth};
pub use detect::{jaccard, MatchCriterion, MatchMode, RocCurve};
pub use scene::{compose_scene, SceneRecipe};
