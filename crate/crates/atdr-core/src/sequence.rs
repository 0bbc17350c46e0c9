//! Moving-target sequence generation: planar trajectories sampled at the
//! frame rate, aspect-dependent sprite selection, pinhole ground-plane
//! projection, and per-frame compositing under constraints held fixed
//! for the whole sequence.
//!
//! Two trajectory kinds exist. The direct trajectory keeps the target
//! orientation constant; the S trajectory swings laterally around the
//! centerline, alternating the aspect presented to the sensor. Paths are
//! parameterized by arc length so the ground speed is constant.
//!
//! In sequences the target scale comes from range geometry
//! (height_px = physical_height * focal_scale / range); detectability is
//! recorded as a measured output per frame rather than honored as an
//! input, since size and Q_D cannot both be fixed while range varies.
//! The occultant is re-solved against the moving target every frame so
//! the achieved occlusion stays within tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::ObjectTruth;
use crate::raster::Image;
use crate::scene::{
    compose_at, scale_sprite, QualityConstraints, QualityMeasure, SceneError, Sprite,
    DEFAULT_RING_WIDTH,
};
use crate::sensor::{apply_sensor, SensorConfig, SensorError};

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("degenerate trajectory: start equals end")]
    Degenerate,
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    #[error("invalid sensor geometry: {0}")]
    BadGeometry(String),
    #[error("sprite library: {0}")]
    BadLibrary(String),
    #[error("target projects outside frame at frame {frame}")]
    OutOfFrame { frame: usize },
    #[error("target too small at frame {frame}: {height_px:.2} px apparent height")]
    TargetTooSmall { frame: usize, height_px: f64 },
    #[error("frame {frame}: {source}")]
    Scene { frame: usize, source: SceneError },
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    S,
    Direct,
}

/// Planar ground path sampled at the sensor frame rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    /// Ground-plane coordinates in meters.
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Lateral swing in meters (S only).
    #[serde(default)]
    pub s_amplitude: f64,
    /// Full sine periods completed between start and end (S only).
    #[serde(default)]
    pub s_periods: u32,
    /// Ground speed along the path, meters per second.
    pub speed: f64,
    /// Samples per second.
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.start == self.end {
            return Err(SequenceError::Degenerate);
        }
        if !(self.speed > 0.0) {
            return Err(SequenceError::BadTrajectory("speed must be > 0".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(SequenceError::BadTrajectory("frame_rate must be > 0".into()));
        }
        if self.kind == TrajectoryKind::S {
            if !(self.s_amplitude > 0.0) {
                return Err(SequenceError::BadTrajectory(
                    "S trajectory needs s_amplitude > 0".into(),
                ));
            }
            if self.s_periods < 1 {
                return Err(SequenceError::BadTrajectory(
                    "S trajectory needs s_periods >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sensor placement and angular resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorGeometry {
    /// Ground position plus height: [x, y, z] in meters.
    pub sensor_position: [f64; 3],
    /// Pixels per radian of the imager.
    pub focal_scale: f64,
}

impl SensorGeometry {
    pub fn validate(&self) -> Result<(), SequenceError> {
        if !(self.focal_scale > 0.0) {
            return Err(SequenceError::BadGeometry("focal_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub position: [f64; 2],
    /// Travel direction, degrees counterclockwise from +x, in [0, 360).
    pub heading_deg: f64,
    /// Euclidean sensor-to-target distance (sensor height included).
    pub range_m: f64,
    /// Viewing aspect in [0, 360): 0 is frontal (sensor dead ahead of
    /// the target), 90 the left side, 180 the rear.
    pub aspect_deg: f64,
}

fn wrap_360(a: f64) -> f64 {
    a.rem_euclid(360.0)
}

fn circular_gap_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Samples positions along the path every 1/frame_rate seconds at
/// constant ground speed, with heading, range and aspect per frame.
pub fn sample_trajectory(
    t: &Trajectory,
    geom: &SensorGeometry,
) -> Result<Vec<TrajectorySample>, SequenceError> {
    t.validate()?;
    geom.validate()?;
    let dx = t.end[0] - t.start[0];
    let dy = t.end[1] - t.start[1];
    let length = (dx * dx + dy * dy).sqrt();
    let e_c = [dx / length, dy / length];
    let e_n = [-e_c[1], e_c[0]];

    let (amplitude, omega) = match t.kind {
        TrajectoryKind::Direct => (0.0, 0.0),
        TrajectoryKind::S => (
            t.s_amplitude,
            2.0 * std::f64::consts::PI * t.s_periods as f64 / length,
        ),
    };
    let lateral = |u: f64| amplitude * (omega * u).sin();
    let lateral_slope = |u: f64| amplitude * omega * (omega * u).cos();

    // cumulative arc length over a fine grid, for constant-speed stepping
    let grid = 4096usize;
    let du = length / grid as f64;
    let mut arc = Vec::with_capacity(grid + 1);
    arc.push(0.0);
    let speed_factor = |u: f64| (1.0 + lateral_slope(u) * lateral_slope(u)).sqrt();
    for i in 1..=grid {
        let u0 = (i - 1) as f64 * du;
        let u1 = i as f64 * du;
        let seg = 0.5 * (speed_factor(u0) + speed_factor(u1)) * du;
        arc.push(arc[i - 1] + seg);
    }
    let total = *arc.last().expect("grid nonempty");
    let u_at_arc = |s: f64| -> f64 {
        let i = arc.partition_point(|&a| a < s).clamp(1, grid);
        let (s0, s1) = (arc[i - 1], arc[i]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        ((i - 1) as f64 + frac) * du
    };

    let step = t.speed / t.frame_rate;
    let n_frames = (total / step).floor() as usize + 1;
    let (sx, sy, sz) = (
        geom.sensor_position[0],
        geom.sensor_position[1],
        geom.sensor_position[2],
    );
    let mut samples = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let u = u_at_arc((i as f64 * step).min(total));
        let lat = lateral(u);
        let px = t.start[0] + u * e_c[0] + lat * e_n[0];
        let py = t.start[1] + u * e_c[1] + lat * e_n[1];
        let slope = lateral_slope(u);
        let dir = [
            e_c[0] + slope * e_n[0],
            e_c[1] + slope * e_n[1],
        ];
        let heading = wrap_360(dir[1].atan2(dir[0]).to_degrees());
        let to_sensor = wrap_360((sy - py).atan2(sx - px).to_degrees());
        let aspect = wrap_360(heading - to_sensor);
        let ground = ((px - sx).powi(2) + (py - sy).powi(2)).sqrt();
        let range = (ground * ground + sz * sz).sqrt();
        samples.push(TrajectorySample {
            position: [px, py],
            heading_deg: heading,
            range_m: range,
            aspect_deg: aspect,
        });
    }
    Ok(samples)
}

/// Aspect-keyed sprite collection; at most one sprite per (aspect
/// bucket, signature).
#[derive(Debug, Clone)]
pub struct SpriteLibrary {
    bucket_width_deg: f64,
    entries: Vec<(f64, Sprite)>,
}

impl SpriteLibrary {
    /// Entries must leave no circular gap wider than the bucket width, so
    /// nearest-bucket selection never errs by more than half a bucket.
    pub fn new(bucket_width_deg: f64, entries: Vec<(f64, Sprite)>) -> Result<Self, SequenceError> {
        if entries.is_empty() {
            return Err(SequenceError::BadLibrary("no sprites".into()));
        }
        if !(bucket_width_deg > 0.0) {
            return Err(SequenceError::BadLibrary("bucket width must be > 0".into()));
        }
        let mut aspects: Vec<f64> = entries.iter().map(|(a, _)| wrap_360(*a)).collect();
        aspects.sort_by(f64::total_cmp);
        for i in 0..aspects.len() {
            let next = if i + 1 < aspects.len() {
                aspects[i + 1]
            } else {
                aspects[0] + 360.0
            };
            let gap = next - aspects[i];
            if gap > bucket_width_deg + 1e-9 {
                return Err(SequenceError::BadLibrary(format!(
                    "gap of {gap:.1} deg after aspect {:.1} exceeds bucket width {bucket_width_deg}",
                    aspects[i]
                )));
            }
        }
        Ok(Self {
            bucket_width_deg,
            entries,
        })
    }

    pub fn bucket_width_deg(&self) -> f64 {
        self.bucket_width_deg
    }

    /// Nearest bucket by circular distance; ties go to the smaller angle.
    pub fn select(&self, aspect_deg: f64) -> (f64, &Sprite) {
        let mut best: Option<(f64, f64, &Sprite)> = None;
        for (entry_aspect, sprite) in &self.entries {
            let a = wrap_360(*entry_aspect);
            let d = circular_gap_deg(aspect_deg, a);
            let better = match &best {
                None => true,
                Some((bd, ba, _)) => d < *bd - 1e-12 || ((d - *bd).abs() <= 1e-12 && a < *ba),
            };
            if better {
                best = Some((d, a, sprite));
            }
        }
        let (_, aspect, sprite) = best.expect("library nonempty");
        (aspect, sprite)
    }
}

/// Everything a sequence render needs besides the trajectory: the fixed
/// per-sequence constraints, scene assets and the sensor chain.
#[derive(Debug, Clone)]
pub struct SequenceScene {
    pub background: Image<u16>,
    pub occultant: Sprite,
    pub constraints: QualityConstraints,
    pub ring_width: usize,
    pub sensor: Option<SensorConfig>,
    pub seed: u64,
    pub object_id: i64,
    pub recognition_class: String,
    pub identification_class: String,
}

impl SequenceScene {
    pub fn new(background: Image<u16>, occultant: Sprite, constraints: QualityConstraints) -> Self {
        Self {
            background,
            occultant,
            constraints,
            ring_width: DEFAULT_RING_WIDTH,
            sensor: None,
            seed: 0,
            object_id: 1,
            recognition_class: String::new(),
            identification_class: String::new(),
        }
    }
}

/// One rendered sequence frame with its geometry metadata.
#[derive(Debug, Clone)]
pub struct SequenceFrame {
    pub index: usize,
    pub image: Image<u16>,
    pub truth: ObjectTruth,
    pub sample: TrajectorySample,
    /// Range-derived target height in pixels, before rasterization.
    pub apparent_height_px: f64,
    pub aspect_bucket_deg: f64,
    pub measured: QualityMeasure,
    /// Detectability over the full pre-occlusion surface (measured
    /// output; not an input constraint in sequences).
    pub measured_qd_full: f64,
}

/// Renders every frame of a trajectory: sprite from the nearest aspect
/// bucket, scale from range, pinhole projection to the image, then the
/// per-sequence constraint solve and optional sensor chain.
pub fn render_sequence(
    trajectory: &Trajectory,
    geometry: &SensorGeometry,
    library: &SpriteLibrary,
    scene: &SequenceScene,
) -> Result<Vec<SequenceFrame>, SequenceError> {
    let samples = sample_trajectory(trajectory, geometry)?;
    let (w, h) = (scene.background.width() as f64, scene.background.height() as f64);
    let (sx, sy, sz) = (
        geometry.sensor_position[0],
        geometry.sensor_position[1],
        geometry.sensor_position[2],
    );
    // camera axis aimed at the centerline midpoint on the ground
    let aim = [
        0.5 * (trajectory.start[0] + trajectory.end[0]),
        0.5 * (trajectory.start[1] + trajectory.end[1]),
    ];
    let yaw = (aim[1] - sy).atan2(aim[0] - sx);
    let aim_ground = ((aim[0] - sx).powi(2) + (aim[1] - sy).powi(2)).sqrt();
    let pitch = (-sz).atan2(aim_ground);

    let mut frames = Vec::with_capacity(samples.len());
    for (index, sample) in samples.into_iter().enumerate() {
        let (bucket_aspect, sprite) = library.select(sample.aspect_deg);
        if sprite.physical_height_m <= 0.0 {
            return Err(SequenceError::BadLibrary(
                "sprite physical height must be > 0 for range scaling".into(),
            ));
        }
        let native_height = sprite.mask_height();
        if native_height == 0 {
            return Err(SequenceError::BadLibrary("sprite mask empty".into()));
        }
        let apparent_height_px =
            geometry.focal_scale * sprite.physical_height_m / sample.range_m;
        if apparent_height_px < 2.0 {
            return Err(SequenceError::TargetTooSmall {
                frame: index,
                height_px: apparent_height_px,
            });
        }
        let scaled = scale_sprite(sprite, apparent_height_px / native_height as f64);

        // pan/tilt pinhole: image offsets are angular differences times
        // the focal scale
        let (px, py) = (sample.position[0], sample.position[1]);
        let az = (py - sy).atan2(px - sx);
        let ground = ((px - sx).powi(2) + (py - sy).powi(2)).sqrt();
        let el = (-sz).atan2(ground);
        let mut d_az = az - yaw;
        d_az = (d_az + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
            - std::f64::consts::PI;
        let x_img = w / 2.0 + geometry.focal_scale * d_az;
        let y_img = h / 2.0 + geometry.focal_scale * (pitch - el);

        // anchor the mask's bottom center on the projected ground point
        let (mx0, _, mx1, my1) = scaled
            .mask
            .tight_bounds()
            .ok_or(SequenceError::TargetTooSmall {
                frame: index,
                height_px: apparent_height_px,
            })?;
        let sw = scaled.intensity.width() as f64;
        let sh = scaled.intensity.height() as f64;
        let position = [
            x_img - (mx0 + mx1) as f64 / 2.0 + (sw - 1.0) / 2.0,
            y_img - my1 as f64 + (sh - 1.0) / 2.0,
        ];

        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(index as u64);
        let composite = compose_at(
            &scene.background,
            &scaled,
            &scene.occultant,
            position,
            &scene.constraints,
            scene.ring_width,
            &mut rng,
        )
        .map_err(|source| match source {
            SceneError::OutOfBounds | SceneError::MaskTouchesBorder => {
                SequenceError::OutOfFrame { frame: index }
            }
            source => SequenceError::Scene {
                frame: index,
                source,
            },
        })?;

        let measured_qd_full = composite.measured_qd_full();
        let mut truth = ObjectTruth {
            object_id: scene.object_id,
            bbox: composite.bbox,
            recognition_class: scene.recognition_class.clone(),
            identification_class: scene.identification_class.clone(),
            occlusion_fraction: composite.achieved_rx,
        };
        let measured = composite.measured;
        let image = match &scene.sensor {
            None => composite.image,
            Some(cfg) => {
                let mut cfg = cfg.clone();
                // derive the per-frame noise stream from the sequence seed
                cfg.seed = scene.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64;
                let (img, transform) = apply_sensor(&composite.image, &cfg)?;
                let d = transform.bbox_divisor;
                truth.bbox = crate::annotations::BoundingBox::new(
                    truth.bbox.x_center / d,
                    truth.bbox.y_center / d,
                    truth.bbox.width / d,
                    truth.bbox.height / d,
                )
                .expect("positive divisor");
                img
            }
        };
        frames.push(SequenceFrame {
            index,
            image,
            truth,
            sample,
            apparent_height_px,
            aspect_bucket_deg: bucket_aspect,
            measured,
            measured_qd_full,
        });
    }
    Ok(frames)
}
