//! Asset manifest and loading: backgrounds, target sprites (optionally
//! with ambient/operational texture pairs for thermal variability) and
//! occultants.
//!
//! The manifest is a JSON file; all paths are relative to it:
//!
//! ```json
//! {
//!   "backgrounds": {"field": {"path": "field.png"}},
//!   "targets": {"t72_side": {"path": "t72_side.png", "mask": "t72_side_mask.png",
//!                "height_m": 2.2, "aspect_deg": 90.0,
//!                "rec_class": "tank", "id_class": "T72",
//!                "ta": "t72_side_ta.png", "tf": "t72_side_tf.png",
//!                "regions": "t72_side_regions.png",
//!                "region_names": "t72_side_regions.json"}},
//!   "occultants": {"tree": {"path": "tree.png", "mask": "tree_mask.png"}}
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{Image, Mask};
use crate::scene::{SceneError, Sprite};
use crate::thermal::{interpolate_texture, sample_config, RegionMap, ThermalScenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetManifest {
    #[serde(default)]
    pub backgrounds: BTreeMap<String, BackgroundEntry>,
    #[serde(default)]
    pub targets: BTreeMap<String, TargetEntry>,
    #[serde(default)]
    pub occultants: BTreeMap<String, OccultantEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetEntry {
    /// Static intensity texture; optional when a TA/TF pair is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub mask: String,
    #[serde(default)]
    pub height_m: f64,
    #[serde(default)]
    pub aspect_deg: f64,
    pub rec_class: String,
    pub id_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_names: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccultantEntry {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// A loaded target: its sprite, class labels and optional thermal pair.
#[derive(Debug, Clone)]
pub struct TargetAsset {
    pub sprite: Sprite,
    pub recognition_class: String,
    pub identification_class: String,
    pub thermal: Option<ThermalAssets>,
}

#[derive(Debug, Clone)]
pub struct ThermalAssets {
    pub ta: Image<u16>,
    pub tf: Image<u16>,
    pub regions: RegionMap,
}

/// Loads assets named by a manifest, resolving paths against the
/// manifest's directory. Loading is lazy-free: assets load on demand,
/// every call re-reads from disk only if not cached.
pub struct AssetStore {
    root: PathBuf,
    manifest: AssetManifest,
    backgrounds: std::sync::Mutex<BTreeMap<String, Image<u16>>>,
    targets: std::sync::Mutex<BTreeMap<String, TargetAsset>>,
    occultants: std::sync::Mutex<BTreeMap<String, Sprite>>,
}

impl AssetStore {
    pub fn open(manifest_path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| SceneError::Asset(format!("{}: {e}", manifest_path.display())))?;
        let manifest: AssetManifest = serde_json::from_str(&text)
            .map_err(|e| SceneError::Asset(format!("{}: {e}", manifest_path.display())))?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self::from_manifest(root, manifest))
    }

    pub fn from_manifest(root: PathBuf, manifest: AssetManifest) -> Self {
        Self {
            root,
            manifest,
            backgrounds: Default::default(),
            targets: Default::default(),
            occultants: Default::default(),
        }
    }

    pub fn manifest(&self) -> &AssetManifest {
        &self.manifest
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn background(&self, id: &str) -> Result<Image<u16>, SceneError> {
        if let Some(img) = self.backgrounds.lock().unwrap().get(id) {
            return Ok(img.clone());
        }
        let entry = self
            .manifest
            .backgrounds
            .get(id)
            .ok_or_else(|| SceneError::Asset(format!("unknown background \"{id}\"")))?;
        let img = Image::<u16>::load(&self.resolve(&entry.path))?;
        self.backgrounds
            .lock()
            .unwrap()
            .insert(id.to_string(), img.clone());
        Ok(img)
    }

    pub fn target(&self, id: &str) -> Result<TargetAsset, SceneError> {
        if let Some(asset) = self.targets.lock().unwrap().get(id) {
            return Ok(asset.clone());
        }
        let entry = self
            .manifest
            .targets
            .get(id)
            .ok_or_else(|| SceneError::Asset(format!("unknown target \"{id}\"")))?;
        let mask = Mask::load(&self.resolve(&entry.mask))?;
        let thermal = match (&entry.ta, &entry.tf, &entry.regions, &entry.region_names) {
            (Some(ta), Some(tf), Some(regions), Some(names)) => Some(ThermalAssets {
                ta: Image::<u16>::load(&self.resolve(ta))?,
                tf: Image::<u16>::load(&self.resolve(tf))?,
                regions: RegionMap::load(&self.resolve(regions), &self.resolve(names))
                    .map_err(|e| SceneError::Thermal(e.to_string()))?,
            }),
            (None, None, None, None) => None,
            _ => {
                return Err(SceneError::Asset(format!(
                    "target \"{id}\": ta, tf, regions and region_names must be given together"
                )))
            }
        };
        let intensity = match (&entry.path, &thermal) {
            (Some(path), _) => Image::<u16>::load(&self.resolve(path))?.to_f64(),
            // default texture is the ambient state
            (None, Some(t)) => t.ta.to_f64(),
            (None, None) => {
                return Err(SceneError::Asset(format!(
                    "target \"{id}\" needs either a static texture or a TA/TF pair"
                )))
            }
        };
        if intensity.width() != mask.width() || intensity.height() != mask.height() {
            return Err(SceneError::Asset(format!(
                "target \"{id}\": texture and mask dimensions differ"
            )));
        }
        let mut sprite = Sprite::new(intensity, mask);
        sprite.physical_height_m = entry.height_m;
        sprite.native_aspect_deg = entry.aspect_deg;
        let asset = TargetAsset {
            sprite,
            recognition_class: entry.rec_class.clone(),
            identification_class: entry.id_class.clone(),
            thermal,
        };
        self.targets
            .lock()
            .unwrap()
            .insert(id.to_string(), asset.clone());
        Ok(asset)
    }

    pub fn occultant(&self, id: &str) -> Result<Sprite, SceneError> {
        if let Some(sprite) = self.occultants.lock().unwrap().get(id) {
            return Ok(sprite.clone());
        }
        let entry = self
            .manifest
            .occultants
            .get(id)
            .ok_or_else(|| SceneError::Asset(format!("unknown occultant \"{id}\"")))?;
        let intensity = Image::<u16>::load(&self.resolve(&entry.path))?;
        let mask = match &entry.mask {
            Some(path) => Mask::load(&self.resolve(path))?,
            None => intensity.map(|p| p > 0),
        };
        if intensity.width() != mask.width() || intensity.height() != mask.height() {
            return Err(SceneError::Asset(format!(
                "occultant \"{id}\": texture and mask dimensions differ"
            )));
        }
        let sprite = Sprite::new(intensity.to_f64(), mask);
        self.occultants
            .lock()
            .unwrap()
            .insert(id.to_string(), sprite.clone());
        Ok(sprite)
    }

    /// Target sprite with its intensity replaced by an interpolated
    /// thermal signature sampled for `scenario`.
    pub fn thermal_sprite(
        &self,
        id: &str,
        scenario: &ThermalScenario,
        rng: &mut impl Rng,
    ) -> Result<Sprite, SceneError> {
        let asset = self.target(id)?;
        let thermal = asset.thermal.as_ref().ok_or_else(|| {
            SceneError::Asset(format!("target \"{id}\" carries no thermal texture pair"))
        })?;
        let assignment = scenario
            .resolve()
            .map_err(|e| SceneError::Thermal(e.to_string()))?;
        let config = sample_config(&thermal.regions, &assignment, rng)
            .map_err(|e| SceneError::Thermal(e.to_string()))?;
        let texture = interpolate_texture(&thermal.ta, &thermal.tf, &thermal.regions, &config)
            .map_err(|e| SceneError::Thermal(e.to_string()))?;
        let mut sprite = asset.sprite.clone();
        sprite.intensity = texture.to_f64();
        Ok(sprite)
    }
}

pub mod synthetic {
    //! Procedural textures, sprites and region maps for demos, smoke
    //! tests and the mock pipeline. These stand in for measured
    //! radiometric assets, which the toolkit deliberately does not ship.

    use std::collections::BTreeMap;
    use std::path::Path;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{
        AssetManifest, BackgroundEntry, OccultantEntry, TargetEntry,
    };
    use crate::raster::{Image, Mask};
    use crate::scene::{SceneError, Sprite};
    use crate::thermal::ThermalRegion;

    /// Smoothed white noise around `mean`; the box smoothing makes the
    /// clutter spatially correlated like natural terrain.
    pub fn noise_background(
        width: usize,
        height: usize,
        mean: f64,
        sigma: f64,
        smooth_radius: usize,
        seed: u64,
    ) -> Image<u16> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = Image::filled(width, height, 0.0f64);
        for p in raw.pixels_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let smoothed = if smooth_radius > 0 {
            let r = smooth_radius as i64;
            let mut out = Image::filled(width, height, 0.0f64);
            for y in 0..height as i64 {
                for x in 0..width as i64 {
                    let mut acc = 0.0;
                    let mut n = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let sx = (x + dx).clamp(0, width as i64 - 1) as usize;
                            let sy = (y + dy).clamp(0, height as i64 - 1) as usize;
                            acc += raw.get(sx, sy);
                            n += 1.0;
                        }
                    }
                    out.set(x as usize, y as usize, acc / n);
                }
            }
            out
        } else {
            raw
        };
        // rescale to the requested deviation exactly
        let m = smoothed.mean();
        let s = smoothed.variance().sqrt().max(1e-12);
        smoothed
            .map(|v| (mean + (v - m) * sigma / s).clamp(0.0, 65535.0).round() as u16)
            .clone()
    }

    /// Vehicle-like sprite: an elongated hull with a turret bump, a
    /// gradient plus noise for internal texture.
    pub fn vehicle_sprite(length: usize, height: usize, base_level: f64, seed: u64) -> Sprite {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (length, height);
        let mut mask = Mask::filled(w, h, false);
        let mut intensity = Image::filled(w, h, 0.0f64);
        let hull_top = h as f64 * 0.35;
        let turret_x0 = w as f64 * 0.35;
        let turret_x1 = w as f64 * 0.65;
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64;
                let fy = y as f64;
                let in_hull = fy >= hull_top && fx >= 1.0 && fx < w as f64 - 1.0;
                let in_turret = fy < hull_top && fx >= turret_x0 && fx <= turret_x1;
                if in_hull || in_turret {
                    mask.set(x, y, true);
                    let gradient = 30.0 * (fx / w as f64) + 20.0 * (fy / h as f64);
                    let noise: f64 = rng.gen_range(-15.0..15.0);
                    intensity.set(x, y, base_level + gradient + noise);
                }
            }
        }
        let mut sprite = Sprite::new(intensity, mask);
        sprite.physical_height_m = 2.5;
        sprite
    }

    /// Ragged vegetation-like blob; the noisy boundary gives the
    /// occlusion search fine-grained overlap steps.
    pub fn blob_occultant(radius: usize, base_level: f64, seed: u64) -> Sprite {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 2 * radius + 3;
        let c = (side as f64 - 1.0) / 2.0;
        let mut mask = Mask::filled(side, side, false);
        let mut intensity = Image::filled(side, side, 0.0f64);
        // random radial perturbation, fixed per angle bucket
        let buckets = 64;
        let wobble: Vec<f64> = (0..buckets)
            .map(|_| rng.gen_range(0.82..1.12))
            .collect();
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                let r = (dx * dx + dy * dy).sqrt();
                let angle = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
                let bucket = ((angle / std::f64::consts::TAU) * buckets as f64) as usize % buckets;
                if r <= radius as f64 * wobble[bucket] {
                    mask.set(x, y, true);
                    intensity.set(x, y, base_level + rng.gen_range(-120.0..120.0));
                }
            }
        }
        Sprite::new(intensity, mask)
    }

    /// Region map over a vehicle sprite: rear slice engine, a muffler
    /// spot, window band up top, running gear at the bottom, body
    /// elsewhere. Pixels outside the mask are labeled body; only masked
    /// pixels matter downstream.
    pub fn vehicle_region_map(sprite: &Sprite) -> (Image<u8>, BTreeMap<u8, ThermalRegion>) {
        let (w, h) = (sprite.mask.width(), sprite.mask.height());
        let mut labels = Image::filled(w, h, 2u8);
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64 / w as f64;
                let fy = y as f64 / h as f64;
                let id = if fx > 0.8 && fy > 0.4 {
                    1 // engine
                } else if fx > 0.9 && fy <= 0.4 {
                    3 // muffler
                } else if fy < 0.35 {
                    4 // windows
                } else if fy > 0.85 {
                    5 // running gear
                } else {
                    2 // body
                };
                labels.set(x, y, id);
            }
        }
        let names = BTreeMap::from([
            (1u8, ThermalRegion::Engine),
            (2u8, ThermalRegion::Body),
            (3u8, ThermalRegion::Muffler),
            (4u8, ThermalRegion::Windows),
            (5u8, ThermalRegion::RunningGear),
        ]);
        (labels, names)
    }

    /// Writes a ready-to-use demo asset pack (backgrounds, one thermal
    /// target, one occultant) and returns the manifest path.
    pub fn write_demo_assets(dir: &Path, seed: u64) -> Result<std::path::PathBuf, SceneError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| SceneError::Asset(format!("{}: {e}", dir.display())))?;
        let save = |img: &Image<u16>, name: &str| -> Result<(), SceneError> {
            img.save(&dir.join(name)).map_err(SceneError::from)
        };

        let bg = noise_background(192, 192, 30000.0, 900.0, 2, seed);
        save(&bg, "field.png")?;
        let bg2 = noise_background(192, 192, 26000.0, 1600.0, 1, seed.wrapping_add(1));
        save(&bg2, "scrub.png")?;

        let vehicle = vehicle_sprite(48, 22, 28000.0, seed.wrapping_add(2));
        let quantized = vehicle.intensity.map(|v| v.clamp(0.0, 65535.0) as u16);
        save(&quantized, "t72_side_ta.png")?;
        // operational texture: engine end and running gear run hot
        let (labels, names) = vehicle_region_map(&vehicle);
        let tf = {
            let mut img = quantized.clone();
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let bump = match names[&labels.get(x, y)] {
                        ThermalRegion::Engine => 2600.0,
                        ThermalRegion::Muffler => 3200.0,
                        ThermalRegion::RunningGear => 1200.0,
                        ThermalRegion::Body => 500.0,
                        ThermalRegion::Windows => 200.0,
                    };
                    let v = img.get(x, y) as f64 + bump;
                    img.set(x, y, v.clamp(0.0, 65535.0) as u16);
                }
            }
            img
        };
        save(&tf, "t72_side_tf.png")?;
        vehicle
            .mask
            .save(&dir.join("t72_side_mask.png"))
            .map_err(SceneError::from)?;
        save(&labels.map(|p| p as u16), "t72_side_regions.png")?;
        let region_names: BTreeMap<String, String> = names
            .iter()
            .map(|(id, region)| (id.to_string(), region.name().to_string()))
            .collect();
        std::fs::write(
            dir.join("t72_side_regions.json"),
            serde_json::to_string_pretty(&region_names).expect("serialize"),
        )
        .map_err(|e| SceneError::Asset(e.to_string()))?;

        let tree = blob_occultant(16, 25000.0, seed.wrapping_add(3));
        save(&tree.intensity.map(|v| v.clamp(0.0, 65535.0) as u16), "tree.png")?;
        tree.mask
            .save(&dir.join("tree_mask.png"))
            .map_err(SceneError::from)?;

        let manifest = AssetManifest {
            backgrounds: BTreeMap::from([
                ("field".into(), BackgroundEntry { path: "field.png".into() }),
                ("scrub".into(), BackgroundEntry { path: "scrub.png".into() }),
            ]),
            targets: BTreeMap::from([(
                "t72_side".into(),
                TargetEntry {
                    path: Some("t72_side_ta.png".into()),
                    mask: "t72_side_mask.png".into(),
                    height_m: 2.2,
                    aspect_deg: 90.0,
                    rec_class: "tank".into(),
                    id_class: "T72".into(),
                    ta: Some("t72_side_ta.png".into()),
                    tf: Some("t72_side_tf.png".into()),
                    regions: Some("t72_side_regions.png".into()),
                    region_names: Some("t72_side_regions.json".into()),
                },
            )]),
            occultants: BTreeMap::from([(
                "tree".into(),
                OccultantEntry {
                    path: "tree.png".into(),
                    mask: Some("tree_mask.png".into()),
                },
            )]),
        };
        let manifest_path = dir.join("manifest.json");
        std::fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest).expect("serialize"),
        )
        .map_err(|e| SceneError::Asset(e.to_string()))?;
        Ok(manifest_path)
    }
}
