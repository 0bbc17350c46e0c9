//! Hybrid scene compositing: places an occultant and a target sprite
//! over a background, then solves the gains and offsets that make the
//! composite meet the requested image-quality constraints.
//!
//! The constraint vector is (contrast RSS, detectability Q_D = RSS·S_C,
//! signal-to-clutter SCR, occlusion ratio R_x, internal contrast K),
//! with nu_k gray levels per Kelvin tying contrast to pixel values.
//! Region conventions: C is the visible target, F1 a dilation ring of
//! local background around it, F2 the remaining background, F = F1 ∪ F2.
//! Occultant pixels belong to none of the regions and are never touched
//! by gains or offsets, which keeps the constraint inversion exact.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::BoundingBox;
use crate::assets::AssetStore;
use crate::raster::{masked_stats, Image, Mask, RasterError};
use crate::sensor::SensorConfig;
use crate::thermal::ThermalScenario;

pub const DEFAULT_NU_K: f64 = 100.0;
pub const DEFAULT_RING_WIDTH: usize = 5;
/// Smallest target surface the generator will produce.
pub const MIN_TARGET_SURFACE: f64 = 9.0;
/// Achieved-vs-requested tolerance for the scaled target surface.
pub const SURFACE_TOLERANCE: f64 = 0.02;
/// Achieved-vs-requested tolerance for the occlusion ratio.
pub const OCCLUSION_TOLERANCE: f64 = 0.02;
/// A recipe is rejected when clamping to the 16-bit range would alter at
/// least this fraction of pixels.
pub const GAMUT_REJECT_FRACTION: f64 = 0.001;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("target mask is empty")]
    MaskEmpty,
    #[error("target mask touches the image border; local background ring undefined")]
    MaskTouchesBorder,
    #[error("region {0} is empty")]
    RegionEmpty(&'static str),
    #[error("zero contrast: internal contrast K undefined at RSS = 0")]
    KUndefined,
    #[error("zero background deviation: SCR undefined")]
    ScrUndefined,
    #[error("internal contrast K = {0} outside [-1, 1]")]
    KOutOfRange(f64),
    #[error("flat sprite cannot carry internal contrast")]
    FlatSprite,
    #[error("background has zero deviation; cannot reach requested SCR")]
    FlatBackground,
    #[error("target below minimum resolvable size: requested surface {0:.1} px")]
    TargetTooSmall(f64),
    #[error("cannot scale sprite to surface {requested:.1} px (best achieved {achieved})")]
    SurfaceUnreachable { requested: f64, achieved: usize },
    #[error("occlusion ratio {requested} unreachable (best achieved {achieved:.3})")]
    OcclusionUnreachable { requested: f64, achieved: f64 },
    #[error("recipe out of gamut: clamping would alter {0:.4}% of pixels")]
    OutOfGamut(f64),
    #[error("target fully occluded")]
    FullyOccluded,
    #[error("target placement outside image bounds")]
    OutOfBounds,
    #[error("invalid recipe: {0}")]
    BadRecipe(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("asset error: {0}")]
    Asset(String),
    #[error("thermal error: {0}")]
    Thermal(String),
}

/// Surface, mean and standard deviation of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionStats {
    /// Pixel count of the region.
    pub surface: f64,
    pub mean: f64,
    pub std_dev: f64,
}

/// Stats for the four region conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSet {
    pub c: RegionStats,
    pub f1: RegionStats,
    pub f2: RegionStats,
    pub f: RegionStats,
}

/// Image-quality figures measured on a composite. `scr` is undefined
/// when the global background has zero deviation, `k` when RSS is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityMeasure {
    pub rss: f64,
    pub q_d: f64,
    pub scr: Option<f64>,
    pub k: Option<f64>,
}

/// Requested constraint vector (without Q_D, which only drives target
/// scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConstraints {
    pub rss: f64,
    pub scr: f64,
    pub k: f64,
    pub r_x: f64,
    pub nu_k: f64,
}

impl QualityConstraints {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.rss > 0.0) {
            return Err(SceneError::BadRecipe(format!("rss = {} must be > 0", self.rss)));
        }
        if !(self.scr > 0.0 && self.scr.is_finite()) {
            return Err(SceneError::BadRecipe(format!(
                "scr = {} must be finite and > 0",
                self.scr
            )));
        }
        if !(self.k.abs() <= 1.0) {
            return Err(SceneError::KOutOfRange(self.k));
        }
        if !(0.0..1.0).contains(&self.r_x) {
            return Err(SceneError::BadRecipe(format!(
                "r_x = {} outside [0, 1)",
                self.r_x
            )));
        }
        if !(self.nu_k > 0.0) {
            return Err(SceneError::BadRecipe(format!("nu_k = {} must be > 0", self.nu_k)));
        }
        Ok(())
    }
}

/// A target or occultant cutout: gray-level samples, the validity mask,
/// and the physical metadata used by sequence rendering.
#[derive(Debug, Clone)]
pub struct Sprite {
    pub intensity: Image<f64>,
    pub mask: Mask,
    pub physical_height_m: f64,
    pub native_aspect_deg: f64,
}

impl Sprite {
    pub fn new(intensity: Image<f64>, mask: Mask) -> Self {
        assert_eq!(intensity.width(), mask.width());
        assert_eq!(intensity.height(), mask.height());
        Self {
            intensity,
            mask,
            physical_height_m: 0.0,
            native_aspect_deg: 0.0,
        }
    }

    pub fn surface(&self) -> usize {
        self.mask.count()
    }

    /// Height in pixels of the mask's tight bounds.
    pub fn mask_height(&self) -> usize {
        self.mask
            .tight_bounds()
            .map(|(_, y0, _, y1)| y1 - y0 + 1)
            .unwrap_or(0)
    }
}

/// One generation request: constraints, detectability, asset references
/// and the target placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub rss: f64,
    pub q_d: f64,
    pub scr: f64,
    #[serde(default)]
    pub r_x: f64,
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_nu_k")]
    pub nu_k: f64,
    pub background: String,
    pub target: String,
    pub occultant: String,
    /// Target center in image pixels; continuous coordinates allowed.
    pub position: [f64; 2],
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_ring_width")]
    pub ring_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorConfig>,
    /// Per-region thermal state; requires the target asset to carry the
    /// ambient/operational texture pair and region map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalScenario>,
}

fn default_nu_k() -> f64 {
    DEFAULT_NU_K
}

fn default_ring_width() -> usize {
    DEFAULT_RING_WIDTH
}

impl SceneRecipe {
    pub fn constraints(&self) -> QualityConstraints {
        QualityConstraints {
            rss: self.rss,
            scr: self.scr,
            k: self.k,
            r_x: self.r_x,
            nu_k: self.nu_k,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.constraints().validate()?;
        if !(self.q_d > 0.0) {
            return Err(SceneError::BadRecipe(format!("q_d = {} must be > 0", self.q_d)));
        }
        if self.ring_width == 0 {
            return Err(SceneError::BadRecipe("ring_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Region statistics around a target mask: C from the mask itself, F1
/// the `ring_width`-pixel dilation ring, F2 the remainder, F = F1 ∪ F2.
pub fn measure_regions<T: Copy + Into<f64>>(
    image: &Image<T>,
    target_mask: &Mask,
    ring_width: usize,
) -> Result<RegionSet, SceneError> {
    let empty = Mask::filled(image.width(), image.height(), false);
    measure_regions_excluding(image, target_mask, &empty, ring_width)
}

/// Region statistics with an exclusion mask (occultant pixels) that
/// belongs to no region.
pub fn measure_regions_excluding<T: Copy + Into<f64>>(
    image: &Image<T>,
    target_mask: &Mask,
    exclusion: &Mask,
    ring_width: usize,
) -> Result<RegionSet, SceneError> {
    let c_mask = target_mask.minus(exclusion);
    if c_mask.none_set() {
        return Err(SceneError::MaskEmpty);
    }
    if c_mask.touches_border() {
        return Err(SceneError::MaskTouchesBorder);
    }
    let dilated = c_mask.dilate(ring_width);
    let f1_mask = dilated.minus(&c_mask).minus(exclusion);
    if f1_mask.none_set() {
        return Err(SceneError::RegionEmpty("F1"));
    }
    let mut f2_mask = Mask::filled(image.width(), image.height(), true);
    for (p, (&c, (&f1, &ex))) in f2_mask
        .pixels_mut()
        .iter_mut()
        .zip(c_mask.pixels().iter().zip(f1_mask.pixels().iter().zip(exclusion.pixels())))
    {
        *p = !c && !f1 && !ex;
    }
    if f2_mask.none_set() {
        return Err(SceneError::RegionEmpty("F2"));
    }
    let f_mask = {
        let mut m = f1_mask.clone();
        for (p, &f2) in m.pixels_mut().iter_mut().zip(f2_mask.pixels()) {
            *p = *p || f2;
        }
        m
    };
    let stats = |mask: &Mask| {
        let (mean, std_dev, n) = masked_stats(image, mask);
        RegionStats {
            surface: n as f64,
            mean,
            std_dev,
        }
    };
    Ok(RegionSet {
        c: stats(&c_mask),
        f1: stats(&f1_mask),
        f2: stats(&f2_mask),
        f: stats(&f_mask),
    })
}

/// Image-quality figures from region statistics:
/// RSS = (1/nu_k)·sqrt((mu_C - mu_F1)^2 + sigma_C^2), Q_D = RSS·S_C,
/// SCR = nu_k·RSS/sigma_F, K = (mu_F1 - mu_C)/(nu_k·RSS).
pub fn compute_quality(
    stats_c: &RegionStats,
    stats_f1: &RegionStats,
    stats_f: &RegionStats,
    nu_k: f64,
) -> Result<QualityMeasure, SceneError> {
    if !(nu_k > 0.0) {
        return Err(SceneError::BadRecipe(format!("nu_k = {nu_k} must be > 0")));
    }
    let dmu = stats_c.mean - stats_f1.mean;
    let rss = (dmu * dmu + stats_c.std_dev * stats_c.std_dev).sqrt() / nu_k;
    let q_d = rss * stats_c.surface;
    let scr = if stats_f.std_dev > 0.0 {
        Some(nu_k * rss / stats_f.std_dev)
    } else {
        None
    };
    let k = if rss > 0.0 {
        Some((stats_f1.mean - stats_c.mean) / (nu_k * rss))
    } else {
        None
    };
    Ok(QualityMeasure { rss, q_d, scr, k })
}

/// Gain/offset for the target pixels that force the requested RSS and K:
/// mu_C* = mu_F1 - K·nu_k·RSS and sigma_C* = nu_k·RSS·sqrt(1 - K^2).
pub fn derive_target_transform(
    q: &QualityConstraints,
    stats_f1: &RegionStats,
    raw_stats_c: &RegionStats,
) -> Result<(f64, f64), SceneError> {
    if q.k.abs() > 1.0 {
        return Err(SceneError::KOutOfRange(q.k));
    }
    let mu_target = stats_f1.mean - q.k * q.nu_k * q.rss;
    let sigma_target = q.nu_k * q.rss * (1.0 - q.k * q.k).max(0.0).sqrt();
    let gain = if raw_stats_c.std_dev > 0.0 {
        sigma_target / raw_stats_c.std_dev
    } else if sigma_target > 0.0 {
        return Err(SceneError::FlatSprite);
    } else {
        1.0
    };
    let offset = mu_target - gain * raw_stats_c.mean;
    Ok((gain, offset))
}

/// Gain/offset for the background pixels that force the requested SCR:
/// sigma_F* = nu_k·RSS/SCR, mean preserved.
pub fn derive_background_transform(
    q: &QualityConstraints,
    raw_stats_f: &RegionStats,
) -> Result<(f64, f64), SceneError> {
    if raw_stats_f.std_dev <= 0.0 {
        return Err(SceneError::FlatBackground);
    }
    let sigma_target = q.nu_k * q.rss / q.scr;
    let gain = sigma_target / raw_stats_f.std_dev;
    let offset = raw_stats_f.mean * (1.0 - gain);
    Ok((gain, offset))
}

/// Resamples a sprite by an isotropic factor with mask-weighted bilinear
/// interpolation; the mask is re-thresholded at 0.5 coverage.
pub fn scale_sprite(sprite: &Sprite, factor: f64) -> Sprite {
    assert!(factor > 0.0);
    let (w, h) = (sprite.intensity.width(), sprite.intensity.height());
    let new_w = ((w as f64 * factor).round() as usize).max(1);
    let new_h = ((h as f64 * factor).round() as usize).max(1);
    let sx = new_w as f64 / w as f64;
    let sy = new_h as f64 / h as f64;
    let mut intensity = Image::filled(new_w, new_h, 0.0f64);
    let mut mask = Mask::filled(new_w, new_h, false);
    for y in 0..new_h {
        for x in 0..new_w {
            let src_x = (x as f64 + 0.5) / sx - 0.5;
            let src_y = (y as f64 + 0.5) / sy - 0.5;
            if let Some((value, coverage)) = sample_masked(sprite, src_x, src_y) {
                if coverage >= 0.5 {
                    intensity.set(x, y, value);
                    mask.set(x, y, true);
                }
            }
        }
    }
    Sprite {
        intensity,
        mask,
        physical_height_m: sprite.physical_height_m,
        native_aspect_deg: sprite.native_aspect_deg,
    }
}

/// Mask-weighted bilinear sample at a continuous sprite coordinate.
/// Returns (value, mask coverage in [0, 1]), or None when fully outside.
fn sample_masked(sprite: &Sprite, x: f64, y: f64) -> Option<(f64, f64)> {
    let (w, h) = (sprite.intensity.width() as i64, sprite.intensity.height() as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut weighted_value = 0.0;
    let mut coverage = 0.0;
    let mut any = false;
    for (dx, dy, wgt) in [
        (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (px, py) = (x0 + dx, y0 + dy);
        if px < 0 || py < 0 || px >= w || py >= h {
            continue;
        }
        any = true;
        if sprite.mask.get(px as usize, py as usize) {
            coverage += wgt;
            weighted_value += wgt * sprite.intensity.get(px as usize, py as usize);
        }
    }
    if !any || coverage <= 0.0 {
        if any {
            return Some((0.0, 0.0));
        }
        return None;
    }
    Some((weighted_value / coverage, coverage))
}

/// Scales the target so its mask surface reaches S_C* = Q_D / RSS within
/// tolerance. Fails below the minimum resolvable size.
pub fn scale_target_for_qd(sprite: &Sprite, q_d: f64, rss: f64) -> Result<Sprite, SceneError> {
    if !(rss > 0.0) {
        return Err(SceneError::BadRecipe(format!("rss = {rss} must be > 0")));
    }
    let requested = q_d / rss;
    if requested < MIN_TARGET_SURFACE {
        return Err(SceneError::TargetTooSmall(requested));
    }
    let raw_surface = sprite.surface();
    if raw_surface == 0 {
        return Err(SceneError::MaskEmpty);
    }
    let mut factor = (requested / raw_surface as f64).sqrt();
    let mut best: Option<(f64, Sprite)> = None;
    for _ in 0..8 {
        let scaled = scale_sprite(sprite, factor);
        let achieved = scaled.surface();
        let err = (achieved as f64 - requested).abs() / requested;
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, scaled));
        }
        if err <= SURFACE_TOLERANCE {
            break;
        }
        if achieved == 0 {
            factor *= 2.0;
            continue;
        }
        factor *= (requested / achieved as f64).sqrt();
    }
    let (err, scaled) = best.expect("at least one iteration");
    if err <= SURFACE_TOLERANCE {
        Ok(scaled)
    } else {
        Err(SceneError::SurfaceUnreachable {
            requested,
            achieved: scaled.surface(),
        })
    }
}

/// An occultant rendered into image space: raw gray levels, its mask,
/// and the occlusion ratio it achieves over the target.
#[derive(Debug, Clone)]
pub struct OccultantPlacement {
    pub center: [f64; 2],
    pub intensity: Image<f64>,
    pub mask: Mask,
    pub achieved: f64,
}

/// Renders a sprite into a full-size layer with its center at `center`.
fn rasterize_sprite(
    sprite: &Sprite,
    width: usize,
    height: usize,
    center: [f64; 2],
) -> (Image<f64>, Mask) {
    let mut intensity = Image::filled(width, height, 0.0f64);
    let mut mask = Mask::filled(width, height, false);
    let (sw, sh) = (sprite.intensity.width() as f64, sprite.intensity.height() as f64);
    let left = center[0] - (sw - 1.0) / 2.0;
    let top = center[1] - (sh - 1.0) / 2.0;
    let x_lo = left.floor().max(0.0) as usize;
    let y_lo = top.floor().max(0.0) as usize;
    let x_hi = ((left + sw).ceil() as i64).clamp(0, width as i64) as usize;
    let y_hi = ((top + sh).ceil() as i64).clamp(0, height as i64) as usize;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let sx = x as f64 - left;
            let sy = y as f64 - top;
            if let Some((value, coverage)) = sample_masked(sprite, sx, sy) {
                if coverage >= 0.5 {
                    intensity.set(x, y, value);
                    mask.set(x, y, true);
                }
            }
        }
    }
    (intensity, mask)
}

fn mask_centroid(mask: &Mask) -> [f64; 2] {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0.0;
    for (x, y) in mask.iter_set() {
        sx += x as f64;
        sy += y as f64;
        n += 1.0;
    }
    [sx / n, sy / n]
}

fn mask_radius(mask: &Mask, centroid: [f64; 2]) -> f64 {
    mask.iter_set()
        .map(|(x, y)| {
            let dx = x as f64 - centroid[0];
            let dy = y as f64 - centroid[1];
            (dx * dx + dy * dy).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Slides the occultant along a random approach axis until its overlap
/// with the target mask reaches `r_x` within tolerance. The occultant
/// wins the z-order, so overlap pixels are occluded target pixels.
pub fn place_occultant(
    target_mask: &Mask,
    occultant: &Sprite,
    r_x: f64,
    rng: &mut impl Rng,
) -> Result<OccultantPlacement, SceneError> {
    if !(0.0..1.0).contains(&r_x) {
        return Err(SceneError::BadRecipe(format!("r_x = {r_x} outside [0, 1)")));
    }
    let target_surface = target_mask.count();
    if target_surface == 0 {
        return Err(SceneError::MaskEmpty);
    }
    let occ_surface = occultant.surface();
    if (occ_surface as f64) < r_x * target_surface as f64 {
        return Err(SceneError::OcclusionUnreachable {
            requested: r_x,
            achieved: occ_surface as f64 / target_surface as f64,
        });
    }
    let (w, h) = (target_mask.width(), target_mask.height());
    let centroid = mask_centroid(target_mask);
    let occ_center_local = [
        (occultant.intensity.width() as f64 - 1.0) / 2.0,
        (occultant.intensity.height() as f64 - 1.0) / 2.0,
    ];
    let occ_radius = {
        // radius about the sprite's own mask centroid, conservative
        let mut m = 0.0f64;
        for (x, y) in occultant.mask.iter_set() {
            let dx = x as f64 - occ_center_local[0];
            let dy = y as f64 - occ_center_local[1];
            m = m.max((dx * dx + dy * dy).sqrt());
        }
        m
    };
    let far = mask_radius(target_mask, centroid) + occ_radius + 3.0;
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let axis = [theta.cos(), theta.sin()];
    let place = |d: f64| -> (Image<f64>, Mask, f64) {
        let center = [centroid[0] + d * axis[0], centroid[1] + d * axis[1]];
        let (intensity, mask) = rasterize_sprite(occultant, w, h, center);
        let achieved = mask.intersection_count(target_mask) as f64 / target_surface as f64;
        (intensity, mask, achieved)
    };

    if r_x == 0.0 {
        for attempt in 0..8 {
            let d = far + attempt as f64 * 2.0;
            let (intensity, mask, achieved) = place(d);
            if achieved == 0.0 {
                return Ok(OccultantPlacement {
                    center: [centroid[0] + d * axis[0], centroid[1] + d * axis[1]],
                    intensity,
                    mask,
                    achieved,
                });
            }
        }
        return Err(SceneError::OcclusionUnreachable {
            requested: 0.0,
            achieved: f64::NAN,
        });
    }

    // overlap decreases from the centered position toward `far`; bisect,
    // tracking the best distance seen
    let mut best: Option<(f64, f64)> = None; // (|err|, d)
    let consider = |d: f64, achieved: f64, best: &mut Option<(f64, f64)>| {
        let err = (achieved - r_x).abs();
        if best.map_or(true, |(e, _)| err < e) {
            *best = Some((err, d));
        }
    };
    let (_, _, at_center) = place(0.0);
    consider(0.0, at_center, &mut best);
    if at_center < r_x - OCCLUSION_TOLERANCE {
        return Err(SceneError::OcclusionUnreachable {
            requested: r_x,
            achieved: at_center,
        });
    }
    let (mut lo, mut hi) = (0.0f64, far);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let (_, _, achieved) = place(mid);
        consider(mid, achieved, &mut best);
        if achieved >= r_x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1.0 / 64.0 {
            break;
        }
    }
    // local sub-pixel sweep around the bracket; wide enough to cross
    // several rasterization steps of the overlap
    let anchor = best.expect("bisection ran").1;
    for step in -24i32..=24 {
        let d = anchor + step as f64 * 0.25;
        if d < 0.0 {
            continue;
        }
        let (_, _, achieved) = place(d);
        consider(d, achieved, &mut best);
    }
    let (err, d) = best.expect("candidates evaluated");
    let (intensity, mask, achieved) = place(d);
    if err <= OCCLUSION_TOLERANCE {
        Ok(OccultantPlacement {
            center: [centroid[0] + d * axis[0], centroid[1] + d * axis[1]],
            intensity,
            mask,
            achieved,
        })
    } else {
        Err(SceneError::OcclusionUnreachable {
            requested: r_x,
            achieved,
        })
    }
}

/// A finished pre-sensor composite with everything needed to verify it.
#[derive(Debug, Clone)]
pub struct Composite {
    pub image: Image<u16>,
    /// Tight box of the full (pre-occlusion) target mask.
    pub bbox: BoundingBox,
    /// Quality measured on the quantized composite over the visible mask.
    pub measured: QualityMeasure,
    pub achieved_rx: f64,
    pub full_mask: Mask,
    pub visible_mask: Mask,
    pub occultant_mask: Mask,
    pub full_surface: usize,
    pub visible_surface: usize,
    pub clipped_fraction: f64,
}

impl Composite {
    /// Detectability over the full pre-occlusion surface, the figure the
    /// Q_D-driven scaling targets.
    pub fn measured_qd_full(&self) -> f64 {
        self.measured.rss * self.full_surface as f64
    }
}

fn bbox_of_mask(mask: &Mask) -> Result<BoundingBox, SceneError> {
    let (x0, y0, x1, y1) = mask.tight_bounds().ok_or(SceneError::MaskEmpty)?;
    // pixel i covers [i, i+1)
    let width = (x1 - x0 + 1) as f64;
    let height = (y1 - y0 + 1) as f64;
    BoundingBox::new(
        x0 as f64 + width / 2.0,
        y0 as f64 + height / 2.0,
        width,
        height,
    )
    .ok_or(SceneError::MaskEmpty)
}

/// Composites an already-scaled target and an occultant over a background
/// and solves the gains/offsets for the requested constraints.
///
/// Steps: occultant placement, target placement, background transform,
/// local-ring measurement, target transform, paste (occultant on top),
/// gamut check and quantization.
pub fn compose_at(
    background: &Image<u16>,
    target: &Sprite,
    occultant: &Sprite,
    position: [f64; 2],
    constraints: &QualityConstraints,
    ring_width: usize,
    rng: &mut impl Rng,
) -> Result<Composite, SceneError> {
    constraints.validate()?;
    let (w, h) = (background.width(), background.height());
    // geometric bounds check with a 1-pixel interpolation margin
    let (mx0, my0, mx1, my1) = target.mask.tight_bounds().ok_or(SceneError::MaskEmpty)?;
    let left = position[0] - (target.intensity.width() as f64 - 1.0) / 2.0;
    let top = position[1] - (target.intensity.height() as f64 - 1.0) / 2.0;
    if left + mx0 as f64 - 1.0 < 0.0
        || top + my0 as f64 - 1.0 < 0.0
        || left + mx1 as f64 + 2.0 > w as f64
        || top + my1 as f64 + 2.0 > h as f64
    {
        return Err(SceneError::OutOfBounds);
    }
    let (target_vals, full_mask) = rasterize_sprite(target, w, h, position);
    if full_mask.none_set() {
        return Err(SceneError::OutOfBounds);
    }
    if full_mask.touches_border() {
        return Err(SceneError::MaskTouchesBorder);
    }

    let placement = place_occultant(&full_mask, occultant, constraints.r_x, rng)?;
    let visible_mask = full_mask.minus(&placement.mask);
    if visible_mask.none_set() {
        return Err(SceneError::FullyOccluded);
    }

    let mut composite = background.to_f64();
    // background gain/offset from the raw global background (everything
    // outside target and occultant)
    let raw_regions =
        measure_regions_excluding(&composite, &visible_mask, &placement.mask, ring_width)?;
    let (bg_gain, bg_offset) = derive_background_transform(constraints, &raw_regions.f)?;
    for p in composite.pixels_mut() {
        *p = bg_gain * *p + bg_offset;
    }

    // local ring statistics come from the transformed background
    let ring_regions =
        measure_regions_excluding(&composite, &visible_mask, &placement.mask, ring_width)?;
    let raw_c = {
        let (mean, std_dev, n) = masked_stats(&target_vals, &visible_mask);
        RegionStats {
            surface: n as f64,
            mean,
            std_dev,
        }
    };
    let (t_gain, t_offset) = derive_target_transform(constraints, &ring_regions.f1, &raw_c)?;

    for (x, y) in full_mask.iter_set() {
        composite.set(x, y, t_gain * target_vals.get(x, y) + t_offset);
    }
    for (x, y) in placement.mask.iter_set() {
        composite.set(x, y, placement.intensity.get(x, y));
    }

    let (image, clipped_fraction) = composite.quantize_u16();
    if clipped_fraction >= GAMUT_REJECT_FRACTION {
        return Err(SceneError::OutOfGamut(clipped_fraction * 100.0));
    }

    let regions = measure_regions_excluding(&image, &visible_mask, &placement.mask, ring_width)?;
    let measured = compute_quality(&regions.c, &regions.f1, &regions.f, constraints.nu_k)?;

    Ok(Composite {
        bbox: bbox_of_mask(&full_mask)?,
        achieved_rx: placement.achieved,
        full_surface: full_mask.count(),
        visible_surface: visible_mask.count(),
        occultant_mask: placement.mask,
        visible_mask,
        full_mask,
        clipped_fraction,
        image,
        measured,
    })
}

/// Runs a full recipe against an asset store: loads assets, applies the
/// optional thermal state to the target texture, scales for Q_D and
/// composites.
pub fn compose_scene(
    recipe: &SceneRecipe,
    store: &AssetStore,
) -> Result<(Composite, crate::annotations::ObjectTruth), SceneError> {
    recipe.validate()?;
    let mut rng = recipe_rng(recipe);
    let background = store.background(&recipe.background)?;
    let target_asset = store.target(&recipe.target)?;
    let occultant = store.occultant(&recipe.occultant)?;

    let sprite = match &recipe.thermal {
        None => target_asset.sprite.clone(),
        Some(scenario) => store.thermal_sprite(&recipe.target, scenario, &mut rng)?,
    };
    let scaled = scale_target_for_qd(&sprite, recipe.q_d, recipe.rss)?;
    let composite = compose_at(
        &background,
        &scaled,
        &occultant,
        recipe.position,
        &recipe.constraints(),
        recipe.ring_width,
        &mut rng,
    )?;
    let truth = crate::annotations::ObjectTruth {
        object_id: 0,
        bbox: composite.bbox,
        recognition_class: target_asset.recognition_class.clone(),
        identification_class: target_asset.identification_class.clone(),
        occlusion_fraction: composite.achieved_rx,
    };
    Ok((composite, truth))
}

pub(crate) fn recipe_rng(recipe: &SceneRecipe) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(recipe.seed.unwrap_or(0))
}
