//! Sensor effect chain applied to a pre-sensor composite: PSF blur,
//! spatial sampling, then additive noise.
//!
//! The PSF defaults to a Gaussian of `mtf_sigma` pixels (separable,
//! truncated at 4 sigma and renormalized); a measured kernel loaded from
//! a plain-text 2-D array can substitute. Sampling is top-left aligned
//! point decimation. Noise is white Gaussian; when a sensor is specified
//! by NETD in Kelvin, `noise_sigma = netd_kelvin * nu_k`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Image;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("empty image")]
    EmptyImage,
    #[error("kernel file {path}: {reason}")]
    Kernel { path: String, reason: String },
    #[error("invalid sensor config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Gaussian PSF standard deviation in pixels; 0 disables blur.
    #[serde(default)]
    pub mtf_sigma: f64,
    /// Decimation factor after blur; 1 keeps full resolution.
    #[serde(default = "one")]
    pub sampling_factor: u32,
    /// Additive white Gaussian noise standard deviation in gray levels.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Optional plain-text 2-D kernel overriding the Gaussian PSF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtf_kernel: Option<String>,
}

fn one() -> u32 {
    1
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            mtf_sigma: 0.0,
            sampling_factor: 1,
            noise_sigma: 0.0,
            seed: 0,
            mtf_kernel: None,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.mtf_sigma < 0.0 || self.noise_sigma < 0.0 {
            return Err(SensorError::BadConfig("sigmas must be >= 0".into()));
        }
        if self.sampling_factor < 1 {
            return Err(SensorError::BadConfig("sampling_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// Geometric metadata for mapping ground-truth boxes into the sampled
/// frame: divide coordinates and sizes by `bbox_divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorTransform {
    pub bbox_divisor: f64,
}

/// Dense 2-D convolution kernel.
#[derive(Debug, Clone)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Loads a whitespace-separated 2-D array; rows are lines. The kernel
    /// is renormalized to unit sum so it preserves flat fields.
    pub fn load(path: &Path) -> Result<Self, SensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| SensorError::Kernel {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            rows.push(row.map_err(|e| SensorError::Kernel {
                path: path.display().to_string(),
                reason: format!("bad number: {e}"),
            })?);
        }
        let height = rows.len();
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(SensorError::Kernel {
                path: path.display().to_string(),
                reason: "kernel must be a non-empty rectangular array".into(),
            });
        }
        let mut weights: Vec<f64> = rows.into_iter().flatten().collect();
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Err(SensorError::Kernel {
                path: path.display().to_string(),
                reason: "kernel sums to zero".into(),
            });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }
}

/// 1-D Gaussian taps truncated at 4 sigma, renormalized to unit sum.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable circular convolution. Periodic borders make the operator
/// doubly stochastic, so flat fields, the image mean and the
/// variance-contraction property hold exactly.
fn convolve_separable(img: &Image<f64>, taps: &[f64]) -> Image<f64> {
    if taps.len() == 1 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let radius = (taps.len() / 2) as i64;
    let wrap_x = |x: i64| x.rem_euclid(w as i64) as usize;
    let wrap_y = |y: i64| y.rem_euclid(h as i64) as usize;
    let mut horiz = Image::filled(w, h, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &t) in taps.iter().enumerate() {
                acc += t * img.get(wrap_x(x as i64 + i as i64 - radius), y);
            }
            horiz.set(x, y, acc);
        }
    }
    let mut out = Image::filled(w, h, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &t) in taps.iter().enumerate() {
                acc += t * horiz.get(x, wrap_y(y as i64 + i as i64 - radius));
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Dense circular convolution, for measured kernels.
fn convolve_dense(img: &Image<f64>, kernel: &Kernel) -> Image<f64> {
    let (w, h) = (img.width(), img.height());
    let rx = (kernel.width / 2) as i64;
    let ry = (kernel.height / 2) as i64;
    let mut out = Image::filled(w, h, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..kernel.height {
                for kx in 0..kernel.width {
                    let sx = (x as i64 + kx as i64 - rx).rem_euclid(w as i64) as usize;
                    let sy = (y as i64 + ky as i64 - ry).rem_euclid(h as i64) as usize;
                    acc += kernel.weights[ky * kernel.width + kx] * img.get(sx, sy);
                }
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn decimate(img: &Image<f64>, factor: u32) -> Image<f64> {
    if factor <= 1 {
        return img.clone();
    }
    let f = factor as usize;
    let new_w = img.width().div_ceil(f);
    let new_h = img.height().div_ceil(f);
    let mut out = Image::filled(new_w, new_h, 0.0f64);
    for y in 0..new_h {
        for x in 0..new_w {
            out.set(x, y, img.get(x * f, y * f));
        }
    }
    out
}

/// Blur, sample and add noise; clamps back to the 16-bit gray range.
pub fn apply_sensor(
    image: &Image<u16>,
    cfg: &SensorConfig,
) -> Result<(Image<u16>, SensorTransform), SensorError> {
    let kernel = match &cfg.mtf_kernel {
        Some(path) => Some(Kernel::load(Path::new(path))?),
        None => None,
    };
    apply_sensor_with_kernel(image, cfg, kernel.as_ref())
}

pub fn apply_sensor_with_kernel(
    image: &Image<u16>,
    cfg: &SensorConfig,
    kernel: Option<&Kernel>,
) -> Result<(Image<u16>, SensorTransform), SensorError> {
    cfg.validate()?;
    if image.is_empty() {
        return Err(SensorError::EmptyImage);
    }
    let img = image.to_f64();
    let blurred = match kernel {
        Some(k) => convolve_dense(&img, k),
        None => convolve_separable(&img, &gaussian_taps(cfg.mtf_sigma)),
    };
    let mut sampled = decimate(&blurred, cfg.sampling_factor);
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("valid sigma");
        for p in sampled.pixels_mut() {
            *p += normal.sample(&mut rng);
        }
    }
    let (out, _) = sampled.quantize_u16();
    Ok((
        out,
        SensorTransform {
            bbox_divisor: cfg.sampling_factor as f64,
        },
    ))
}
