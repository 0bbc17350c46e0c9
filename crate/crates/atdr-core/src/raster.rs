//! Grayscale raster primitives shared by the generation modules.
//!
//! Images are stored row-major. Asset files on disk are 16-bit
//! single-channel PNG or PGM; in-memory processing happens in `f64`
//! and is quantized back to `u16` at the end of a pipeline stage.

use std::path::Path;

use image::{ImageBuffer, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("image {path} is not single-channel grayscale")]
    NotGrayscale { path: String },
    #[error("empty image")]
    Empty,
}

/// Row-major 2-D grid of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Image<bool>;

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "pixel count mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }
}

impl Image<u16> {
    pub fn to_f64(&self) -> Image<f64> {
        self.map(|p| p as f64)
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path).map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })?;
        let gray: ImageBuffer<Luma<u16>, Vec<u16>> = img.into_luma16();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        if w == 0 || h == 0 {
            return Err(RasterError::Empty);
        }
        Ok(Self::from_vec(w, h, gray.into_raw()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.clone(),
        )
        .expect("image buffer size");
        buf.save(path).map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

impl Image<f64> {
    /// Clamps to the 16-bit range and rounds to the nearest gray level.
    /// Returns the quantized image and the fraction of pixels that were
    /// out of gamut before clamping.
    pub fn quantize_u16(&self) -> (Image<u16>, f64) {
        let mut clipped = 0usize;
        let data = self
            .data
            .iter()
            .map(|&v| {
                if !(0.0..=65535.0).contains(&v) {
                    clipped += 1;
                }
                v.clamp(0.0, 65535.0).round() as u16
            })
            .collect();
        let img = Image {
            width: self.width,
            height: self.height,
            data,
        };
        (img, clipped as f64 / self.data.len() as f64)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn none_set(&self) -> bool {
        self.count() == 0
    }

    /// Iterator over set pixel coordinates in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn touches_border(&self) -> bool {
        self.iter_set()
            .any(|(x, y)| x == 0 || y == 0 || x == self.width - 1 || y == self.height - 1)
    }

    /// Square (Chebyshev) morphological dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Mask {
        let mut out = Mask::filled(self.width, self.height, false);
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        for (x, y) in self.iter_set() {
            let (x, y) = (x as i64, y as i64);
            let x0 = (x - r).max(0) as usize;
            let x1 = ((x + r) as usize).min(self.width - 1);
            let y0 = (y - r).max(0) as usize;
            let y1 = ((y + r) as usize).min(self.height - 1);
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    out.set(xx, yy, true);
                }
            }
        }
        out
    }

    /// Pixels set in `self` but not in `other`.
    pub fn minus(&self, other: &Mask) -> Mask {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && !b)
                .collect(),
        }
    }

    /// Tight pixel bounds of the set region: (x_min, y_min, x_max, y_max), inclusive.
    pub fn tight_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.iter_set() {
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bounds
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let img = Image::<u16>::load(path)?;
        Ok(img.map(|p| p > 0))
    }

    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        self.map(|b| if b { 65535u16 } else { 0 }).save(path)
    }
}

/// Mean, standard deviation (population) and count over the masked pixels.
pub fn masked_stats<T: Copy + Into<f64>>(img: &Image<T>, mask: &Mask) -> (f64, f64, usize) {
    assert_eq!(img.width, mask.width);
    assert_eq!(img.height, mask.height);
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (p, &m) in img.data.iter().zip(&mask.data) {
        if m {
            let v: f64 = (*p).into();
            n += 1;
            sum += v;
            sum_sq += v * v;
        }
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt(), n)
}
