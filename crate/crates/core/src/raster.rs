//! Floating-point RGB images, color conversion, filtering and
//! full-reference quality metrics.
//!
//! Every public operation returns values clamped to `[0, 1]`, so any
//! `Raster` handed out by this crate is valid by construction.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

/// PSNR reported for (numerically) identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
const PSNR_MSE_FLOOR: f64 = 1e-10;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("buffer length {got} does not match {width}x{height}x3")]
    BadLength { width: usize, height: usize, got: usize },
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("image codec error for {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    /// Wraps an interleaved RGB buffer. Values are clamped to `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self, RasterError> {
        if data.len() != width * height * 3 {
            return Err(RasterError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let px = rgb.map(clamp01);
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&px);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(clamp01));
            }
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb.map(clamp01));
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Applies `f` to every pixel, clamping the result.
    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.pixels() {
            data.extend(f(px).map(clamp01));
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Extracts channel `c` as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    /// Assembles an image from three planes, clamping.
    pub fn from_planes(width: usize, height: usize, planes: [&[f64]; 3]) -> Result<Self, RasterError> {
        let n = width * height;
        for p in planes {
            if p.len() != n {
                return Err(RasterError::BadLength {
                    width,
                    height,
                    got: p.len() * 3,
                });
            }
        }
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.push(clamp01(planes[0][i]));
            data.push(clamp01(planes[1][i]));
            data.push(clamp01(planes[2][i]));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Rec. 601 luma plane.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels().map(luma).collect()
    }

    pub fn same_dims(&self, other: &Raster) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| RasterError::Codec {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| RasterError::Codec {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|source| RasterError::Codec {
                path: "<memory>".into(),
                source,
            })?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| {
            RasterError::Codec {
                path: "<memory>".into(),
                source,
            }
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Round-trips through 8-bit storage, as happens when saving to PNG.
    pub fn quantize8(&self) -> Self {
        Self::from_rgb8(&self.to_rgb8())
    }
}

#[inline]
pub fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub fn luma(px: [f64; 3]) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

/// Hexcone RGB → HSV with hue scaled to `[0, 1)`.
pub fn rgb_to_hsv_px([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, v];
    }
    let sector = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    };
    let mut h = sector / 6.0;
    if h < 0.0 {
        h += 1.0;
    }
    if h >= 1.0 {
        h -= 1.0;
    }
    [h, s, v]
}

pub fn hsv_to_rgb_px([h, s, v]: [f64; 3]) -> [f64; 3] {
    if s <= 0.0 {
        return [v, v, v];
    }
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Converts to an HSV-layout raster (channels hold H, S, V).
pub fn rgb_to_hsv(img: &Raster) -> Raster {
    img.map_pixels(rgb_to_hsv_px)
}

pub fn hsv_to_rgb(img: &Raster) -> Raster {
    img.map_pixels(hsv_to_rgb_px)
}

/// Rewrites the HSV value channel of every pixel, keeping hue and saturation.
pub fn map_value_channel(img: &Raster, mut f: impl FnMut(f64) -> f64) -> Raster {
    img.map_pixels(|px| {
        let [h, s, v] = rgb_to_hsv_px(px);
        hsv_to_rgb_px([h, s, clamp01(f(v))])
    })
}

/// Square odd-sized correlation kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self, RasterError> {
        if size == 0 || size % 2 == 0 {
            return Err(RasterError::InvalidKernel(format!("size {size} must be odd and >= 1")));
        }
        if weights.len() != size * size {
            return Err(RasterError::InvalidKernel(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(RasterError::InvalidKernel("non-finite weight".into()));
        }
        Ok(Self { size, weights })
    }

    pub fn identity() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn box_filter(size: usize) -> Result<Self, RasterError> {
        let n = (size * size) as f64;
        Self::new(size, vec![1.0 / n; size * size])
    }

    /// Normalized Gaussian with radius `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Self {
        if sigma <= 0.0 {
            return Self::identity();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let size = (2 * r + 1) as usize;
        let mut w = Vec::with_capacity(size * size);
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx * dx + dy * dy) as f64;
                w.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        Self::normalized(size, w)
    }

    /// Normalized disk with an anti-aliased one-pixel rim.
    pub fn disk(radius: f64) -> Self {
        if radius < 0.5 {
            return Self::identity();
        }
        let r = radius.ceil() as isize;
        let size = (2 * r + 1) as usize;
        let mut w = Vec::with_capacity(size * size);
        for dy in -r..=r {
            for dx in -r..=r {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                w.push((radius + 0.5 - d).clamp(0.0, 1.0));
            }
        }
        Self::normalized(size, w)
    }

    /// Normalized line segment of `length` samples centred on the origin,
    /// oriented at `angle` radians (0 = horizontal). Samples are splatted
    /// bilinearly, so axis-aligned odd lengths give an exact box.
    pub fn line(length: usize, angle: f64) -> Self {
        if length <= 1 {
            return Self::identity();
        }
        let half = (length as f64 - 1.0) / 2.0;
        let r = half.ceil() as isize + 1;
        let size = (2 * r + 1) as usize;
        let mut w = vec![0.0; size * size];
        let (sin, cos) = angle.sin_cos();
        // snap tiny components so axis-aligned lines stay exact
        let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
        let (sin, cos) = (snap(sin), snap(cos));
        for i in 0..length {
            let t = i as f64 - half;
            let x = t * cos + r as f64;
            let y = t * sin + r as f64;
            let x0 = x.floor();
            let y0 = y.floor();
            let fx = x - x0;
            let fy = y - y0;
            for (ox, oy, wt) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                if wt == 0.0 {
                    continue;
                }
                let xi = x0 as usize + ox;
                let yi = y0 as usize + oy;
                w[yi * size + xi] += wt;
            }
        }
        Self::normalized(size, w)
    }

    fn normalized(size: usize, mut w: Vec<f64>) -> Self {
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        Self { size, weights: w }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }
}

/// Correlates a single plane with replicate borders. No clamping.
pub fn correlate_plane(plane: &[f64], width: usize, height: usize, k: &Kernel) -> Vec<f64> {
    let r = k.radius() as isize;
    let size = k.size;
    let (w, h) = (width as isize, height as isize);
    let mut out = vec![0.0; plane.len()];
    // skip zero taps: disk and line kernels are mostly empty
    let taps: Vec<(isize, isize, f64)> = (0..size * size)
        .filter(|&i| k.weights[i] != 0.0)
        .map(|i| ((i % size) as isize - r, (i / size) as isize - r, k.weights[i]))
        .collect();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, wt) in &taps {
                let sx = (x + dx).clamp(0, w - 1);
                let sy = (y + dy).clamp(0, h - 1);
                acc += wt * plane[(sy * w + sx) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Per-channel correlation with replicate border padding.
pub fn convolve2d(img: &Raster, k: &Kernel) -> Raster {
    let (w, h) = (img.width, img.height);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| correlate_plane(&img.channel(c), w, h, k))
        .collect();
    Raster::from_planes(w, h, [&planes[0], &planes[1], &planes[2]])
        .expect("planes share the input dimensions")
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64, RasterError> {
    a.same_dims(b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// Peak signal-to-noise ratio for unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64, RasterError> {
    let m = mse(a, b)?;
    if m < PSNR_MSE_FLOOR {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

/// Mean SSIM of the luma planes over all 8×8 windows (stride 1).
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64, RasterError> {
    a.same_dims(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(RasterError::TooSmall {
            width: a.width,
            height: a.height,
            min: SSIM_WINDOW,
        });
    }
    let la = a.luma();
    let lb = b.luma();
    let w = a.width;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.height - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for y in y0..y0 + SSIM_WINDOW {
                let row = y * w;
                for x in x0..x0 + SSIM_WINDOW {
                    sa += la[row + x];
                    sb += lb[row + x];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for y in y0..y0 + SSIM_WINDOW {
                let row = y * w;
                for x in x0..x0 + SSIM_WINDOW {
                    let da = la[row + x] - ma;
                    let db = lb[row + x] - mb;
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            }
            let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * vab + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (vaa + vbb + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
