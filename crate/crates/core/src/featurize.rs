//! Policy state: a fixed-width vector of degradation-sensitive image
//! statistics concatenated with the episode's action record.
//!
//! All statistics are per-pixel normalized and squashed into `[0, 1]`.
//! Unbounded statistics use `x / (x + kappa)` with the `KAPPA_*`
//! constants below, calibrated so clean scenes stay under 0.2 on the
//! degradation slots.

use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{correlate_plane, rgb_to_hsv_px, Kernel, Raster};

/// Width of the feature vector.
pub const FEATURE_DIM: usize = 32;
/// Smallest side accepted by [`extract_features`].
pub const MIN_SIDE: usize = 32;
/// Patch side of the dark-channel minimum filter.
pub const DARK_CHANNEL_PATCH: usize = 7;
pub const BLOCK_STEP_CAP: f64 = 0.05;
/// Structural statistics are measured after box-averaging down to roughly
/// this many pixels on the short side.
pub const ANALYSIS_SIDE: usize = 128;

pub const KAPPA_GRADIENT: f64 = 0.05;
pub const KAPPA_SHARPNESS: f64 = 0.002;
pub const KAPPA_NOISE: f64 = 0.02;
pub const KAPPA_BLOCKINESS: f64 = 0.015;
pub const KAPPA_DIRECTIONAL: f64 = 25.0;
pub const KAPPA_HIGH_FREQ: f64 = 0.001;

/// Slot indices.
pub mod slot {
    pub const MEAN_LUMA: usize = 0;
    pub const STD_LUMA: usize = 1;
    pub const HIST: usize = 2;
    pub const HIST_BINS: usize = 8;
    pub const MEAN_V: usize = 10;
    pub const MEAN_S: usize = 11;
    pub const GRADIENT: usize = 12;
    pub const SHARPNESS: usize = 13;
    pub const NOISE: usize = 14;
    pub const DARK_CHANNEL: usize = 15;
    pub const BLOCKINESS: usize = 16;
    pub const DIRECTIONAL: usize = 17;
    pub const HIGH_FREQ: usize = 18;
    /// First reserved (always zero) slot.
    pub const RESERVED: usize = 19;
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("action index {index} out of range for {n_actions} actions")]
    ActionOutOfRange { index: usize, n_actions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn zeros() -> Self {
        Self([0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Raw, unsquashed statistics. Exposed for calibration and tests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawStats {
    pub mean_luma: f64,
    pub std_luma: f64,
    pub mean_v: f64,
    pub mean_s: f64,
    pub gradient_mean: f64,
    pub laplacian_variance: f64,
    /// Laplacian variance minus the white-noise share `20 sigma^2`.
    pub sharpness: f64,
    pub noise_sigma: f64,
    pub dark_channel_mean: f64,
    pub blockiness: f64,
    pub directional_ratio: f64,
    pub high_freq: f64,
}

pub fn squash(x: f64, kappa: f64) -> f64 {
    let x = x.max(0.0);
    x / (x + kappa)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64
}

/// Per-pixel minimum over channels followed by a square minimum filter.
pub fn dark_channel(img: &Raster, patch: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mins: Vec<f64> = img.pixels().map(|p| p[0].min(p[1]).min(p[2])).collect();
    min_filter(&mins, w, h, patch)
}

/// Separable square minimum filter with replicate borders.
pub fn min_filter(plane: &[f64], w: usize, h: usize, patch: usize) -> Vec<f64> {
    let r = (patch / 2) as isize;
    let (wi, hi) = (w as isize, h as isize);
    let mut rows = vec![0.0; plane.len()];
    for y in 0..hi {
        for x in 0..wi {
            let mut m = f64::INFINITY;
            for dx in -r..=r {
                let sx = (x + dx).clamp(0, wi - 1);
                m = m.min(plane[(y * wi + sx) as usize]);
            }
            rows[(y * wi + x) as usize] = m;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..hi {
        for x in 0..wi {
            let mut m = f64::INFINITY;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, hi - 1);
                m = m.min(rows[(sy * wi + x) as usize]);
            }
            out[(y * wi + x) as usize] = m;
        }
    }
    out
}

/// Four-neighbour Laplacian over interior pixels.
fn laplacian(l: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            out.push(l[i - 1] + l[i + 1] + l[i - w] + l[i + w] - 4.0 * l[i]);
        }
    }
    out
}

/// Robust noise sigma from Laplacian responses (MAD, scaled for the
/// 4-neighbour stencil whose response variance is 20·sigma²).
fn noise_estimate(lap: &[f64]) -> f64 {
    1.4826 * median(lap.iter().map(|v| v.abs()).collect()) / 20f64.sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if v.len() % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Box-averages the plane by the integer factor that brings the short side
/// closest to `ANALYSIS_SIDE` from above. Remainder rows/columns are dropped.
fn analysis_plane(l: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let f = (w.min(h) / ANALYSIS_SIDE).max(1);
    if f == 1 {
        return (l.to_vec(), w, h);
    }
    let (ow, oh) = (w / f, h / f);
    let norm = (f * f) as f64;
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for y in oy * f..(oy + 1) * f {
                for x in ox * f..(ox + 1) * f {
                    acc += l[y * w + x];
                }
            }
            out[oy * ow + ox] = acc / norm;
        }
    }
    (out, ow, oh)
}

/// Mean absolute step across 8-aligned column/row boundaries minus the mean
/// absolute step elsewhere. Steps are capped at `BLOCK_STEP_CAP` so object
/// edges that happen to sit on the grid do not dominate.
fn blockiness(l: &[f64], w: usize, h: usize) -> f64 {
    let (mut bsum, mut bn, mut isum, mut inn) = (0.0, 0usize, 0.0, 0usize);
    let mut add = |d: f64, on_grid: bool| {
        let d = d.abs().min(BLOCK_STEP_CAP);
        if on_grid {
            bsum += d;
            bn += 1;
        } else {
            isum += d;
            inn += 1;
        }
    };
    for y in 0..h {
        for x in 1..w {
            add(l[y * w + x] - l[y * w + x - 1], x % 8 == 0);
        }
    }
    for y in 1..h {
        for x in 0..w {
            add(l[y * w + x] - l[(y - 1) * w + x], y % 8 == 0);
        }
    }
    (bsum / bn.max(1) as f64 - isum / inn.max(1) as f64).max(0.0)
}

pub fn raw_stats(img: &Raster) -> Result<RawStats, FeatureError> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(FeatureError::TooSmall {
            width: w,
            height: h,
            min: MIN_SIDE,
        });
    }
    let l = img.luma();
    let (mut sv, mut ss) = (0.0, 0.0);
    for p in img.pixels() {
        let [_, s, v] = rgb_to_hsv_px(p);
        sv += v;
        ss += s;
    }
    let n = img.pixel_count() as f64;

    let noise_sigma = noise_estimate(&laplacian(&l, w, h));

    let (a, aw, ah) = analysis_plane(&l, w, h);
    let (mut gsum, mut ex, mut ey) = (0.0, 0.0, 0.0);
    for y in 0..ah - 1 {
        for x in 0..aw - 1 {
            let i = y * aw + x;
            let gx = a[i + 1] - a[i];
            let gy = a[i + aw] - a[i];
            gsum += (gx * gx + gy * gy).sqrt();
            ex += gx * gx;
            ey += gy * gy;
        }
    }
    let gradient_mean = gsum / ((aw - 1) * (ah - 1)) as f64;
    let directional_ratio = if ex + ey > 1e-12 { ex / (ey + 1e-12) } else { 1.0 };

    let lap = laplacian(&a, aw, ah);
    let laplacian_variance = variance(&lap);
    let analysis_noise = noise_estimate(&lap);

    let blurred = correlate_plane(&a, aw, ah, &Kernel::gaussian(1.0));
    let high_freq = a
        .iter()
        .zip(&blurred)
        .map(|(p, b)| (p - b) * (p - b))
        .sum::<f64>()
        / a.len() as f64;

    Ok(RawStats {
        mean_luma: mean(&l),
        std_luma: variance(&l).sqrt(),
        mean_v: sv / n,
        mean_s: ss / n,
        gradient_mean,
        laplacian_variance,
        sharpness: (laplacian_variance - 20.0 * analysis_noise * analysis_noise).max(0.0),
        noise_sigma,
        dark_channel_mean: mean(&dark_channel(img, DARK_CHANNEL_PATCH)),
        blockiness: blockiness(&l, w, h),
        directional_ratio,
        high_freq,
    })
}

/// Computes the 32-slot feature vector.
pub fn extract_features(img: &Raster) -> Result<FeatureVector, FeatureError> {
    let raw = raw_stats(img)?;
    let mut f = [0.0; FEATURE_DIM];
    f[slot::MEAN_LUMA] = raw.mean_luma;
    f[slot::STD_LUMA] = (2.0 * raw.std_luma).min(1.0);
    let l = img.luma();
    for v in &l {
        let bin = ((v * slot::HIST_BINS as f64) as usize).min(slot::HIST_BINS - 1);
        f[slot::HIST + bin] += 1.0;
    }
    for b in 0..slot::HIST_BINS {
        f[slot::HIST + b] /= l.len() as f64;
    }
    f[slot::MEAN_V] = raw.mean_v;
    f[slot::MEAN_S] = raw.mean_s;
    f[slot::GRADIENT] = squash(raw.gradient_mean, KAPPA_GRADIENT);
    f[slot::SHARPNESS] = squash(raw.sharpness, KAPPA_SHARPNESS);
    f[slot::NOISE] = squash(raw.noise_sigma, KAPPA_NOISE);
    f[slot::DARK_CHANNEL] = raw.dark_channel_mean;
    f[slot::BLOCKINESS] = squash(raw.blockiness, KAPPA_BLOCKINESS);
    f[slot::DIRECTIONAL] = squash(raw.directional_ratio * raw.directional_ratio, KAPPA_DIRECTIONAL);
    f[slot::HIGH_FREQ] = squash(raw.high_freq, KAPPA_HIGH_FREQ);
    Ok(FeatureVector(f))
}

/// Which tools have been chosen so far in the episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    bits: Vec<bool>,
}

impl ActionRecord {
    pub fn new(n_actions: usize) -> Self {
        Self {
            bits: vec![false; n_actions],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Returns a copy with bit `chosen` set.
    pub fn with(&self, chosen: usize) -> Result<Self, FeatureError> {
        let mut out = self.clone();
        out.set(chosen)?;
        Ok(out)
    }

    pub fn set(&mut self, chosen: usize) -> Result<(), FeatureError> {
        let n_actions = self.bits.len();
        let bit = self.bits.get_mut(chosen).ok_or(FeatureError::ActionOutOfRange {
            index: chosen,
            n_actions,
        })?;
        *bit = true;
        Ok(())
    }
}

pub fn update_action_record(rec: &ActionRecord, chosen: usize) -> Result<ActionRecord, FeatureError> {
    rec.with(chosen)
}

/// Policy input: features first, then the action record as 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn assemble_state(f: &FeatureVector, rec: &ActionRecord) -> State {
    let mut v = Vec::with_capacity(FEATURE_DIM + rec.len());
    v.extend_from_slice(&f.0);
    v.extend(rec.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    State(v)
}

pub fn state_dim(n_actions: usize) -> usize {
    FEATURE_DIM + n_actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::degrade::{add_noise, apply_jpeg_quality, NoiseKind};

    #[test]
    fn constant_image_has_zero_structure() {
        let f = extract_features(&Raster::filled(40, 40, [0.4, 0.5, 0.6])).unwrap();
        for s in [slot::STD_LUMA, slot::GRADIENT, slot::SHARPNESS, slot::NOISE, slot::BLOCKINESS, slot::HIGH_FREQ] {
            assert!(f[s].abs() < 1e-12, "slot {s}: {}", f[s]);
        }
        assert!(f.0[slot::RESERVED..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            extract_features(&Raster::filled(31, 64, [0.0; 3])),
            Err(FeatureError::TooSmall { .. })
        ));
    }

    #[test]
    fn slots_in_unit_range() {
        for img in corpus::corpus(6, 64, 20) {
            let noisy = add_noise(&img, NoiseKind::Gaussian, 0.3, 1);
            for f in [extract_features(&img).unwrap(), extract_features(&noisy).unwrap()] {
                assert!(f.0.iter().all(|v| (0.0..=1.0).contains(v)));
                let hist: f64 = f.0[slot::HIST..slot::HIST + slot::HIST_BINS].iter().sum();
                assert!((hist - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clean_corpus_is_quiet_on_degradation_slots() {
        for (i, img) in corpus::corpus(10, 128, 0).iter().enumerate() {
            let f = extract_features(img).unwrap();
            for s in [slot::NOISE, slot::BLOCKINESS, slot::DIRECTIONAL] {
                assert!(f[s] < 0.2, "image {i} slot {s} = {}", f[s]);
            }
        }
    }

    #[test]
    fn noise_and_jpeg_move_their_slots() {
        for img in corpus::corpus(10, 96, 50) {
            let f = extract_features(&img).unwrap();
            let noisy = extract_features(&add_noise(&img, NoiseKind::Gaussian, 0.05, 3)).unwrap();
            assert!(noisy[slot::NOISE] > f[slot::NOISE]);
            let jpeg = extract_features(&apply_jpeg_quality(&img, 5).unwrap().image).unwrap();
            assert!(jpeg[slot::BLOCKINESS] > f[slot::BLOCKINESS]);
        }
    }

    #[test]
    fn resolution_normalized() {
        for seed in 0..10 {
            let big = extract_features(&corpus::scene(256, 256, seed)).unwrap();
            let small = extract_features(&corpus::scene(128, 128, seed)).unwrap();
            for s in 0..FEATURE_DIM {
                assert!(
                    (big[s] - small[s]).abs() < 0.1,
                    "scene {seed} slot {s}: {} vs {}",
                    big[s],
                    small[s]
                );
            }
        }
    }

    #[test]
    fn squash_is_strictly_monotone() {
        let xs = [0.0, 1e-4, 0.01, 0.5, 3.0, 100.0];
        for k in [KAPPA_NOISE, KAPPA_DIRECTIONAL, KAPPA_SHARPNESS] {
            for pair in xs.windows(2) {
                assert!(squash(pair[0], k) < squash(pair[1], k));
            }
        }
    }

    #[test]
    fn action_record_rules() {
        let rec = ActionRecord::new(11);
        let r3 = update_action_record(&rec, 3).unwrap();
        assert_eq!(r3.bits().iter().filter(|b| **b).count(), 1);
        assert!(r3.is_set(3));
        assert_eq!(update_action_record(&r3, 3).unwrap(), r3);
        assert!(matches!(
            update_action_record(&rec, 11),
            Err(FeatureError::ActionOutOfRange { index: 11, n_actions: 11 })
        ));
    }

    #[test]
    fn state_assembly() {
        let rec = ActionRecord::new(11);
        let s = assemble_state(&FeatureVector::zeros(), &rec);
        assert_eq!(s.len(), 43);
        assert!(s.0.iter().all(|&v| v == 0.0));
        let f = extract_features(&corpus::scene(64, 64, 1)).unwrap();
        let rec = rec.with(2).unwrap();
        let a = assemble_state(&f, &rec);
        let b = assemble_state(&f, &rec);
        assert_eq!(a, b);
        assert_eq!(&a.0[..FEATURE_DIM], f.as_slice());
        assert_eq!(a.0[FEATURE_DIM + 2], 1.0);
    }
}
