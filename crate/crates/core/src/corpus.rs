//! Procedural clean scenes used as a stand-in natural-image corpus.
//!
//! A scene is defined in normalized coordinates, so the same seed renders
//! the same content at any resolution. Edges are anti-aliased over one
//! pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::Raster;

#[derive(Debug, Clone)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, angle: f64 },
}

#[derive(Debug, Clone)]
struct Layer {
    shape: Shape,
    color: [f64; 3],
    stripes: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
struct Scene {
    horizon: f64,
    sky_top: [f64; 3],
    sky_bottom: [f64; 3],
    ground_top: [f64; 3],
    ground_bottom: [f64; 3],
    layers: Vec<Layer>,
}

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

fn saturated(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = color(rng, 0.05, 0.95);
    // push one channel down so objects have a low dark channel
    let k = rng.random_range(0..3);
    c[k] *= 0.25;
    c
}

impl Scene {
    fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_e5ee_d000_0000);
        let sky_top = [
            rng.random_range(0.35..0.6),
            rng.random_range(0.5..0.75),
            rng.random_range(0.7..0.95),
        ];
        let sky_bottom = [
            rng.random_range(0.6..0.85),
            rng.random_range(0.65..0.85),
            rng.random_range(0.7..0.9),
        ];
        let ground_top = color(&mut rng, 0.25, 0.6);
        let ground_bottom = color(&mut rng, 0.1, 0.45);
        let n = rng.random_range(4..8);
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse {
                    cx: rng.random_range(0.1..0.9),
                    cy: rng.random_range(0.15..0.95),
                    rx: rng.random_range(0.05..0.25),
                    ry: rng.random_range(0.05..0.25),
                }
            } else {
                Shape::Rect {
                    cx: rng.random_range(0.1..0.9),
                    cy: rng.random_range(0.2..0.95),
                    hw: rng.random_range(0.04..0.25),
                    hh: rng.random_range(0.04..0.25),
                    angle: rng.random_range(-0.6..0.6),
                }
            };
            let color = if i == 0 {
                color(&mut rng, 0.02, 0.12)
            } else {
                saturated(&mut rng)
            };
            let stripes = rng.random_bool(0.35).then(|| {
                (
                    rng.random_range(12.0..40.0),
                    rng.random_range(0.0..std::f64::consts::PI),
                    rng.random_range(0.08..0.2),
                )
            });
            layers.push(Layer {
                shape,
                color,
                stripes,
            });
        }
        Self {
            horizon: rng.random_range(0.35..0.6),
            sky_top,
            sky_bottom,
            ground_top,
            ground_bottom,
            layers,
        }
    }

    fn render(&self, width: usize, height: usize) -> Raster {
        let scale = width.min(height) as f64;
        let aspect = width as f64 / height as f64;
        Raster::from_fn(width, height, |x, y| {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            // one-pixel soft horizon
            let sky_w = smooth((self.horizon - v) * height as f64);
            let sky = lerp3(self.sky_top, self.sky_bottom, (v / self.horizon).min(1.0));
            let ground = lerp3(
                self.ground_top,
                self.ground_bottom,
                ((v - self.horizon) / (1.0 - self.horizon)).clamp(0.0, 1.0),
            );
            let mut px = lerp3(ground, sky, sky_w);
            for layer in &self.layers {
                let d = signed_distance(&layer.shape, u * aspect, v, aspect);
                let cover = smooth(-d * scale);
                if cover <= 0.0 {
                    continue;
                }
                let mut c = layer.color;
                if let Some((freq, angle, amp)) = layer.stripes {
                    let t = (u * aspect * angle.cos() + v * angle.sin()) * freq;
                    let s = amp * (t * std::f64::consts::TAU).sin();
                    c = c.map(|ch| ch + s);
                }
                px = lerp3(px, c, cover);
            }
            px
        })
    }
}

fn smooth(t: f64) -> f64 {
    (t + 0.5).clamp(0.0, 1.0)
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn signed_distance(shape: &Shape, x: f64, y: f64, aspect: f64) -> f64 {
    match *shape {
        Shape::Ellipse { cx, cy, rx, ry } => {
            let dx = (x - cx * aspect) / rx;
            let dy = (y - cy) / ry;
            // first-order distance estimate
            let k = (dx * dx + dy * dy).sqrt();
            (k - 1.0) * rx.min(ry)
        }
        Shape::Rect {
            cx,
            cy,
            hw,
            hh,
            angle,
        } => {
            let (s, c) = angle.sin_cos();
            let px = x - cx * aspect;
            let py = y - cy;
            let lx = (px * c + py * s).abs() - hw;
            let ly = (-px * s + py * c).abs() - hh;
            let outside = (lx.max(0.0).powi(2) + ly.max(0.0).powi(2)).sqrt();
            outside + lx.max(ly).min(0.0)
        }
    }
}

/// Renders scene `seed` at the requested resolution.
pub fn scene(width: usize, height: usize, seed: u64) -> Raster {
    Scene::random(seed).render(width, height)
}

/// `n` square scenes with seeds `first_seed..first_seed + n`.
pub fn corpus(n: usize, size: usize, first_seed: u64) -> Vec<Raster> {
    (0..n as u64).map(|i| scene(size, size, first_seed + i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_varied() {
        let a = scene(64, 64, 3);
        assert_eq!(a, scene(64, 64, 3));
        assert_ne!(a, scene(64, 64, 4));
        let l = a.luma();
        let m = l.iter().sum::<f64>() / l.len() as f64;
        assert!(m > 0.15 && m < 0.85);
    }
}
