//! JPEG artifact simulation: 8×8 block DCT, table quantization and
//! reconstruction. No entropy coding happens; only the lossy part of the
//! codec is reproduced.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::raster::Raster;

/// Annex K luminance quantization table, row-major.
pub const LUMA_QUANT_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quantization steps (8-bit scale) for a quality factor in `1..=100`.
pub fn scaled_table(quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(LUMA_QUANT_TABLE.iter()) {
        let step = ((base as u32 * scale + 50) / 100).clamp(1, 255);
        *o = step as f64;
    }
    out
}

fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (u, row) in c.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos();
            }
        }
        c
    })
}

/// Orthonormal 2-D DCT-II of one block.
pub fn fdct8x8(block: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| c[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| c[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct8x8(coef: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| c[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| c[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

fn to_ycbcr([r, g, b]: [f64; 3]) -> [f64; 3] {
    let (r, g, b) = (r * 255.0, g * 255.0, b * 255.0);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

fn from_ycbcr([y, cb, cr]: [f64; 3]) -> [f64; 3] {
    let r = y + 1.402 * (cr - 128.0);
    let g = y - 0.344_136 * (cb - 128.0) - 0.714_136 * (cr - 128.0);
    let b = y + 1.772 * (cb - 128.0);
    [r / 255.0, g / 255.0, b / 255.0]
}

/// Runs the quantize/dequantize round trip at `quality` (1..=100).
pub fn compress_roundtrip(img: &Raster, quality: u8) -> Raster {
    let table = scaled_table(quality);
    let (w, h) = (img.width(), img.height());
    let ycc: Vec<[f64; 3]> = img.pixels().map(to_ycbcr).collect();
    let mut out = ycc.clone();
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for c in 0..3 {
                let mut block = [0.0; 64];
                for j in 0..8 {
                    let y = (by + j).min(h - 1);
                    for i in 0..8 {
                        let x = (bx + i).min(w - 1);
                        block[j * 8 + i] = ycc[y * w + x][c] - 128.0;
                    }
                }
                let mut coef = fdct8x8(&block);
                for (k, v) in coef.iter_mut().enumerate() {
                    *v = (*v / table[k]).round() * table[k];
                }
                let rec = idct8x8(&coef);
                for j in 0..8 {
                    let y = by + j;
                    if y >= h {
                        break;
                    }
                    for i in 0..8 {
                        let x = bx + i;
                        if x >= w {
                            break;
                        }
                        out[y * w + x][c] = rec[j * 8 + i] + 128.0;
                    }
                }
            }
        }
    }
    let mut i = 0;
    Raster::from_fn(w, h, |_, _| {
        let px = from_ycbcr(out[i]);
        i += 1;
        px
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scaling_follows_annex_k() {
        assert!(scaled_table(100).iter().all(|&s| s == 1.0));
        // q = 50 keeps the base table
        assert_eq!(scaled_table(50)[0], 16.0);
        // q = 5 -> scale 1000 -> 16*10 = 160
        assert_eq!(scaled_table(5)[0], 160.0);
        assert_eq!(scaled_table(5)[63], 255.0);
        assert_eq!(scaled_table(90)[0], 3.0);
    }

    #[test]
    fn dct_round_trip() {
        let mut block = [0.0; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f64 - 128.0;
        }
        let back = idct8x8(&fdct8x8(&block));
        for (a, b) in block.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = [10.0; 64];
        let coef = fdct8x8(&flat);
        assert!((coef[0] - 80.0).abs() < 1e-9);
        assert!(coef[1..].iter().all(|c| c.abs() < 1e-9));
    }
}
