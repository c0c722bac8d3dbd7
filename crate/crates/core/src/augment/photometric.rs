//! Intensity transforms. These never touch the mask.

use crate::raster::RgbImage;

fn map_bytes(img: &RgbImage, f: impl Fn(f64) -> f64) -> RgbImage {
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = f(v as f64).round().clamp(0.0, 255.0) as u8;
    }
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = lut[*v as usize]);
    out
}

/// `v' = clip(v + 255·β)`.
pub fn brightness(img: &RgbImage, beta: f64) -> RgbImage {
    map_bytes(img, |v| v + 255.0 * beta)
}

/// `v' = clip(128 + α·(v − 128))`.
pub fn contrast(img: &RgbImage, alpha: f64) -> RgbImage {
    map_bytes(img, |v| 128.0 + alpha * (v - 128.0))
}

/// `v' = 255·(v/255)^γ`.
pub fn gamma(img: &RgbImage, gamma: f64) -> RgbImage {
    map_bytes(img, |v| 255.0 * (v / 255.0).powf(gamma))
}

fn luma(px: &[u8]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

/// Contrast-limited adaptive histogram equalisation of the luminance.
///
/// The image is split into a `tiles`×`tiles` grid (a single tile when the
/// image is smaller than the grid). Each tile's 256-bin luminance histogram
/// is clipped at `clip_limit · area / 256` counts, the excess is spread
/// evenly over all bins, and the cumulative histogram becomes the tile's
/// lookup table. Pixels blend the tables of the four nearest tile centres
/// bilinearly. The luminance change is added to every channel.
pub fn clahe(img: &RgbImage, clip_limit: f64, tiles: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let g = if tiles == 0 || w < tiles || h < tiles { 1 } else { tiles };

    let lum: Vec<u8> = img
        .data()
        .chunks_exact(3)
        .map(|px| luma(px).round().clamp(0.0, 255.0) as u8)
        .collect();

    let bounds = |n: usize, i: usize| (i * n / g, (i + 1) * n / g);
    let mut luts = vec![[0.0f64; 256]; g * g];
    for ty in 0..g {
        let (y0, y1) = bounds(h, ty);
        for tx in 0..g {
            let (x0, x1) = bounds(w, tx);
            let mut hist = [0.0f64; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[lum[y * w + x] as usize] += 1.0;
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as f64;
            let limit = (clip_limit * area / 256.0).max(1.0);
            let mut excess = 0.0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let share = excess / 256.0;
            let lut = &mut luts[ty * g + tx];
            let mut cdf = 0.0;
            for (v, b) in hist.iter().enumerate() {
                cdf += b + share;
                lut[v] = (cdf / area * 255.0).clamp(0.0, 255.0);
            }
        }
    }

    // Tile centre coordinate → fractional tile index for interpolation.
    let locate = |p: usize, n: usize| -> (usize, usize, f64) {
        let t = (p as f64 + 0.5) * g as f64 / n as f64 - 0.5;
        if t <= 0.0 {
            (0, 0, 0.0)
        } else if t >= (g - 1) as f64 {
            (g - 1, g - 1, 0.0)
        } else {
            let i = t.floor() as usize;
            (i, i + 1, t - i as f64)
        }
    };

    let mut out = img.clone();
    for y in 0..h {
        let (ty0, ty1, fy) = locate(y, h);
        for x in 0..w {
            let (tx0, tx1, fx) = locate(x, w);
            let v = lum[y * w + x] as usize;
            let top = luts[ty0 * g + tx0][v] * (1.0 - fx) + luts[ty0 * g + tx1][v] * fx;
            let bot = luts[ty1 * g + tx0][v] * (1.0 - fx) + luts[ty1 * g + tx1][v] * fx;
            let new_l = top * (1.0 - fy) + bot * fy;
            let delta = new_l - v as f64;
            let i = (y * w + x) * 3;
            for c in 0..3 {
                let px = &mut out.data_mut()[i + c];
                *px = (*px as f64 + delta).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Prng;

    fn random_image(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = Prng::new(seed);
        RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.below(256) as u8).collect()).unwrap()
    }

    fn std_dev(img: &RgbImage) -> f64 {
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        (img.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let img = random_image(1, 7, 5);
        assert_eq!(brightness(&img, 0.0), img);
        assert_eq!(contrast(&img, 1.0), img);
        let g = gamma(&img, 1.0);
        for (a, b) in g.data().iter().zip(img.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn brightness_on_mid_gray() {
        let img = RgbImage::filled(2, 2, [128, 128, 128]);
        assert_eq!(brightness(&img, 0.2).get(0, 0), [179, 179, 179]);
        assert_eq!(brightness(&RgbImage::filled(1, 1, [250, 0, 5]), 0.2).get(0, 0), [255, 51, 56]);
    }

    #[test]
    fn clahe_constant_stays_constant() {
        let img = RgbImage::filled(32, 32, [90, 90, 90]);
        let out = clahe(&img, 2.0, 8);
        let first = out.get(0, 0);
        assert!(out.data().chunks(3).all(|px| px == first));
    }

    #[test]
    fn clahe_in_range_and_small_image_fallback() {
        let img = random_image(3, 5, 4);
        let out = clahe(&img, 2.0, 8); // 5x4 < 8x8 grid → single tile
        assert_eq!((out.width(), out.height()), (5, 4));
        let big = clahe(&random_image(4, 40, 40), 2.0, 8);
        assert_eq!(big.data().len(), 40 * 40 * 3);
    }

    #[test]
    fn clahe_spreads_two_level_image() {
        // interleaved columns at 112 and 144 so every tile sees both levels;
        // direct histogram oracle: input std is exactly 16
        let mut img = RgbImage::filled(64, 64, [112, 112, 112]);
        for y in 0..64 {
            for x in (0..64).filter(|x| x % 2 == 1) {
                img.put(x, y, [144, 144, 144]);
            }
        }
        let before = std_dev(&img);
        assert!((before - 16.0).abs() < 1e-9);
        let after = std_dev(&clahe(&img, 2.0, 8));
        assert!(after > before, "{after} <= {before}");
    }
}
