//! Geometric warps. A warp is a backward map: every destination pixel names a
//! fractional source coordinate. The image is sampled bilinearly, the mask by
//! nearest neighbour, and coordinates outside the grid reflect without
//! repeating the edge pixel.

use crate::raster::{Mask, RgbImage};
use crate::tensor::Prng;

/// Source coordinates `(sx, sy)` per destination pixel, row-major.
#[derive(Clone, Debug)]
pub struct WarpField {
    pub width: usize,
    pub height: usize,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
}

impl WarpField {
    pub fn identity(width: usize, height: usize) -> Self {
        let mut sx = Vec::with_capacity(width * height);
        let mut sy = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                sx.push(x as f64);
                sy.push(y as f64);
            }
        }
        Self { width, height, sx, sy }
    }

    /// Largest displacement `max |source − destination|` over both axes.
    pub fn max_displacement(&self) -> f64 {
        let mut m = 0.0f64;
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                m = m.max((self.sx[i] - x as f64).abs()).max((self.sy[i] - y as f64).abs());
            }
        }
        m
    }
}

/// Reflect-101: `-1 → 1`, `n → n-2`.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut r = i.rem_euclid(period);
    if r >= n as i64 {
        r = period - r;
    }
    r as usize
}

pub fn warp_image(img: &RgbImage, field: &WarpField) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut out = vec![0u8; field.width * field.height * 3];
    for i in 0..field.width * field.height {
        let (fx, fy) = (field.sx[i], field.sy[i]);
        let (x0, y0) = (fx.floor(), fy.floor());
        let (ax, ay) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let xs = [reflect(x0, w), reflect(x0 + 1, w)];
        let ys = [reflect(y0, h), reflect(y0 + 1, h)];
        for c in 0..3 {
            let p = |xi: usize, yi: usize| src[(ys[yi] * w + xs[xi]) * 3 + c] as f64;
            let top = p(0, 0) * (1.0 - ax) + p(1, 0) * ax;
            let bot = p(0, 1) * (1.0 - ax) + p(1, 1) * ax;
            out[i * 3 + c] = (top * (1.0 - ay) + bot * ay).round().clamp(0.0, 255.0) as u8;
        }
    }
    RgbImage::new(field.width, field.height, out).expect("field dimensions")
}

pub fn warp_mask(mask: &Mask, field: &WarpField) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let out = (0..field.width * field.height)
        .map(|i| {
            let x = reflect(field.sx[i].round() as i64, w);
            let y = reflect(field.sy[i].round() as i64, h);
            mask.data()[y * w + x]
        })
        .collect();
    Mask::new(field.width, field.height, out).expect("field dimensions")
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with reflect-101 borders. The kernel is normalised,
/// so the output never exceeds the input's max-norm.
fn blur(field: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return field.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * field[y * w + reflect(x as i64 + j as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[reflect(y as i64 + j as i64 - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Uniform `[-1,1]` noise per axis, Gaussian-smoothed with `sigma`, scaled by
/// `alpha`. Displacements are bounded by `alpha` in max-norm.
pub fn elastic_field(w: usize, h: usize, alpha: f64, sigma: f64, rng: &mut Prng) -> WarpField {
    let mut noise = |_: ()| -> Vec<f64> {
        let raw: Vec<f64> = (0..w * h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        blur(&raw, w, h, sigma)
    };
    let dx = noise(());
    let dy = noise(());
    let mut f = WarpField::identity(w, h);
    for i in 0..w * h {
        f.sx[i] += alpha * dx[i];
        f.sy[i] += alpha * dy[i];
    }
    f
}

/// Piecewise-linear map of `[0, n-1]` onto itself where cell `i` is stretched
/// by `steps[i]` (relative widths).
fn grid_axis(n: usize, steps: &[f64]) -> Vec<f64> {
    let cells = steps.len();
    let span = (n - 1) as f64;
    let total: f64 = steps.iter().sum();
    // knot positions in destination space: uniform; in source space: cumulative steps
    let mut src_knots = vec![0.0; cells + 1];
    for i in 0..cells {
        src_knots[i + 1] = src_knots[i] + steps[i] / total * span;
    }
    src_knots[cells] = span;
    (0..n)
        .map(|p| {
            let t = p as f64 / span.max(1.0) * cells as f64;
            let c = (t.floor() as usize).min(cells - 1);
            let a = t - c as f64;
            src_knots[c] * (1.0 - a) + src_knots[c + 1] * a
        })
        .collect()
}

/// Each of `cells` columns and rows is resized by `1 + U(−limit, limit)`.
pub fn grid_field(w: usize, h: usize, cells: usize, limit: f64, rng: &mut Prng) -> WarpField {
    let cells = cells.max(1);
    let mut steps = |_: ()| -> Vec<f64> {
        (0..cells)
            .map(|_| 1.0 + if limit > 0.0 { rng.uniform_range(-limit, limit) } else { 0.0 })
            .collect()
    };
    let xs = grid_axis(w, &steps(()));
    let ys = grid_axis(h, &steps(()));
    let mut f = WarpField::identity(w, h);
    for y in 0..h {
        for x in 0..w {
            f.sx[y * w + x] = xs[x];
            f.sy[y * w + x] = ys[y];
        }
    }
    f
}

/// Radial model `r' = r(1 + k1·r²)` about the image centre, with `r`
/// normalised by half the larger side.
pub fn optical_field(w: usize, h: usize, k1: f64) -> WarpField {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let norm = (w.max(h) as f64 / 2.0).max(1.0);
    let mut f = WarpField::identity(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = ((x as f64 - cx) / norm, (y as f64 - cy) / norm);
            let s = 1.0 + k1 * (u * u + v * v);
            f.sx[y * w + x] = cx + u * s * norm;
            f.sy[y * w + x] = cy + v * s * norm;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = Prng::new(seed);
        RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.below(256) as u8).collect()).unwrap()
    }

    #[test]
    fn reflect_101() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 5), 3);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let img = random_image(2, 13, 9);
        let mut mask = Mask::zeros(13, 9);
        mask.set(4, 4, true);
        let mut rng = Prng::new(0);
        for f in [
            elastic_field(13, 9, 0.0, 6.0, &mut rng),
            grid_field(13, 9, 5, 0.0, &mut rng),
            optical_field(13, 9, 0.0),
        ] {
            assert_eq!(warp_image(&img, &f), img);
            assert_eq!(warp_mask(&mask, &f), mask);
        }
    }

    #[test]
    fn elastic_displacement_bound() {
        let mut rng = Prng::new(7);
        let f = elastic_field(32, 24, 1.0, 8.0, &mut rng);
        let m = f.max_displacement();
        assert!(m > 0.0 && m <= 1.0, "{m}");
        let f = elastic_field(32, 24, 30.0, 6.0, &mut rng);
        assert!(f.max_displacement() <= 30.0);
    }

    #[test]
    fn mask_stays_binary_and_tracks_image() {
        let mut rng = Prng::new(11);
        let (w, h) = (40, 30);
        for trial in 0..6 {
            let field = match trial % 3 {
                0 => elastic_field(w, h, 30.0, 6.0, &mut rng),
                1 => grid_field(w, h, 5, 0.3, &mut rng),
                _ => optical_field(w, h, if trial < 3 { 0.1 } else { -0.1 }),
            };
            // single hot pixel at a known place in both image and mask
            let (px, py) = (13 + trial, 11);
            let mut mask = Mask::zeros(w, h);
            mask.set(px, py, true);
            let mut img = RgbImage::filled(w, h, [0, 0, 0]);
            img.put(px, py, [255, 255, 255]);
            let wm = warp_mask(&mask, &field);
            let wi = warp_image(&img, &field);
            assert!(wm.data().iter().all(|&v| v <= 1));
            // every mask hit has a bright image pixel within one pixel
            for y in 0..h {
                for x in 0..w {
                    if wm.get(x, y) == 1 {
                        let mut near = 0u8;
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                                    near = near.max(wi.get(nx as usize, ny as usize)[0]);
                                }
                            }
                        }
                        assert!(near > 0, "trial {trial} at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn grid_axis_endpoints_fixed() {
        let a = grid_axis(11, &[1.2, 0.8, 1.0]);
        assert_eq!(a[0], 0.0);
        assert!((a[10] - 10.0).abs() < 1e-12);
        assert!(a.windows(2).all(|p| p[1] >= p[0]));
    }
}
