//! Synthetic aerial-style scenes: a chain of insulator discs on a rod, seen
//! over a background, with one of four defect states.
//!
//! Every pixel is either insulator (cap or rod) or background, so the mask is
//! exactly the set of insulator pixels.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_image, write_manifest, write_mask, Sample, Split};
use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};
use crate::tensor::{mix_seed, Prng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    Gradient,
    NoiseTexture,
    GeometricClutter,
}

impl Background {
    pub const ALL: [Background; 3] = [Background::Gradient, Background::NoiseTexture, Background::GeometricClutter];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectKind {
    None,
    Broken,
    Burned,
    MissingCap,
}

impl DefectKind {
    pub const ALL: [DefectKind; 4] = [DefectKind::None, DefectKind::Broken, DefectKind::Burned, DefectKind::MissingCap];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    /// Inclusive range of discs per insulator.
    pub cap_count: [usize; 2],
    /// Disc radius range as a fraction of the shorter image side.
    pub cap_radius: [f64; 2],
    /// Rod width as a fraction of the shorter image side.
    pub rod_width: f64,
    /// Fixed background, or `None` to draw one per scene.
    pub background: Option<Background>,
    pub defect: DefectKind,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            cap_count: [4, 7],
            cap_radius: [0.11, 0.17],
            rod_width: 0.025,
            background: None,
            defect: DefectKind::None,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic scene: {m}")));
        if self.width < 16 || self.height < 16 {
            return bad("image must be at least 16x16");
        }
        if self.cap_count[0] < 3 || self.cap_count[0] > self.cap_count[1] {
            return bad("cap_count must be an increasing range starting at >= 3");
        }
        if !(self.cap_radius[0] > 0.0 && self.cap_radius[0] <= self.cap_radius[1] && self.cap_radius[1] < 0.5) {
            return bad("cap_radius must be an increasing range within (0, 0.5)");
        }
        if !(self.rod_width > 0.0 && self.rod_width < 0.2) {
            return bad("rod_width must be within (0, 0.2)");
        }
        Ok(())
    }
}

/// A rendered scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub mask: Mask,
    pub label: usize,
    pub background: Background,
}

struct Cap {
    /// Centre along the chain axis.
    u: f64,
    /// Half thickness along the axis and radius across it.
    t: f64,
    r: f64,
}

/// A disc broken off on one side of the chain axis.
struct Break {
    cap: usize,
    side: f64,
    /// Break line position and tilt in normalised cap coordinates.
    offset: f64,
    slope: f64,
}

impl Break {
    fn removes(&self, nu: f64, nv: f64) -> bool {
        self.side * nv > self.offset + self.slope * nu
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn random_color(rng: &mut Prng, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [
        rng.uniform_range(lo[0], hi[0]),
        rng.uniform_range(lo[1], hi[1]),
        rng.uniform_range(lo[2], hi[2]),
    ]
}

fn render_background(kind: Background, w: usize, h: usize, rng: &mut Prng) -> Vec<[f64; 3]> {
    let gradient = |rng: &mut Prng| {
        let top = random_color(rng, [110.0, 150.0, 190.0], [170.0, 200.0, 240.0]);
        let bottom = random_color(rng, [150.0, 170.0, 190.0], [220.0, 225.0, 235.0]);
        let angle = rng.uniform_range(-0.6, 0.6);
        let (s, c) = angle.sin_cos();
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let t = ((y as f64 / h as f64 - 0.5) * c + (x as f64 / w as f64 - 0.5) * s + 0.5).clamp(0.0, 1.0);
                px.push(lerp3(top, bottom, t));
            }
        }
        px
    };
    match kind {
        Background::Gradient => gradient(rng),
        Background::NoiseTexture => {
            let a = random_color(rng, [40.0, 60.0, 20.0], [90.0, 120.0, 60.0]);
            let b = random_color(rng, [110.0, 100.0, 60.0], [170.0, 150.0, 110.0]);
            let mut field = vec![0.0; w * h];
            for (octave, weight) in [(4usize, 0.6), (12usize, 0.4)] {
                let grid: Vec<f64> = (0..(octave + 1) * (octave + 1)).map(|_| rng.uniform()).collect();
                for y in 0..h {
                    for x in 0..w {
                        let gx = x as f64 / w as f64 * octave as f64;
                        let gy = y as f64 / h as f64 * octave as f64;
                        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
                        let (fx, fy) = (gx - ix as f64, gy - iy as f64);
                        let g = |i: usize, j: usize| grid[j * (octave + 1) + i];
                        let v = g(ix, iy) * (1.0 - fx) * (1.0 - fy)
                            + g(ix + 1, iy) * fx * (1.0 - fy)
                            + g(ix, iy + 1) * (1.0 - fx) * fy
                            + g(ix + 1, iy + 1) * fx * fy;
                        field[y * w + x] += weight * v;
                    }
                }
            }
            field.into_iter().map(|t| lerp3(a, b, t)).collect()
        }
        Background::GeometricClutter => {
            let mut px = gradient(rng);
            let shapes = 3 + rng.below(6);
            for _ in 0..shapes {
                let color = random_color(rng, [40.0, 40.0, 40.0], [200.0, 190.0, 180.0]);
                match rng.below(3) {
                    0 => {
                        // rectangle
                        let (x0, y0) = (rng.below(w), rng.below(h));
                        let (rw, rh) = (w / 10 + rng.below(w / 3), h / 10 + rng.below(h / 3));
                        for y in y0..(y0 + rh).min(h) {
                            for x in x0..(x0 + rw).min(w) {
                                px[y * w + x] = color;
                            }
                        }
                    }
                    1 => {
                        // straight cable or strut
                        let (x0, y0) = (rng.uniform() * w as f64, rng.uniform() * h as f64);
                        let angle = rng.uniform_range(0.0, PI);
                        let half = rng.uniform_range(0.5, 1.5);
                        let (s, c) = angle.sin_cos();
                        for y in 0..h {
                            for x in 0..w {
                                let d = (x as f64 - x0) * s - (y as f64 - y0) * c;
                                if d.abs() <= half {
                                    px[y * w + x] = color;
                                }
                            }
                        }
                    }
                    _ => {
                        let (cx, cy) = (rng.uniform() * w as f64, rng.uniform() * h as f64);
                        let r = rng.uniform_range(0.04, 0.15) * w.min(h) as f64;
                        for y in 0..h {
                            for x in 0..w {
                                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                                    px[y * w + x] = color;
                                }
                            }
                        }
                    }
                }
            }
            px
        }
    }
}

/// Renders one scene from `spec` (its `seed` and `defect` included).
pub fn render_scene(spec: &SyntheticSceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let s = w.min(h) as f64;
    let mut rng = Prng::new(spec.seed);

    let background = spec.background.unwrap_or_else(|| Background::ALL[rng.below(3)]);
    let mut px = render_background(background, w, h, &mut rng);

    // chain geometry
    let n = spec.cap_count[0] + rng.below(spec.cap_count[1] - spec.cap_count[0] + 1);
    let length = rng.uniform_range(0.55, 0.8) * s;
    let spacing = length / n as f64;
    let base_axis = if rng.bernoulli(0.5) { 0.0 } else { PI / 2.0 };
    let theta = base_axis + rng.uniform_range(-PI / 5.0, PI / 5.0);
    let (sin, cos) = theta.sin_cos();
    let cx = w as f64 / 2.0 + rng.uniform_range(-0.08, 0.08) * s;
    let cy = h as f64 / 2.0 + rng.uniform_range(-0.08, 0.08) * s;
    let r = rng.uniform_range(spec.cap_radius[0], spec.cap_radius[1]) * s;
    let t = (spacing * rng.uniform_range(0.28, 0.38)).max(0.8);
    let r = r.max(2.0 * t).max(2.0);
    let rod_half = (spec.rod_width * s / 2.0).max(0.75);
    let caps: Vec<Cap> = (0..n)
        .map(|k| Cap { u: -length / 2.0 + (k as f64 + 0.5) * spacing, t, r })
        .collect();

    let glass = [
        [70.0, 150.0, 130.0],
        [225.0, 225.0, 230.0],
        [175.0, 180.0, 190.0],
        [110.0, 170.0, 200.0],
    ][rng.below(4)];
    let rod_color = [85.0, 85.0, 92.0];

    // defect parameters
    let mut missing = None;
    let mut cuts: Vec<Break> = Vec::new();
    let mut burns: Vec<(usize, (f64, f64), f64)> = Vec::new();
    match spec.defect {
        DefectKind::None => {}
        DefectKind::MissingCap => missing = Some(1 + rng.below(n - 2)),
        DefectKind::Broken => {
            // one side of 2-3 adjacent discs snapped off along a slanted line
            let count = 2 + rng.below(2);
            let first = rng.below(n - count + 1);
            let side = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            for k in first..first + count {
                cuts.push(Break { cap: k, side, offset: rng.uniform_range(-0.1, 0.25), slope: rng.uniform_range(-0.4, 0.4) });
            }
        }
        DefectKind::Burned => {
            let count = 2 + rng.below(2);
            let first = rng.below(n - count + 1);
            for k in first..first + count {
                let centre = (rng.uniform_range(-0.5, 0.5) * t, rng.uniform_range(-0.4, 0.4) * r);
                burns.push((k, centre, rng.uniform_range(0.8, 1.2) * r));
            }
        }
    }
    let soot = [55.0, 35.0, 20.0];

    let mut mask = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;

            // nearest cap along the axis
            let k = ((u + length / 2.0) / spacing).floor();
            let mut color = None;
            if k >= 0.0 && (k as usize) < n {
                let k = k as usize;
                let cap = &caps[k];
                let du = u - cap.u;
                let inside = (du / cap.t).powi(2) + (v / cap.r).powi(2) <= 1.0;
                let cut = cuts.iter().any(|b| b.cap == k && b.removes(du / cap.t, v / cap.r));
                if inside && missing != Some(k) && !cut {
                    let radial = 1.0 - (v / cap.r).abs();
                    let shade = 0.6 + 0.4 * radial.sqrt() + if v < -0.3 * cap.r && du < 0.0 { 0.15 } else { 0.0 };
                    let mut c = [glass[0] * shade, glass[1] * shade, glass[2] * shade];
                    for (bk, (bu, bv), rho) in &burns {
                        if *bk == k {
                            let d = ((du - bu).powi(2) + (v - bv).powi(2)).sqrt();
                            if d < *rho {
                                c = lerp3(c, soot, 0.9 * (1.0 - d / rho).sqrt());
                            }
                        }
                    }
                    color = Some(c);
                }
            }
            if color.is_none() && v.abs() <= rod_half && u.abs() <= length / 2.0 + t {
                color = Some(rod_color);
            }
            if let Some(c) = color {
                px[y * w + x] = c;
                mask[y * w + x] = 1;
            }
        }
    }

    let data: Vec<u8> = px
        .iter()
        .flat_map(|c| c.map(|v| (v + rng.uniform_range(-6.0, 6.0)).round().clamp(0.0, 255.0) as u8))
        .collect();
    Ok(Scene {
        image: RgbImage::new(w, h, data)?,
        mask: Mask::new(w, h, mask)?,
        label: spec.defect.label(),
        background,
    })
}

/// Images per class in each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train_per_class: usize,
    pub val_per_class: usize,
}

/// Renders `counts` scenes per class into `out_dir/images`, `out_dir/masks`
/// and writes `out_dir/manifest.csv`. Rows are ordered by split, class, index.
pub fn generate_synthetic_dataset(
    counts: SplitCounts,
    template: &SyntheticSceneSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<Sample>> {
    template.validate()?;
    let mut jobs = Vec::new();
    for (split, per_class) in [(Split::Train, counts.train_per_class), (Split::Val, counts.val_per_class)] {
        for defect in DefectKind::ALL {
            for i in 0..per_class {
                jobs.push((split, defect, i));
            }
        }
    }
    let samples = jobs
        .par_iter()
        .map(|&(split, defect, i)| -> Result<Sample> {
            let spec = SyntheticSceneSpec {
                defect,
                seed: mix_seed(seed, &[split as u64, defect.label() as u64, i as u64]),
                ..template.clone()
            };
            let scene = render_scene(&spec)?;
            let name = format!("{split}_{}_{i:04}.png", defect.label());
            let image: PathBuf = out_dir.join("images").join(&name);
            let mask: PathBuf = out_dir.join("masks").join(&name);
            write_image(&image, &scene.image)?;
            write_mask(&mask, &scene.mask)?;
            Ok(Sample { image, mask: Some(mask), label: Some(scene.label), split })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&out_dir.join("manifest.csv"), &samples)?;
    Ok(samples)
}
