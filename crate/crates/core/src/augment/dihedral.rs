//! Flips, transpose and quarter-turn rotations: exact pixel permutations.

use crate::raster::{Mask, RgbImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dihedral {
    HFlip,
    VFlip,
    Transpose,
    /// Counter-clockwise quarter turns.
    Rot90(u8),
}

/// Destination (width, height) and the source pixel for each destination pixel.
fn source_of(kind: Dihedral, w: usize, h: usize) -> (usize, usize, impl Fn(usize, usize) -> (usize, usize)) {
    let (dw, dh) = match kind {
        Dihedral::Transpose => (h, w),
        Dihedral::Rot90(k) if k % 2 == 1 => (h, w),
        _ => (w, h),
    };
    let f = move |x: usize, y: usize| match kind {
        Dihedral::HFlip => (w - 1 - x, y),
        Dihedral::VFlip => (x, h - 1 - y),
        Dihedral::Transpose => (y, x),
        Dihedral::Rot90(k) => match k % 4 {
            0 => (x, y),
            // ccw: destination (x, y) shows source (w-1-y, x)
            1 => (w - 1 - y, x),
            2 => (w - 1 - x, h - 1 - y),
            _ => (y, h - 1 - x),
        },
    };
    (dw, dh, f)
}

pub fn dihedral_image(kind: Dihedral, img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let (dw, dh, src) = source_of(kind, w, h);
    let mut out = vec![0u8; dw * dh * 3];
    for y in 0..dh {
        for x in 0..dw {
            let (sx, sy) = src(x, y);
            let s = (sy * w + sx) * 3;
            out[(y * dw + x) * 3..(y * dw + x) * 3 + 3].copy_from_slice(&img.data()[s..s + 3]);
        }
    }
    RgbImage::new(dw, dh, out).expect("dimensions preserved")
}

pub fn dihedral_mask(kind: Dihedral, mask: &Mask) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let (dw, dh, src) = source_of(kind, w, h);
    let mut out = vec![0u8; dw * dh];
    for y in 0..dh {
        for x in 0..dw {
            let (sx, sy) = src(x, y);
            out[y * dw + x] = mask.data()[sy * w + sx];
        }
    }
    Mask::new(dw, dh, out).expect("dimensions preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> RgbImage {
        RgbImage::new(w, h, (0..w * h * 3).map(|i| (i % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn involutions() {
        let img = ramp(5, 3);
        for k in [Dihedral::HFlip, Dihedral::VFlip, Dihedral::Transpose] {
            assert_eq!(dihedral_image(k, &dihedral_image(k, &img)), img);
        }
        let mut r = img.clone();
        for _ in 0..4 {
            r = dihedral_image(Dihedral::Rot90(1), &r);
        }
        assert_eq!(r, img);
    }

    #[test]
    fn transpose_definition() {
        let img = ramp(3, 2);
        let t = dihedral_image(Dihedral::Transpose, &img);
        assert_eq!((t.width(), t.height()), (2, 3));
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(t.get(r, c), img.get(c, r));
            }
        }
    }

    #[test]
    fn rot90_is_counter_clockwise() {
        // top-right pixel moves to top-left
        let mut img = RgbImage::filled(3, 2, [0, 0, 0]);
        img.put(2, 0, [9, 9, 9]);
        let r = dihedral_image(Dihedral::Rot90(1), &img);
        assert_eq!(r.get(0, 0), [9, 9, 9]);
        let r2 = dihedral_image(Dihedral::Rot90(2), &img);
        assert_eq!(r2, dihedral_image(Dihedral::Rot90(1), &r));
        let r3 = dihedral_image(Dihedral::Rot90(3), &img);
        assert_eq!(r3, dihedral_image(Dihedral::Rot90(1), &r2));
    }

    #[test]
    fn mask_follows_image() {
        let mut img = RgbImage::filled(4, 3, [0, 0, 0]);
        let mut mask = Mask::zeros(4, 3);
        img.put(3, 1, [255, 255, 255]);
        mask.set(3, 1, true);
        for k in [Dihedral::HFlip, Dihedral::VFlip, Dihedral::Transpose, Dihedral::Rot90(1), Dihedral::Rot90(3)] {
            let (i, m) = (dihedral_image(k, &img), dihedral_mask(k, &mask));
            for y in 0..m.height() {
                for x in 0..m.width() {
                    assert_eq!(m.get(x, y) == 1, i.get(x, y)[0] == 255);
                }
            }
        }
    }
}
