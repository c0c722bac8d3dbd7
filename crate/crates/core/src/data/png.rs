use std::fs;
use std::path::Path;

use image::ImageFormat;

use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};

fn open(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match image::guess_format(&bytes) {
        Ok(ImageFormat::Png) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: match other {
                    Ok(f) => format!("{f:?} files are not supported, use PNG"),
                    Err(_) => "not a recognised image file".into(),
                },
            })
        }
    }
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Reads a PNG as 8-bit RGB (gray and alpha inputs are converted).
pub fn read_image(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w as usize, h as usize, img.into_raw())
}

pub fn write_image(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a single-channel PNG mask: values ≥ 128 become 1. Also returns how
/// many pixels were neither 0 nor 255.
pub fn read_mask_counting(path: &Path) -> Result<(Mask, usize)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    let intermediate = raw.iter().filter(|&&v| v != 0 && v != 255).count();
    let data = raw.into_iter().map(|v| (v >= 128) as u8).collect();
    Ok((Mask::new(w as usize, h as usize, data)?, intermediate))
}

/// [`read_mask_counting`] that logs a warning when the mask was not strictly
/// binary.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let (mask, intermediate) = read_mask_counting(path)?;
    if intermediate > 0 {
        log::warn!(
            "{}: {intermediate} mask pixels are neither 0 nor 255; binarised at 128",
            path.display()
        );
    }
    Ok(mask)
}

/// Writes a mask as an 8-bit gray PNG with values 0 and 255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    ensure_parent(path)?;
    let data: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    image::save_buffer_with_format(
        path,
        &data,
        mask.width() as u32,
        mask.height() as u32,
        image::ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Prng;

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Prng::new(1);
        let img = RgbImage::new(7, 5, (0..105).map(|_| rng.below(256) as u8).collect()).unwrap();
        let p = dir.path().join("sub/a.png");
        write_image(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }

    #[test]
    fn mask_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::save_buffer_with_format(&p, &[0, 255, 200, 127], 4, 1, image::ExtendedColorType::L8, ImageFormat::Png)
            .unwrap();
        let (m, intermediate) = read_mask_counting(&p).unwrap();
        assert_eq!(m.data(), &[0, 1, 1, 0]);
        assert_eq!(intermediate, 2);

        let mask = Mask::new(3, 2, vec![1, 0, 0, 1, 1, 0]).unwrap();
        write_mask(&p, &mask).unwrap();
        assert_eq!(read_mask_counting(&p).unwrap(), (mask, 0));
    }

    #[test]
    fn rejects_non_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        fs::write(&p, b"definitely not an image").unwrap();
        assert!(matches!(read_image(&p), Err(Error::UnsupportedFormat { .. })));
        let bmp = dir.path().join("b.bmp");
        fs::write(&bmp, b"BM\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_image(&bmp), Err(Error::UnsupportedFormat { .. })));
        assert!(matches!(read_image(&dir.path().join("none.png")), Err(Error::Io { .. })));
    }
}
