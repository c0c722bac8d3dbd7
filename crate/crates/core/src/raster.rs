//! 8-bit RGB images and binary masks, stored row-major.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Interleaved 8-bit RGB image (`H×W×3`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::InvalidShape(format!(
                "rgb image {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// `[3,H,W]` tensor with values `v/255`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let mut out = vec![T::zero(); plane * 3];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = T::from_f64(px[c] as f64 / 255.0);
            }
        }
        Tensor::new(out, &[3, self.height, self.width]).expect("valid image shape")
    }

    /// Inverse of [`RgbImage::to_tensor`]: scales by 255, rounds half up and
    /// clips to `[0, 255]`. Accepts `[3,H,W]` or `[1,3,H,W]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = match *t.shape() {
            [3, h, w] | [1, 3, h, w] => (h, w),
            _ => {
                return Err(Error::InvalidShape(format!(
                    "expected [3,H,W], got {:?}",
                    t.shape()
                )))
            }
        };
        let plane = h * w;
        let src = t.data();
        let mut data = vec![0u8; plane * 3];
        for p in 0..plane {
            for c in 0..3 {
                data[p * 3 + c] = quantize(src[c * plane + p].as_f64());
            }
        }
        Self::new(w, h, data)
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Single-channel mask with values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::NonBinary("mask"));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// `[1,H,W]` tensor of zeros and ones.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        Tensor::new(
            self.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
            &[1, self.height, self.width],
        )
        .expect("valid mask shape")
    }
}
