//! Two-stage inference: segment, threshold, mask the image, classify.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::softmax;
use crate::metrics::{iou, CLASS_NAMES, NUM_CLASSES};
use crate::models::{load_unet, load_vgg, UNetLite, VggLite};
use crate::raster::{Mask, RgbImage};
use crate::tensor::{Element, Tensor};

/// Images per forward pass during inference.
pub const INFERENCE_BATCH: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub segmenter: PathBuf,
    pub classifier: PathBuf,
}

fn default_threshold() -> f64 {
    0.5
}

fn check_threshold(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("threshold {p} outside [0,1]")));
    }
    Ok(())
}

/// Pixel is 1 iff `prob ≥ p`. Accepts `[H,W]`, `[1,H,W]` or `[1,1,H,W]`.
pub fn threshold_mask<T: Element>(probs: &Tensor<T>, p: f64) -> Result<Mask> {
    check_threshold(p)?;
    let (h, w) = match *probs.shape() {
        [h, w] | [1, h, w] | [1, 1, h, w] => (h, w),
        _ => {
            return Err(Error::InvalidShape(format!(
                "threshold_mask expects a single-channel map, got {:?}",
                probs.shape()
            )))
        }
    };
    Mask::new(w, h, probs.data().iter().map(|v| (v.as_f64() >= p) as u8).collect())
}

/// `[B,1,H,W]` probabilities to one mask per image.
pub fn threshold_batch<T: Element>(probs: &Tensor<T>, p: f64) -> Result<Vec<Mask>> {
    check_threshold(p)?;
    let [b, 1, h, w] = *probs.shape() else {
        return Err(Error::InvalidShape(format!("expected [B,1,H,W], got {:?}", probs.shape())));
    };
    (0..b)
        .map(|i| {
            let plane = &probs.data()[i * h * w..(i + 1) * h * w];
            Mask::new(w, h, plane.iter().map(|v| (v.as_f64() >= p) as u8).collect())
        })
        .collect()
}

/// Keeps pixels where the mask is 1 and sets the rest to black.
pub fn compose_mask(image: &RgbImage, mask: &Mask) -> Result<RgbImage> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(Error::shape(
            "compose_mask",
            &[image.height(), image.width()],
            &[mask.height(), mask.width()],
        ));
    }
    let mut out = image.clone();
    for (px, &m) in out.data_mut().chunks_exact_mut(3).zip(mask.data()) {
        if m == 0 {
            px.fill(0);
        }
    }
    Ok(out)
}

/// Tensor form of [`compose_mask`] for `[3,H,W]` images.
pub fn compose_tensor<T: Element>(image: &Tensor<T>, mask: &Mask) -> Result<Tensor<T>> {
    let [3, h, w] = *image.shape() else {
        return Err(Error::InvalidShape(format!("expected [3,H,W], got {:?}", image.shape())));
    };
    if (w, h) != (mask.width(), mask.height()) {
        return Err(Error::shape("compose_tensor", &[h, w], &[mask.height(), mask.width()]));
    }
    let m = Tensor::new(
        mask.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
        &[1, h, w],
    )?;
    image.mul(&Tensor::concat(&[m.clone(), m.clone(), m], 0)?)
}

/// Stacks images into a `[B,3,H,W]` tensor.
pub fn batch_tensor<T: Element>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let first = images.first().ok_or(Error::EmptyInput("batch_tensor"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::shape("batch_tensor", &[h, w], &[img.height(), img.width()]));
        }
        data.extend_from_slice(img.to_tensor::<T>().data());
    }
    Tensor::new(data, &[images.len(), 3, h, w])
}

/// Segmentation probabilities, one `[1,H,W]` tensor per image.
pub fn segment<T: Element>(unet: &UNetLite<T>, images: &[&RgbImage]) -> Result<Vec<Tensor<T>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFERENCE_BATCH) {
        let probs = unet.forward(&batch_tensor(chunk)?)?;
        let [b, 1, h, w] = *probs.shape() else { unreachable!("unet output is [B,1,H,W]") };
        for i in 0..b {
            out.push(Tensor::new(probs.data()[i * h * w..(i + 1) * h * w].to_vec(), &[1, h, w])?);
        }
    }
    Ok(out)
}

/// Class probabilities per image.
pub fn classify<T: Element>(vgg: &VggLite<T>, images: &[&RgbImage]) -> Result<Vec<[f64; NUM_CLASSES]>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFERENCE_BATCH) {
        let probs = softmax(&vgg.forward(&batch_tensor(chunk)?)?)?;
        for row in probs.data().chunks_exact(NUM_CLASSES) {
            let mut p = [0.0; NUM_CLASSES];
            p.iter_mut().zip(row).for_each(|(d, v)| *d = v.as_f64());
            out.push(p);
        }
    }
    Ok(out)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mask: Mask,
    pub composed: RgbImage,
    pub class: usize,
    pub probabilities: [f64; NUM_CLASSES],
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    class: usize,
    class_name: &'a str,
    probabilities: [f64; NUM_CLASSES],
    mask_area_fraction: f64,
}

impl Prediction {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PredictionRecord {
            class: self.class,
            class_name: CLASS_NAMES[self.class],
            probabilities: self.probabilities,
            mask_area_fraction: self.mask.area_fraction(),
        })
        .expect("plain record serialises")
    }
}

/// Both stage networks plus the binarisation threshold.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub unet: UNetLite,
    pub vgg: VggLite,
    pub threshold: f64,
}

impl Pipeline {
    pub fn new(unet: UNetLite, vgg: VggLite, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(Self { unet, vgg, threshold })
    }

    /// Builds both networks from their checkpoints.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        Self::new(load_unet(&cfg.segmenter)?, load_vgg(&cfg.classifier)?, cfg.threshold)
    }

    pub fn predict(&self, image: &RgbImage) -> Result<Prediction> {
        Ok(self.predict_batch(&[image])?.remove(0))
    }

    pub fn predict_batch(&self, images: &[&RgbImage]) -> Result<Vec<Prediction>> {
        let probs = segment(&self.unet, images)?;
        let masks = probs
            .iter()
            .map(|p| threshold_mask(p, self.threshold))
            .collect::<Result<Vec<_>>>()?;
        self.classify_with_masks(images, masks)
    }

    /// Classification stage with externally supplied masks.
    pub fn classify_with_masks(&self, images: &[&RgbImage], masks: Vec<Mask>) -> Result<Vec<Prediction>> {
        let composed = images
            .iter()
            .zip(&masks)
            .map(|(img, m)| compose_mask(img, m))
            .collect::<Result<Vec<_>>>()?;
        let probs = classify(&self.vgg, &composed.iter().collect::<Vec<_>>())?;
        Ok(masks
            .into_iter()
            .zip(composed)
            .zip(probs)
            .map(|((mask, composed), probabilities)| Prediction {
                mask,
                composed,
                class: argmax(&probabilities),
                probabilities,
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// `(p, mean IoU)` in grid order.
    pub points: Vec<(f64, f64)>,
    /// Grid point with the highest mean IoU (first on ties).
    pub best: (f64, f64),
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,mean_iou\n");
        for (p, v) in &self.points {
            s += &format!("{p},{v}\n");
        }
        s
    }

    /// True if the best point is neither the first nor the last grid point.
    pub fn has_interior_maximum(&self) -> bool {
        let n = self.points.len();
        let best = self.best.1;
        n >= 3 && best > self.points[0].1 && best > self.points[n - 1].1
    }
}

/// `lo, lo+step, …, hi` with the end points included; values are rounded to
/// 1e-9 so `0.1:0.9:0.1` yields exactly nine points.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || lo > hi || lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidParameter(format!("bad threshold grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Mean IoU against the truth masks at each threshold of `grid`, reusing one
/// set of probability maps.
pub fn sweep_threshold_probs<T: Element>(probs: &[Tensor<T>], truths: &[&Mask], grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("threshold grid"));
    }
    if probs.is_empty() || probs.len() != truths.len() {
        return Err(Error::Dataset(format!(
            "sweep needs one truth mask per image, got {} images and {} masks",
            probs.len(),
            truths.len()
        )));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &p in grid {
        let mut total = 0.0;
        for (prob, truth) in probs.iter().zip(truths) {
            total += iou(threshold_mask(prob, p)?.data(), truth.data())?;
        }
        points.push((p, total / probs.len() as f64));
    }
    let best = points
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |b, pt| if pt.1 > b.1 { pt } else { b });
    Ok(SweepResult { points, best })
}

pub fn sweep_threshold<T: Element>(
    unet: &UNetLite<T>,
    images: &[&RgbImage],
    truths: &[&Mask],
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("threshold grid"));
    }
    grid.iter().try_for_each(|&p| check_threshold(p))?;
    sweep_threshold_probs(&segment(unet, images)?, truths, grid)
}
