use serde::{Deserialize, Serialize};

use crate::data::LoadedSample;
use crate::error::{Error, Result};
use crate::metrics::{iou, MetricsReport};
use crate::models::{UNetLite, VggLite};
use crate::pipeline::{argmax, classify, compose_mask, segment, threshold_mask};
use crate::raster::RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Segmentation,
    /// Classifier on images composed with their ground-truth masks; samples
    /// without a mask are taken as already composed.
    Classification,
    /// Segmenter masks feed the classifier.
    EndToEnd,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalModels<'a> {
    pub unet: Option<&'a UNetLite>,
    pub vgg: Option<&'a VggLite>,
    pub threshold: f64,
}

fn mismatch(mode: EvalMode, what: &str) -> Error {
    Error::Dataset(format!("{mode:?} evaluation needs {what}"))
}

fn labels(samples: &[LoadedSample], mode: EvalMode) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| s.label.ok_or_else(|| mismatch(mode, "a label on every sample")))
        .collect()
}

/// Scores models on a dataset without modifying them.
pub fn evaluate(models: EvalModels, samples: &[LoadedSample], mode: EvalMode) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let images: Vec<&RgbImage> = samples.iter().map(|s| &s.image).collect();
    match mode {
        EvalMode::Segmentation => {
            let unet = models.unet.ok_or_else(|| mismatch(mode, "a segmentation model"))?;
            let truths = samples
                .iter()
                .map(|s| s.mask.as_ref().ok_or_else(|| mismatch(mode, "a mask on every sample")))
                .collect::<Result<Vec<_>>>()?;
            let probs = segment(unet, &images)?;
            let scores = probs
                .iter()
                .zip(truths)
                .map(|(p, t)| iou(threshold_mask(p, models.threshold)?.data(), t.data()))
                .collect::<Result<Vec<_>>>()?;
            MetricsReport::segmentation(scores, models.threshold)
        }
        EvalMode::Classification => {
            let vgg = models.vgg.ok_or_else(|| mismatch(mode, "a classification model"))?;
            let truths = labels(samples, mode)?;
            let composed = samples
                .iter()
                .map(|s| match &s.mask {
                    Some(m) => compose_mask(&s.image, m),
                    None => Ok(s.image.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            let preds: Vec<usize> = classify(vgg, &composed.iter().collect::<Vec<_>>())?
                .iter()
                .map(|p| argmax(p))
                .collect();
            MetricsReport::classification(&preds, &truths)
        }
        EvalMode::EndToEnd => {
            let unet = models.unet.ok_or_else(|| mismatch(mode, "a segmentation model"))?;
            let vgg = models.vgg.ok_or_else(|| mismatch(mode, "a classification model"))?;
            let truths = labels(samples, mode)?;
            let composed = segment(unet, &images)?
                .iter()
                .zip(&images)
                .map(|(p, img)| compose_mask(img, &threshold_mask(p, models.threshold)?))
                .collect::<Result<Vec<_>>>()?;
            let preds: Vec<usize> = classify(vgg, &composed.iter().collect::<Vec<_>>())?
                .iter()
                .map(|p| argmax(p))
                .collect();
            MetricsReport::classification(&preds, &truths)
        }
    }
}
