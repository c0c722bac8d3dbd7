use serde::{Deserialize, Serialize};

use super::{augment_seed, epoch_order, prepare_batch, Sgd, SgdConfig, TrainLog, TrainOutput};
use crate::augment::{apply_pipeline, AugmentationSpec};
use crate::data::LoadedSample;
use crate::error::{Error, Result};
use crate::layers::Module;
use crate::losses::multiclass_ce;
use crate::metrics::{accuracy, NUM_CLASSES};
use crate::models::{Checkpoint, UNetLite, VggLite};
use crate::pipeline::{argmax, batch_tensor, classify, compose_mask, segment, threshold_mask};
use crate::raster::{Mask, RgbImage};
use crate::tensor::Tensor;

/// Where the classifier's masks come from.
#[derive(Clone, Copy, Debug)]
pub enum MaskSource<'a> {
    GroundTruth,
    Segmenter { unet: &'a UNetLite, threshold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeSpec {
    /// Start from a classifier trained on ground-truth masks.
    pub pretrained: bool,
    /// Restore the optimizer to its initial state after each inner loop.
    pub reset: bool,
    /// Switch between the main and the alternate optimizer after each inner
    /// loop.
    pub alternating: bool,
    pub outer_epochs: usize,
    pub inner_epochs: usize,
    pub alternate: SgdConfig,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self {
            pretrained: false,
            reset: false,
            alternating: false,
            outer_epochs: 4,
            inner_epochs: 5,
            alternate: SgdConfig::alternate_default(),
        }
    }
}

impl RegimeSpec {
    pub fn with_flags(self, pretrained: bool, reset: bool, alternating: bool) -> Self {
        Self { pretrained, reset, alternating, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.reset && self.alternating {
            problems.push("reset and alternating cannot be combined".to_string());
        }
        if self.outer_epochs == 0 || self.inner_epochs == 0 {
            problems.push("outer_epochs and inner_epochs must be positive".to_string());
        }
        if let Err(e) = self.alternate.validate() {
            problems.push(format!("alternate optimizer: {e}"));
        }
        match problems.is_empty() {
            true => Ok(()),
            false => Err(Error::InvalidParameter(problems.join("; "))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClsTrainConfig {
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub regime: RegimeSpec,
    /// Applied to image and mask before composing.
    pub augment: AugmentationSpec,
    pub seed: u64,
}

impl Default for ClsTrainConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            batch_size: 8,
            regime: RegimeSpec::default(),
            augment: AugmentationSpec::coarse(),
            seed: 0,
        }
    }
}

impl ClsTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        self.regime.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// An image, the mask to compose it with, and its class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub image: RgbImage,
    pub mask: Mask,
    pub label: usize,
}

impl LabeledPair {
    pub fn composed(&self) -> Result<RgbImage> {
        compose_mask(&self.image, &self.mask)
    }
}

/// Attaches the source's mask to every labelled sample.
pub fn prepare_classification(samples: &[LoadedSample], source: &MaskSource) -> Result<Vec<LabeledPair>> {
    let labels = samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.ok_or_else(|| Error::Dataset(format!("sample {i} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let masks = match *source {
        MaskSource::GroundTruth => samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.mask
                    .clone()
                    .ok_or_else(|| Error::Dataset(format!("sample {i} has no ground-truth mask")))
            })
            .collect::<Result<Vec<_>>>()?,
        MaskSource::Segmenter { unet, threshold } => {
            let images: Vec<&RgbImage> = samples.iter().map(|s| &s.image).collect();
            if images.is_empty() {
                Vec::new()
            } else {
                segment(unet, &images)?
                    .iter()
                    .map(|p| threshold_mask(p, threshold))
                    .collect::<Result<_>>()?
            }
        }
    };
    Ok(samples
        .iter()
        .zip(masks)
        .zip(labels)
        .map(|((s, mask), label)| LabeledPair { image: s.image.clone(), mask, label })
        .collect())
}

/// Mean cross-entropy and accuracy on composed images.
pub(super) fn validate_cls(vgg: &VggLite, composed: &[RgbImage], labels: &[usize]) -> Result<(f64, f64)> {
    let probs = classify(vgg, &composed.iter().collect::<Vec<_>>())?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let loss = probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| -p[l].max(1e-12).ln())
        .sum::<f64>()
        / labels.len() as f64;
    Ok((loss, accuracy(&preds, labels)?))
}

/// Trains the classifier in nested loops. After each inner loop the regime
/// resets the optimizer or switches to the alternate one. A pre-trained
/// regime loads `init` first.
pub fn train_classifier(
    vgg: &mut VggLite,
    train: &[LabeledPair],
    val: &[LabeledPair],
    cfg: &ClsTrainConfig,
    init: Option<&Checkpoint>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("classification training set"));
    }
    if let Some(p) = train.iter().chain(val).find(|p| p.label >= NUM_CLASSES) {
        return Err(Error::ClassOutOfRange { class: p.label, classes: NUM_CLASSES });
    }
    let regime = cfg.regime;
    if regime.pretrained {
        init.ok_or_else(|| {
            Error::InvalidParameter("the pre-trained regime needs a ground-truth checkpoint".into())
        })?
        .restore(vgg)?;
    }
    let val_composed = val.iter().map(LabeledPair::composed).collect::<Result<Vec<_>>>()?;
    let val_labels: Vec<usize> = val.iter().map(|p| p.label).collect();
    if val.is_empty() {
        log::warn!("empty validation set: validation skipped, the last checkpoint is kept");
    }

    let mut opts = [Sgd::new(cfg.sgd)?, Sgd::new(regime.alternate)?];
    let mut active = 0;
    let mut log = TrainLog::new();
    let mut best = None;
    let mut step = 0u64;

    for outer in 0..regime.outer_epochs {
        for inner in 0..regime.inner_epochs {
            let epoch = (outer * regime.inner_epochs + inner) as u64;
            let order = epoch_order(cfg.seed, 0, epoch, train.len());
            for chunk in order.chunks(cfg.batch_size) {
                let images = prepare_batch(chunk, |i| {
                    let p = &train[i];
                    let out = apply_pipeline(&p.image, Some(&p.mask), &cfg.augment, augment_seed(cfg.seed, 0, epoch, i))?;
                    compose_mask(&out.image, out.mask.as_ref().expect("mask was supplied"))
                })?;
                let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
                let x: Tensor = batch_tensor(&images.iter().collect::<Vec<_>>())?;
                let loss = multiclass_ce(&vgg.forward(&x)?, &labels)?;
                loss.backward()?;
                let opt = &mut opts[active];
                let lr = opt.lr();
                opt.step(vgg.params_mut())?;
                step += 1;
                log.record_step(step, lr, loss.item()? as f64);
            }
            if !val.is_empty() {
                let (val_loss, acc) = validate_cls(vgg, &val_composed, &val_labels)?;
                log::info!("epoch {epoch}: step {step} val_loss {val_loss:.5} val_acc {acc:.4}");
                if log.record_validation(step, val_loss, acc) {
                    best = Some(Checkpoint::from_model(vgg, Some(opts[active].export_state())));
                }
            }
        }
        if regime.reset {
            opts[active].reset();
        }
        if regime.alternating {
            active = 1 - active;
        }
    }

    let last = Checkpoint::from_model(vgg, None);
    let best = best.unwrap_or_else(|| last.clone());
    Ok(TrainOutput { log, best, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitSpec;
    use crate::models::{Network, VggLiteConfig};
    use crate::tensor::Prng;

    fn vgg_cfg() -> VggLiteConfig {
        VggLiteConfig { blocks: vec![(4, 1)], hidden: 8, input_size: [8, 8] }
    }

    /// Class c lights up quadrant c.
    fn pairs(n: usize, seed: u64) -> Vec<LabeledPair> {
        let mut rng = Prng::new(seed);
        (0..n)
            .map(|i| {
                let label = i % NUM_CLASSES;
                let (qx, qy) = (label % 2, label / 2);
                let mut data = Vec::with_capacity(192);
                for y in 0..8 {
                    for x in 0..8 {
                        let on = x / 4 == qx && y / 4 == qy;
                        let v = if on { 220.0 } else { 30.0 } + rng.uniform_range(-15.0, 15.0);
                        data.extend([v as u8; 3]);
                    }
                }
                LabeledPair { image: RgbImage::new(8, 8, data).unwrap(), mask: Mask::ones(8, 8), label }
            })
            .collect()
    }

    fn cfg(regime: RegimeSpec) -> ClsTrainConfig {
        ClsTrainConfig {
            sgd: SgdConfig { lr: 0.05, momentum: 0.9, factor: 0.99 },
            batch_size: 4,
            regime,
            augment: AugmentationSpec::none(),
            seed: 1,
        }
    }

    fn regime(outer: usize, inner: usize) -> RegimeSpec {
        RegimeSpec { outer_epochs: outer, inner_epochs: inner, ..Default::default() }
    }

    #[test]
    fn overfits_simple_set() {
        let data = pairs(16, 1);
        let mut vgg = VggLite::new(vgg_cfg(), &InitSpec::he(2)).unwrap();
        let out = train_classifier(&mut vgg, &data, &data, &cfg(regime(2, 10)), None).unwrap();
        assert_eq!(out.log.steps().count(), 2 * 10 * 4);
        assert!(out.log.best().unwrap().val_metric > 0.9);
    }

    #[test]
    fn reset_restores_initial_lr() {
        let data = pairs(8, 3);
        let mut vgg = VggLite::new(vgg_cfg(), &InitSpec::he(2)).unwrap();
        let c = cfg(regime(3, 1).with_flags(false, true, false));
        let out = train_classifier(&mut vgg, &data, &data, &c, None).unwrap();
        let lrs: Vec<f64> = out.log.steps().map(|s| s.lr).collect();
        // two batches per inner loop
        assert_eq!(lrs, vec![0.05, 0.05 * 0.99, 0.05, 0.05 * 0.99, 0.05, 0.05 * 0.99]);
    }

    #[test]
    fn alternating_swaps_optimizers() {
        let data = pairs(4, 3);
        let mut vgg = VggLite::new(vgg_cfg(), &InitSpec::he(2)).unwrap();
        let mut r = regime(3, 1).with_flags(false, false, true);
        r.alternate = SgdConfig { lr: 0.01, momentum: 0.5, factor: 0.5 };
        let out = train_classifier(&mut vgg, &data, &data, &cfg(r), None).unwrap();
        let lrs: Vec<f64> = out.log.steps().map(|s| s.lr).collect();
        assert_eq!(lrs, vec![0.05, 0.01, 0.05 * 0.99]);
    }

    #[test]
    fn pretrained_requires_compatible_checkpoint() {
        let data = pairs(4, 3);
        let mut vgg = VggLite::new(vgg_cfg(), &InitSpec::he(2)).unwrap();
        let c = cfg(regime(1, 1).with_flags(true, false, false));
        assert!(train_classifier(&mut vgg, &data, &data, &c, None).is_err());
        let other = VggLite::<f32>::new(VggLiteConfig { hidden: 6, ..vgg_cfg() }, &InitSpec::he(2)).unwrap();
        let ck = Checkpoint::from_model(&other, None);
        assert!(matches!(
            train_classifier(&mut vgg, &data, &data, &c, Some(&ck)),
            Err(Error::ArchitectureMismatch { .. })
        ));
        // a compatible checkpoint is loaded before the first step
        let donor = VggLite::<f32>::new(vgg_cfg(), &InitSpec::he(77)).unwrap();
        let ck = Checkpoint::from_model(&donor, None);
        let mut a = VggLite::new(vgg_cfg(), &InitSpec::he(2)).unwrap();
        let mut b = VggLite::new(vgg_cfg(), &InitSpec::he(77)).unwrap();
        let ra = train_classifier(&mut a, &data, &data, &c, Some(&ck)).unwrap();
        let rb = train_classifier(&mut b, &data, &data, &cfg(regime(1, 1)), None).unwrap();
        assert_eq!(ra.log, rb.log);
        assert_eq!(a.export_params(), b.export_params());
    }

    #[test]
    fn regime_validation() {
        assert!(regime(1, 1).with_flags(false, true, true).validate().is_err());
        assert!(regime(0, 1).validate().is_err());
        assert!(regime(1, 1).with_flags(true, true, false).validate().is_ok());
    }

    #[test]
    fn prepare_checks_inputs() {
        let s = LoadedSample { image: RgbImage::filled(8, 8, [1, 2, 3]), mask: None, label: Some(1) };
        assert!(prepare_classification(&[s.clone()], &MaskSource::GroundTruth).is_err());
        let s2 = LoadedSample { mask: Some(Mask::ones(8, 8)), label: None, ..s };
        assert!(prepare_classification(&[s2], &MaskSource::GroundTruth).is_err());
    }
}
