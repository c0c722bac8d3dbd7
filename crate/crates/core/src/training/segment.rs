use serde::{Deserialize, Serialize};

use super::{augment_seed, epoch_order, prepare_batch, Sgd, SgdConfig, TrainLog, TrainOutput};
use crate::augment::{apply_pipeline, AugmentationSpec};
use crate::data::LoadedSample;
use crate::error::{Error, Result};
use crate::layers::Module;
use crate::losses::{mse, weighted_bce, BceWeights};
use crate::metrics::iou;
use crate::models::{Checkpoint, UNetLite};
use crate::pipeline::{batch_tensor, segment, threshold_mask};
use crate::raster::{Mask, RgbImage};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SegLoss {
    WeightedBce { w1: f64, w2: f64 },
    Mse,
}

impl Default for SegLoss {
    fn default() -> Self {
        SegLoss::WeightedBce { w1: 1.0, w2: 1.0 }
    }
}

impl SegLoss {
    pub fn compute(&self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        match *self {
            SegLoss::WeightedBce { w1, w2 } => weighted_bce(pred, target, BceWeights::new(w1, w2)?),
            SegLoss::Mse => mse(pred, target),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegTrainConfig {
    pub sgd: SgdConfig,
    pub batch_size: usize,
    /// Epochs of the first and second sequence.
    pub epochs: [usize; 2],
    /// Augmentation of the first and second sequence.
    pub augment: [AugmentationSpec; 2],
    pub loss: SegLoss,
    /// Binarisation threshold for the validation IoU.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            batch_size: 8,
            epochs: [10, 10],
            augment: [AugmentationSpec::coarse(), AugmentationSpec::full()],
            loss: SegLoss::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl SegTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!("threshold {} outside [0,1]", self.threshold)));
        }
        if let SegLoss::WeightedBce { w1, w2 } = self.loss {
            BceWeights::new(w1, w2)?;
        }
        Ok(())
    }
}

/// Validation losses around the switch from the first to the second
/// sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmStart {
    pub first_final_val_loss: f64,
    pub second_initial_val_loss: f64,
}

impl WarmStart {
    pub fn holds(&self) -> bool {
        self.second_initial_val_loss <= self.first_final_val_loss
    }
}

fn mask_tensor(masks: &[&Mask]) -> Result<Tensor> {
    let (w, h) = (masks[0].width(), masks[0].height());
    let data = masks
        .iter()
        .flat_map(|m| m.data().iter().map(|&v| v as f32))
        .collect();
    Tensor::new(data, &[masks.len(), 1, h, w])
}

fn with_masks<'a>(samples: &'a [LoadedSample], what: &str) -> Result<Vec<(&'a RgbImage, &'a Mask)>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.mask
                .as_ref()
                .map(|m| (&s.image, m))
                .ok_or_else(|| Error::Dataset(format!("{what} sample {i} has no mask")))
        })
        .collect()
}

/// Mean loss and mean IoU over a validation set.
fn validate_seg(
    unet: &UNetLite,
    val: &[(&RgbImage, &Mask)],
    loss: SegLoss,
    threshold: f64,
) -> Result<(f64, f64)> {
    let images: Vec<&RgbImage> = val.iter().map(|p| p.0).collect();
    let probs = segment(unet, &images)?;
    let (mut total_loss, mut total_iou) = (0.0, 0.0);
    for (p, (_, m)) in probs.iter().zip(val) {
        let target = m.to_tensor::<f32>();
        total_loss += loss.compute(p, &target)?.item()? as f64;
        total_iou += iou(threshold_mask(p, threshold)?.data(), m.data())?;
    }
    let n = val.len() as f64;
    Ok((total_loss / n, total_iou / n))
}

/// Two-sequence segmentation training. The second sequence starts from the
/// best checkpoint of the first with a fresh optimizer. Validation runs after
/// every epoch and the checkpoint with the highest mean IoU is kept.
pub fn train_segmentation(
    unet: &mut UNetLite,
    train: &[LoadedSample],
    val: &[LoadedSample],
    cfg: &SegTrainConfig,
) -> Result<(TrainOutput, Option<WarmStart>)> {
    cfg.validate()?;
    let train = with_masks(train, "training")?;
    let val = with_masks(val, "validation")?;
    if train.is_empty() {
        return Err(Error::EmptyInput("segmentation training set"));
    }
    if val.is_empty() {
        log::warn!("empty validation set: validation skipped, the last checkpoint is kept");
    }

    let mut log = TrainLog::new();
    let mut best: Option<Checkpoint> = None;
    let mut step = 0u64;
    let mut first_final = None;
    let mut warm = None;

    for seq in 0..2 {
        let mut opt = Sgd::new(cfg.sgd)?;
        if seq == 1 {
            if let Some(b) = &best {
                b.restore(unet)?;
            }
            if !val.is_empty() {
                let (loss, _) = validate_seg(unet, &val, cfg.loss, cfg.threshold)?;
                if let Some(first_final_val_loss) = first_final {
                    let w = WarmStart { first_final_val_loss, second_initial_val_loss: loss };
                    if w.holds() {
                        log::info!("warm start: sequence 2 starts at val loss {loss} <= {first_final_val_loss}");
                    } else {
                        log::warn!("warm start: sequence 2 starts at val loss {loss} > {first_final_val_loss}");
                    }
                    warm = Some(w);
                }
            }
        }
        let spec = &cfg.augment[seq];
        for epoch in 0..cfg.epochs[seq] {
            let order = epoch_order(cfg.seed, seq as u64, epoch as u64, train.len());
            for chunk in order.chunks(cfg.batch_size) {
                let pairs = prepare_batch(chunk, |i| {
                    let (img, m) = train[i];
                    let out = apply_pipeline(img, Some(m), spec, augment_seed(cfg.seed, seq as u64, epoch as u64, i))?;
                    Ok((out.image, out.mask.expect("mask was supplied")))
                })?;
                let x = batch_tensor(&pairs.iter().map(|p| &p.0).collect::<Vec<_>>())?;
                let y = mask_tensor(&pairs.iter().map(|p| &p.1).collect::<Vec<_>>())?;
                let loss = cfg.loss.compute(&unet.forward(&x)?, &y)?;
                loss.backward()?;
                let lr = opt.lr();
                opt.step(unet.params_mut())?;
                step += 1;
                log.record_step(step, lr, loss.item()? as f64);
            }
            if !val.is_empty() {
                let (val_loss, val_iou) = validate_seg(unet, &val, cfg.loss, cfg.threshold)?;
                log::info!("seq {} epoch {epoch}: step {step} val_loss {val_loss:.5} val_iou {val_iou:.4}", seq + 1);
                if log.record_validation(step, val_loss, val_iou) {
                    best = Some(Checkpoint::from_model(unet, Some(opt.export_state())));
                }
                if seq == 0 {
                    first_final = Some(val_loss);
                }
            }
        }
        if seq == 0 && best.is_none() {
            best = Some(Checkpoint::from_model(unet, Some(opt.export_state())));
        }
    }

    let last = Checkpoint::from_model(unet, None);
    let best = match log.best() {
        Some(_) => best.expect("best checkpoint recorded with the best event"),
        None => last.clone(),
    };
    Ok((TrainOutput { log, best, last }, warm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitSpec;
    use crate::models::{Network, UNetLiteConfig};
    use crate::tensor::Prng;

    fn sample(seed: u64) -> LoadedSample {
        let mut rng = Prng::new(seed);
        let mask = Mask::new(8, 8, (0..64).map(|i| ((i % 8) >= 3 && (i % 8) < 6) as u8).collect()).unwrap();
        let image = RgbImage::new(
            8,
            8,
            mask.data()
                .iter()
                .flat_map(|&m| {
                    let base = if m == 1 { 200.0 } else { 40.0 };
                    let v = (base + rng.uniform_range(-20.0, 20.0)) as u8;
                    [v, v, v]
                })
                .collect(),
        )
        .unwrap();
        LoadedSample { image, mask: Some(mask), label: None }
    }

    fn cfg(epochs: [usize; 2]) -> SegTrainConfig {
        SegTrainConfig {
            sgd: SgdConfig { lr: 0.05, momentum: 0.9, factor: 1.0 },
            batch_size: 2,
            epochs,
            augment: [AugmentationSpec::none(), AugmentationSpec::none()],
            ..Default::default()
        }
    }

    fn net() -> UNetLite {
        UNetLite::new(UNetLiteConfig { depth: 1, base_channels: 4 }, &InitSpec::he(3)).unwrap()
    }

    #[test]
    fn one_epoch_reduces_loss() {
        let data = vec![sample(1)];
        let mut unet = net();
        let c = SegTrainConfig { batch_size: 1, ..cfg([5, 0]) };
        let (out, _) = train_segmentation(&mut unet, &data, &data, &c).unwrap();
        let losses: Vec<f64> = out.log.steps().map(|s| s.train_loss).collect();
        assert_eq!(losses.len(), 5);
        let x = batch_tensor(&[&data[0].image]).unwrap();
        let y = mask_tensor(&[data[0].mask.as_ref().unwrap()]).unwrap();
        let after = c.loss.compute(&unet.forward(&x).unwrap(), &y).unwrap().item().unwrap() as f64;
        assert!(after < losses[0], "{after} vs {}", losses[0]);
    }

    #[test]
    fn best_checkpoint_and_warm_start() {
        let data: Vec<_> = (0..4).map(sample).collect();
        let mut unet = net();
        let (out, warm) = train_segmentation(&mut unet, &data, &data[..2], &cfg([3, 2])).unwrap();
        assert_eq!(out.log.steps().count(), 10);
        assert_eq!(out.log.validations().count(), 5);
        let best = out.log.best().unwrap();
        assert!(out.log.validations().all(|v| v.val_metric <= best.val_metric));
        // the best checkpoint reproduces the best validation score
        let mut probe = net();
        out.best.restore(&mut probe).unwrap();
        let val = with_masks(&data[..2], "v").unwrap();
        let (_, iou_best) = validate_seg(&probe, &val, SegLoss::default(), 0.5).unwrap();
        assert_eq!(iou_best, best.val_metric);
        let warm = warm.unwrap();
        assert!(warm.first_final_val_loss.is_finite() && warm.second_initial_val_loss.is_finite());
    }

    #[test]
    fn empty_validation_keeps_last() {
        let data = vec![sample(2)];
        let mut unet = net();
        let (out, warm) = train_segmentation(&mut unet, &data, &[], &cfg([1, 1])).unwrap();
        assert!(out.log.best().is_none());
        assert!(warm.is_none());
        assert_eq!(out.best.params, out.last.params);
        assert_eq!(out.last.params, unet.export_params());
    }

    #[test]
    fn requires_masks() {
        let mut s = sample(1);
        s.mask = None;
        let r = train_segmentation(&mut net(), &[s], &[], &cfg([1, 1]));
        assert!(matches!(r, Err(Error::Dataset(_))));
    }

    #[test]
    fn mse_loss_is_selectable() {
        let data = vec![sample(4)];
        let c = SegTrainConfig { loss: SegLoss::Mse, ..cfg([1, 1]) };
        let (out, _) = train_segmentation(&mut net(), &data, &data, &c).unwrap();
        assert!(out.log.steps().all(|s| s.train_loss < 1.0));
    }
}
