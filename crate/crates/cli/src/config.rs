//! Run configuration: one TOML file, every key optional, unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use insulnet::augment::{AugmentationSpec, StepConfig};
use insulnet::models::{UNetLiteConfig, VggLiteConfig};
use insulnet::training::{ClsTrainConfig, RegimeSpec, SegLoss, SegTrainConfig, SgdConfig};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory for logs, checkpoints and the config echo.
    pub run_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub unet: UNetLiteConfig,
    pub vgg: VggLiteConfig,
    pub segmentation: SegSection,
    pub classification: ClsSection,
    pub pipeline: PipelineSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
}

/// A named preset (`full`, `coarse`, `none`) or an explicit step list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AugmentConfig {
    Preset(String),
    Steps(Vec<StepConfig>),
}

impl AugmentConfig {
    pub fn resolve(&self) -> Result<AugmentationSpec, String> {
        match self {
            AugmentConfig::Preset(name) => match name.as_str() {
                "full" => Ok(AugmentationSpec::full()),
                "coarse" => Ok(AugmentationSpec::coarse()),
                "none" => Ok(AugmentationSpec::none()),
                other => Err(format!("unknown preset `{other}` (expected full, coarse or none)")),
            },
            AugmentConfig::Steps(steps) => AugmentationSpec::from_config(steps).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegSection {
    pub optimizer: SgdConfig,
    pub batch_size: usize,
    pub epochs: [usize; 2],
    pub augment: [AugmentConfig; 2],
    pub loss: SegLoss,
    pub threshold: f64,
    pub init_seed: u64,
}

impl Default for SegSection {
    fn default() -> Self {
        let d = SegTrainConfig::default();
        Self {
            optimizer: d.sgd,
            batch_size: d.batch_size,
            epochs: d.epochs,
            augment: [AugmentConfig::Preset("coarse".into()), AugmentConfig::Preset("full".into())],
            loss: d.loss,
            threshold: d.threshold,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClsSection {
    pub optimizer: SgdConfig,
    pub batch_size: usize,
    pub regime: RegimeSpec,
    pub augment: AugmentConfig,
    pub init_seed: u64,
    /// Segmentation checkpoint whose masks feed the classifier; ground-truth
    /// masks are used when absent.
    pub segmenter: Option<PathBuf>,
    /// Ground-truth-trained classifier for the pre-trained regime.
    pub pretrained: Option<PathBuf>,
}

impl Default for ClsSection {
    fn default() -> Self {
        let d = ClsTrainConfig::default();
        Self {
            optimizer: d.sgd,
            batch_size: d.batch_size,
            regime: d.regime,
            augment: AugmentConfig::Preset("coarse".into()),
            init_seed: 0,
            segmenter: None,
            pretrained: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub threshold: f64,
    pub segmenter: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { threshold: 0.5, segmenter: None, classifier: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("config {}: {e}", path.display())]))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(vec![format!("config {}: {e}", path.display())]))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serialises")
    }

    pub fn seg_train(&self) -> Result<SegTrainConfig, String> {
        let s = &self.segmentation;
        let a0 = s.augment[0].resolve().map_err(|e| format!("segmentation.augment[0]: {e}"))?;
        let a1 = s.augment[1].resolve().map_err(|e| format!("segmentation.augment[1]: {e}"))?;
        Ok(SegTrainConfig {
            sgd: s.optimizer,
            batch_size: s.batch_size,
            epochs: s.epochs,
            augment: [a0, a1],
            loss: s.loss,
            threshold: s.threshold,
            seed: self.seed,
        })
    }

    pub fn cls_train(&self) -> Result<ClsTrainConfig, String> {
        let c = &self.classification;
        Ok(ClsTrainConfig {
            sgd: c.optimizer,
            batch_size: c.batch_size,
            regime: c.regime,
            augment: c.augment.resolve().map_err(|e| format!("classification.augment: {e}"))?,
            seed: self.seed,
        })
    }

    /// Every problem relevant to `command`, keyed by config path.
    pub fn problems(&self, command: Command) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |key: &str, r: Result<(), String>| {
            if let Err(e) = r {
                p.push(format!("{key}: {e}"));
            }
        };
        let needs_data = matches!(command, Command::TrainSeg | Command::TrainCls | Command::Ablate);
        if needs_data && self.data.manifest.is_none() {
            check("data.manifest", Err("required".into()));
        }
        if needs_data && self.run_dir.is_none() {
            check("run_dir", Err("required".into()));
        }
        if matches!(command, Command::TrainSeg | Command::Ablate) {
            check("unet", self.unet.validate().map_err(|e| e.to_string()));
            check("segmentation", self.seg_train().and_then(|c| c.validate().map_err(|e| e.to_string())));
        }
        if matches!(command, Command::TrainCls | Command::Ablate) {
            check("vgg", self.vgg.validate().map_err(|e| e.to_string()));
            check("classification", self.cls_train().and_then(|c| c.validate().map_err(|e| e.to_string())));
            if command == Command::TrainCls && self.classification.regime.pretrained && self.classification.pretrained.is_none() {
                check("classification.pretrained", Err("required by the pre-trained regime".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.pipeline.threshold) {
            check("pipeline.threshold", Err(format!("{} outside [0,1]", self.pipeline.threshold)));
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    TrainSeg,
    TrainCls,
    Ablate,
}
