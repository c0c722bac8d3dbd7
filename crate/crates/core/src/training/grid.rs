use super::classify::validate_cls;
use super::{prepare_classification, train_classifier, ClsTrainConfig, LabeledPair, MaskSource, TrainOutput};
use crate::data::LoadedSample;
use crate::error::Result;
use crate::layers::InitSpec;
use crate::models::{UNetLite, VggLite, VggLiteConfig};

/// `(pre-trained, reset, alternating)` of the four numbered regimes.
pub const TABLE_REGIMES: [(bool, bool, bool); 4] = [
    (true, false, false),
    (false, true, false),
    (true, false, true),
    (true, true, false),
];

pub const REGIME_SUMMARY_HEADER: &str = "training,pre_trained,reset,alternating,acc";

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeRow {
    /// `1`..`4`, or `separated`.
    pub label: String,
    pub pretrained: bool,
    pub reset: bool,
    pub alternating: bool,
    /// Best validation accuracy on segmenter-composed images.
    pub acc: f64,
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub vgg: VggLiteConfig,
    /// Every classifier starts from this initialisation.
    pub init_seed: u64,
    /// Base settings; the regime flags are overwritten per row.
    pub cls: ClsTrainConfig,
    /// Binarisation threshold for the segmenter masks.
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct GridOutput {
    pub rows: Vec<RegimeRow>,
    /// Classifier trained on ground-truth masks.
    pub ground_truth: TrainOutput,
    /// One run per numbered regime.
    pub runs: Vec<TrainOutput>,
}

/// Trains a classifier on ground-truth masks, scores it on segmenter output
/// (separated training), then trains each numbered regime on segmenter
/// output.
pub fn run_regime_grid(
    unet: &UNetLite,
    train: &[LoadedSample],
    val: &[LoadedSample],
    cfg: &GridConfig,
) -> Result<GridOutput> {
    let fresh = || VggLite::new(cfg.vgg.clone(), &InitSpec::he(cfg.init_seed));
    let seg = MaskSource::Segmenter { unet, threshold: cfg.threshold };
    let gt_train = prepare_classification(train, &MaskSource::GroundTruth)?;
    let gt_val = prepare_classification(val, &MaskSource::GroundTruth)?;
    let seg_train = prepare_classification(train, &seg)?;
    let seg_val = prepare_classification(val, &seg)?;

    let base = ClsTrainConfig { regime: cfg.cls.regime.with_flags(false, false, false), ..cfg.cls.clone() };
    let mut gt_model = fresh()?;
    let ground_truth = train_classifier(&mut gt_model, &gt_train, &gt_val, &base, None)?;

    let mut rows = Vec::with_capacity(5);
    let mut runs = Vec::with_capacity(4);
    for (i, &(pretrained, reset, alternating)) in TABLE_REGIMES.iter().enumerate() {
        let run_cfg = ClsTrainConfig {
            regime: cfg.cls.regime.with_flags(pretrained, reset, alternating),
            ..cfg.cls.clone()
        };
        let mut model = fresh()?;
        let out = train_classifier(&mut model, &seg_train, &seg_val, &run_cfg, Some(&ground_truth.best))?;
        rows.push(RegimeRow {
            label: (i + 1).to_string(),
            pretrained,
            reset,
            alternating,
            acc: out.log.best().map_or(f64::NAN, |b| b.val_metric),
        });
        runs.push(out);
    }

    let mut separated = fresh()?;
    ground_truth.best.restore(&mut separated)?;
    rows.push(RegimeRow {
        label: "separated".into(),
        pretrained: false,
        reset: false,
        alternating: false,
        acc: separated_accuracy(&separated, &seg_val)?,
    });
    Ok(GridOutput { rows, ground_truth, runs })
}

fn separated_accuracy(vgg: &VggLite, val: &[LabeledPair]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let composed = val.iter().map(LabeledPair::composed).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = val.iter().map(|p| p.label).collect();
    Ok(validate_cls(vgg, &composed, &labels)?.1)
}

/// Regime table with `x` / `-` flags.
pub fn summary_csv(rows: &[RegimeRow]) -> String {
    let flag = |b: bool| if b { "x" } else { "-" };
    let mut s = format!("{REGIME_SUMMARY_HEADER}\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{}\n",
            r.label,
            flag(r.pretrained),
            flag(r.reset),
            flag(r.alternating),
            r.acc
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let rows: Vec<RegimeRow> = TABLE_REGIMES
            .iter()
            .enumerate()
            .map(|(i, &(p, r, a))| RegimeRow {
                label: (i + 1).to_string(),
                pretrained: p,
                reset: r,
                alternating: a,
                acc: 0.5,
            })
            .collect();
        let csv = summary_csv(&rows);
        assert_eq!(
            csv,
            "training,pre_trained,reset,alternating,acc\n1,x,-,-,0.5\n2,-,x,-,0.5\n3,x,-,x,0.5\n4,x,x,-,0.5\n"
        );
    }
}
