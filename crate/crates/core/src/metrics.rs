//! Segmentation and classification metrics.
//!
//! Conventions for degenerate denominators:
//! - IoU of two empty masks is 1.0 (nothing to find, nothing found).
//! - Precision, recall and F1 are 0.0 when their denominator is zero.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};

/// Number of defect classes: healthy, broken, burned/corroded, missing cap.
pub const NUM_CLASSES: usize = 4;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["healthy", "broken", "burned", "missing-cap"];

/// Pixel IoU `TP / (TP + FP + FN)` of two binary masks of equal length.
pub fn iou(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("iou", &[pred.len()], &[truth.len()]));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => {}
            _ => return Err(Error::NonBinary("iou")),
        }
    }
    let denom = tp + fp + fn_;
    Ok(if denom == 0 { 1.0 } else { tp as f64 / denom as f64 })
}

/// Fraction of positions where `preds[i] == truths[i]`.
pub fn accuracy(preds: &[usize], truths: &[usize]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::shape("accuracy", &[preds.len()], &[truths.len()]));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `counts[truth][pred]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..NUM_CLASSES).filter(|&t| t != c).map(|t| self.counts[t][c]).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..NUM_CLASSES).filter(|&p| p != c).map(|p| self.counts[c][p]).sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::EmptyInput("confusion accuracy")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "truth\\pred")?;
        for c in 0..NUM_CLASSES {
            write!(f, "{c:>6}")?;
        }
        writeln!(f)?;
        for (t, row) in self.counts.iter().enumerate() {
            write!(f, "{t:>10}")?;
            for v in row {
                write!(f, "{v:>6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn confusion_from_pairs(preds: &[usize], truths: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::shape("confusion_from_pairs", &[preds.len()], &[truths.len()]));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        for c in [p, t] {
            if c >= NUM_CLASSES {
                return Err(Error::ClassOutOfRange {
                    class: c,
                    classes: NUM_CLASSES,
                });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class_prf(cm: &ConfusionMatrix) -> [ClassMetrics; NUM_CLASSES] {
    std::array::from_fn(|c| {
        let tp = cm.true_positives(c);
        let precision = ratio(tp, tp + cm.false_positives(c));
        let recall = ratio(tp, tp + cm.false_negatives(c));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.support(c),
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentationMetrics {
    pub iou_per_image: Vec<f64>,
    pub mean_iou: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
}

impl ClassificationMetrics {
    pub fn from_pairs(preds: &[usize], truths: &[usize]) -> Result<Self> {
        let confusion = confusion_from_pairs(preds, truths)?;
        Ok(Self {
            accuracy: accuracy(preds, truths)?,
            per_class: per_class_prf(&confusion),
            confusion,
        })
    }
}

/// Evaluation output. Either part may be absent depending on the mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub segmentation: Option<SegmentationMetrics>,
    pub classification: Option<ClassificationMetrics>,
}

impl MetricsReport {
    pub fn segmentation(iou_per_image: Vec<f64>, threshold: f64) -> Result<Self> {
        if iou_per_image.is_empty() {
            return Err(Error::EmptyInput("segmentation report"));
        }
        let mean_iou = iou_per_image.iter().sum::<f64>() / iou_per_image.len() as f64;
        Ok(Self {
            segmentation: Some(SegmentationMetrics {
                iou_per_image,
                mean_iou,
                threshold,
            }),
            classification: None,
        })
    }

    pub fn classification(preds: &[usize], truths: &[usize]) -> Result<Self> {
        Ok(Self {
            segmentation: None,
            classification: Some(ClassificationMetrics::from_pairs(preds, truths)?),
        })
    }

    /// Class table with columns `class,precision,recall,f1,support`: one row
    /// per class, then a `summary` row holding macro averages and the total
    /// support. Without classification metrics only the header is written.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        if let Some(c) = &self.classification {
            for (k, m) in c.per_class.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{k},{:.6},{:.6},{:.6},{}",
                    m.precision, m.recall, m.f1, m.support
                );
            }
            let n = NUM_CLASSES as f64;
            let avg = |f: fn(&ClassMetrics) -> f64| c.per_class.iter().map(f).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "summary,{:.6},{:.6},{:.6},{}",
                avg(|m| m.precision),
                avg(|m| m.recall),
                avg(|m| m.f1),
                c.confusion.total()
            );
        }
        out
    }

    /// Per-image IoU table with columns `image,iou`.
    pub fn iou_csv(&self) -> String {
        let mut out = String::from("image,iou\n");
        if let Some(s) = &self.segmentation {
            for (i, v) in s.iou_per_image.iter().enumerate() {
                let _ = writeln!(out, "{i},{v:.6}");
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.segmentation {
            let _ = writeln!(
                out,
                "segmentation: {} images, mean IoU {:.4} at threshold {:.3}",
                s.iou_per_image.len(),
                s.mean_iou,
                s.threshold
            );
        }
        if let Some(c) = &self.classification {
            let _ = writeln!(
                out,
                "classification: {} samples, accuracy {:.4}",
                c.confusion.total(),
                c.accuracy
            );
            let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
            for (k, m) in c.per_class.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>8}",
                    format!("{k} {}", CLASS_NAMES[k]),
                    m.precision,
                    m.recall,
                    m.f1,
                    m.support
                );
            }
            let _ = write!(out, "{}", c.confusion);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = [0, 1, 1, 0];
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(iou(&[0, 0], &[0, 0]).unwrap(), 1.0);
        // top half vs left half of a 4x4 grid
        let mut top = [0u8; 16];
        let mut left = [0u8; 16];
        for y in 0..4 {
            for x in 0..4 {
                top[y * 4 + x] = (y < 2) as u8;
                left[y * 4 + x] = (x < 2) as u8;
            }
        }
        assert!((iou(&top, &left).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(iou(&[2], &[1]), Err(Error::NonBinary(_))));
        assert!(iou(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput(_))));
        let truths = vec![0usize; 14];
        let mut preds = truths.clone();
        preds[0] = 1;
        preds[5] = 2;
        preds[9] = 3;
        let acc = accuracy(&preds, &truths).unwrap();
        assert!((acc - 11.0 / 14.0).abs() < 1e-15);
        // two decimals, truncated
        assert_eq!((acc * 100.0).floor() / 100.0, 0.78);
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_from_pairs(&[1], &[1]).unwrap();
        assert_eq!(cm.counts[1][1], 1);
        assert!(matches!(
            confusion_from_pairs(&[4], &[0]),
            Err(Error::ClassOutOfRange { .. })
        ));
        let p = [0, 1, 2, 3, 3, 0];
        let t = [0, 1, 1, 3, 2, 0];
        let a = confusion_from_pairs(&p, &t).unwrap();
        let b = confusion_from_pairs(&[3, 0, 3, 0, 2, 1], &[3, 0, 2, 0, 1, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diagonal_gives_perfect_scores() {
        let cm = confusion_from_pairs(&[0, 1, 2, 3, 3], &[0, 1, 2, 3, 3]).unwrap();
        for m in per_class_prf(&cm) {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn zero_denominator_convention() {
        let cm = confusion_from_pairs(&[0, 0], &[0, 0]).unwrap();
        let m = per_class_prf(&cm);
        assert_eq!(m[1].f1, 0.0);
        assert_eq!(m[1].precision, 0.0);
    }

    #[test]
    fn csv_layout() {
        let r = MetricsReport::classification(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,precision,recall,f1,support");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("summary,"));
        assert!(lines[5].ends_with(",4"));
        assert!(r.to_text().contains("accuracy 0.7500"));
    }
}
