//! Training losses: weighted binary cross-entropy and MSE for segmentation,
//! softmax cross-entropy for the four-class classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::log_softmax;
use crate::tensor::{Element, Tensor};

/// Positive-class (`w1`) and negative-class (`w2`) weights of the BCE loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BceWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for BceWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 1.0 }
    }
}

impl BceWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 > 0.0 && w2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "BCE weights must be positive, got w1={w1} w2={w2}"
            )));
        }
        Ok(Self { w1, w2 })
    }
}

/// `−(1/N) Σ [w1·y·ln p + w2·(1−y)·ln(1−p)]` with `p` clamped to
/// `[1e-7, 1−1e-7]`. `target` must hold only zeros and ones.
pub fn weighted_bce<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    w: BceWeights,
) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("weighted_bce", pred.shape(), target.shape()));
    }
    if target
        .data()
        .iter()
        .any(|&v| v != T::zero() && v != T::one())
    {
        return Err(Error::NonBinary("weighted_bce target"));
    }
    let pos_w = target.scale(T::from_f64(w.w1));
    let neg_w = target.neg().add_scalar(T::one()).scale(T::from_f64(w.w2));
    let log_p = pred.log_clamped();
    let log_q = pred.neg().add_scalar(T::one()).log_clamped();
    let terms = pos_w.mul(&log_p)?.add(&neg_w.mul(&log_q)?)?;
    Ok(terms.mean()?.neg())
}

/// `(1/N) Σ (y − ŷ)²`.
pub fn mse<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse", pred.shape(), target.shape()));
    }
    let d = pred.sub(target)?;
    d.mul(&d)?.mean()
}

/// Mean over the batch of `−ln softmax(logits)[target]` for `[B,K]` logits.
pub fn multiclass_ce<T: Element>(logits: &Tensor<T>, targets: &[usize]) -> Result<Tensor<T>> {
    let (b, k) = match *logits.shape() {
        [b, k] => (b, k),
        _ => {
            return Err(Error::InvalidShape(format!(
                "multiclass_ce expects [B,K] logits, got {:?}",
                logits.shape()
            )))
        }
    };
    if targets.len() != b {
        return Err(Error::shape("multiclass_ce", logits.shape(), &[targets.len()]));
    }
    let mut onehot = vec![T::zero(); b * k];
    for (i, &c) in targets.iter().enumerate() {
        if c >= k {
            return Err(Error::ClassOutOfRange { class: c, classes: k });
        }
        onehot[i * k + c] = T::one();
    }
    let onehot = Tensor::new(onehot, &[b, k])?;
    let picked = log_softmax(logits)?.mul(&onehot)?.sum()?;
    Ok(picked.scale(-T::one() / T::from_f64(b as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Prng;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(v.to_vec(), &[v.len()]).unwrap()
    }

    #[test]
    fn bce_examples() {
        let w = BceWeights::default();
        let near = weighted_bce(&t(&[1.0 - 1e-7]), &t(&[1.0]), w).unwrap();
        assert!(near.item().unwrap().abs() < 1e-6);
        let half = weighted_bce(&t(&[0.5]), &t(&[1.0]), w).unwrap();
        assert!((half.item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_direct_summation() {
        let mut rng = Prng::new(16);
        let p: Vec<f64> = (0..16).map(|_| rng.uniform_range(0.01, 0.99)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
        let w = BceWeights::new(2.0, 1.0).unwrap();
        let mut oracle = 0.0;
        for i in 0..16 {
            oracle += 2.0 * y[i] * p[i].ln() + 1.0 * (1.0 - y[i]) * (1.0 - p[i]).ln();
        }
        oracle = -oracle / 16.0;
        let got = weighted_bce(&t(&p), &t(&y), w).unwrap().item().unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-6);
    }

    #[test]
    fn bce_errors() {
        let w = BceWeights::default();
        assert!(matches!(
            weighted_bce(&t(&[0.5, 0.5]), &t(&[1.0]), w),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            weighted_bce(&t(&[0.5]), &t(&[0.3]), w),
            Err(Error::NonBinary(_))
        ));
        assert!(BceWeights::new(0.0, 1.0).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&t(&[1., 2.]), &t(&[1., 2.])).unwrap().item().unwrap(), 0.0);
        assert_eq!(mse(&t(&[0., 0.]), &t(&[1., 1.])).unwrap().item().unwrap(), 1.0);
        assert!(mse(&t(&[0., 0.]), &t(&[1.])).is_err());
    }

    #[test]
    fn mse_matches_direct_summation() {
        let mut rng = Prng::new(5);
        let a: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
        let oracle = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 50.0;
        let got = mse(&t(&a), &t(&b)).unwrap().item().unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-7);
    }

    #[test]
    fn ce_examples() {
        let z = Tensor::<f64>::zeros(&[1, 4]).unwrap();
        for c in 0..4 {
            let l = multiclass_ce(&z, &[c]).unwrap().item().unwrap();
            assert!((l - 4f64.ln()).abs() < 1e-12);
        }
        let sure = Tensor::<f64>::new(vec![10., -10., -10., -10.], &[1, 4]).unwrap();
        assert!(multiclass_ce(&sure, &[0]).unwrap().item().unwrap() < 1e-4);
        assert!(matches!(
            multiclass_ce(&z, &[4]),
            Err(Error::ClassOutOfRange { class: 4, .. })
        ));
    }

    #[test]
    fn ce_matches_direct_evaluation() {
        let mut rng = Prng::new(44);
        let logits: Vec<f64> = (0..6 * 4).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let targets: Vec<usize> = (0..6).map(|_| rng.below(4)).collect();
        let mut oracle = 0.0;
        for i in 0..6 {
            let row = &logits[i * 4..i * 4 + 4];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            oracle -= (row[targets[i]].exp() / z).ln();
        }
        oracle /= 6.0;
        let got = multiclass_ce(&Tensor::new(logits, &[6, 4]).unwrap(), &targets)
            .unwrap()
            .item()
            .unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-5);
    }
}
