use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn rows<T: Element>(x: &Tensor<T>, op: &'static str) -> Result<usize> {
    match x.shape().last() {
        Some(&k) if k >= 1 => Ok(k),
        _ => Err(Error::InvalidShape(format!(
            "{op} needs rank >= 1, got {:?}",
            x.shape()
        ))),
    }
}

fn log_softmax_row<T: Element>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Softmax over the last axis, computed with max subtraction.
pub fn softmax<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let k = rows(input, "softmax")?;
    let mut out = vec![T::zero(); input.numel()];
    for (src, dst) in input.data().chunks(k).zip(out.chunks_mut(k)) {
        let max = src.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d = *d / total);
    }
    let y = out.clone();
    Ok(Tensor::from_op(
        out,
        input.shape(),
        "softmax",
        vec![input.clone()],
        Box::new(move |g| {
            // dx = y ⊙ (g − Σ g·y) per row
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), dr) in g.chunks(k).zip(y.chunks(k)).zip(gx.chunks_mut(k)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((d, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                    *d = yi * (gi - dot);
                }
            }
            vec![Some(gx)]
        }),
    ))
}

/// Log-softmax over the last axis (log-sum-exp with max subtraction).
pub fn log_softmax<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let k = rows(input, "log_softmax")?;
    let mut out = vec![T::zero(); input.numel()];
    for (src, dst) in input.data().chunks(k).zip(out.chunks_mut(k)) {
        log_softmax_row(src, dst);
    }
    let y = out.clone();
    Ok(Tensor::from_op(
        out,
        input.shape(),
        "log_softmax",
        vec![input.clone()],
        Box::new(move |g| {
            // dx = g − softmax · Σ g
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), dr) in g.chunks(k).zip(y.chunks(k)).zip(gx.chunks_mut(k)) {
                let total: T = gr.iter().copied().sum();
                for ((d, &gi), &li) in dr.iter_mut().zip(gr).zip(yr) {
                    *d = gi - li.exp() * total;
                }
            }
            vec![Some(gx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Prng;

    #[test]
    fn uniform_logits() {
        let y = softmax(&Tensor::<f64>::zeros(&[1, 4]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.25; 4]);
    }

    #[test]
    fn shift_invariance() {
        let x = Tensor::<f64>::new(vec![0.5, -1.0, 2.0, 0.0], &[1, 4]).unwrap();
        let a = softmax(&x).unwrap();
        let b = softmax(&x.add_scalar(37.0)).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_evaluation() {
        let mut rng = Prng::new(21);
        let logits: Vec<f32> = (0..3 * 5).map(|_| rng.uniform_range(-4.0, 4.0) as f32).collect();
        let y = softmax(&Tensor::new(logits.clone(), &[3, 5]).unwrap()).unwrap();
        for r in 0..3 {
            let row: Vec<f64> = logits[r * 5..r * 5 + 5].iter().map(|&v| v as f64).collect();
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for j in 0..5 {
                let want = row[j].exp() / z;
                let got = y.data()[r * 5 + j] as f64;
                assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn stable_for_large_magnitudes() {
        let x = Tensor::<f32>::new(vec![1e4, -1e4, 0.0, 9999.0], &[1, 4]).unwrap();
        let y = softmax(&x).unwrap();
        let s: f32 = y.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(y.data().iter().all(|v| v.is_finite()));
        let l = log_softmax(&x).unwrap();
        assert!(l.data().iter().all(|v| v.is_finite()));
    }
}
