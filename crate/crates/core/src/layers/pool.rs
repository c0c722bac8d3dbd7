use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn dims4(op: &'static str, x: &Tensor<impl Element>) -> Result<[usize; 4]> {
    match *x.shape() {
        [b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(Error::InvalidShape(format!(
            "{op} expects [B,C,H,W], got {:?}",
            x.shape()
        ))),
    }
}

fn pooled_size(op: &'static str, h: usize, w: usize, k: usize, s: usize) -> Result<(usize, usize)> {
    if k == 0 || s == 0 {
        return Err(Error::InvalidParameter(format!("{op}: window {k}, stride {s}")));
    }
    if h < k || w < k {
        return Err(Error::InputTooSmall {
            op,
            input: [h, w],
            window: [k, k],
        });
    }
    Ok(((h - k) / s + 1, (w - k) / s + 1))
}

/// Max over `k`×`k` windows with stride `s`. The gradient goes to the first
/// maximum of each window in row-major order.
pub fn maxpool2d<T: Element>(input: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4("maxpool2d", input)?;
    let (oh, ow) = pooled_size("maxpool2d", h, w, k, s)?;
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * s * w + ox * s;
                for i in 0..k {
                    for j in 0..k {
                        let idx = base + (oy * s + i) * w + ox * s + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let n = input.numel();
    Ok(Tensor::from_op(
        out,
        &[b, c, oh, ow],
        "maxpool2d",
        vec![input.clone()],
        Box::new(move |g| {
            let mut gx = vec![T::zero(); n];
            for (&gi, &src) in g.iter().zip(&argmax) {
                gx[src] += gi;
            }
            vec![Some(gx)]
        }),
    ))
}

/// Mean over `k`×`k` windows with stride `s`.
pub fn avgpool2d<T: Element>(input: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4("avgpool2d", input)?;
    let (oh, ow) = pooled_size("avgpool2d", h, w, k, s)?;
    let x = input.data();
    let area = T::from_f64((k * k) as f64);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for i in 0..k {
                    for j in 0..k {
                        acc += x[base + (oy * s + i) * w + ox * s + j];
                    }
                }
                out.push(acc / area);
            }
        }
    }
    let n = input.numel();
    Ok(Tensor::from_op(
        out,
        &[b, c, oh, ow],
        "avgpool2d",
        vec![input.clone()],
        Box::new(move |g| {
            let mut gx = vec![T::zero(); n];
            let mut o = 0;
            for plane in 0..b * c {
                let base = plane * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = g[o] / area;
                        o += 1;
                        for i in 0..k {
                            for j in 0..k {
                                gx[base + (oy * s + i) * w + ox * s + j] += share;
                            }
                        }
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}

/// Nearest-neighbour upsampling: every pixel becomes a `factor`×`factor` block.
pub fn upsample_nearest<T: Element>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4("upsample_nearest", input)?;
    if factor == 0 {
        return Err(Error::InvalidParameter("upsample factor must be >= 1".into()));
    }
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let row = &x[base + (oy / factor) * w..base + (oy / factor + 1) * w];
            for ox in 0..ow {
                out.push(row[ox / factor]);
            }
        }
    }
    let n = input.numel();
    Ok(Tensor::from_op(
        out,
        &[b, c, oh, ow],
        "upsample_nearest",
        vec![input.clone()],
        Box::new(move |g| {
            let mut gx = vec![T::zero(); n];
            for plane in 0..b * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        gx[plane * h * w + (oy / factor) * w + ox / factor] +=
                            g[(plane * oh + oy) * ow + ox];
                    }
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

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn maxpool_examples() {
        let y = maxpool2d(&t(vec![1., 2., 3., 4.], &[1, 1, 2, 2]), 2, 2).unwrap();
        assert_eq!(y.data(), &[4.]);
        let c = maxpool2d(&t(vec![7.; 36], &[1, 1, 6, 6]), 2, 2).unwrap();
        assert_eq!(c.shape(), &[1, 1, 3, 3]);
        assert!(c.data().iter().all(|&v| v == 7.));
        assert!(matches!(
            maxpool2d(&t(vec![1.; 4], &[1, 1, 2, 2]), 3, 1),
            Err(Error::InputTooSmall { .. })
        ));
    }

    #[test]
    fn maxpool_matches_window_scan() {
        let mut rng = Prng::new(3);
        let x: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let y = maxpool2d(&t(x.clone(), &[1, 1, 8, 8]), 2, 2).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                let mut m = f64::NEG_INFINITY;
                for i in 0..2 {
                    for j in 0..2 {
                        m = m.max(x[(2 * oy + i) * 8 + 2 * ox + j]);
                    }
                }
                assert_eq!(y.data()[oy * 4 + ox], m);
            }
        }
    }

    #[test]
    fn maxpool_tie_goes_to_first() {
        let x = Tensor::<f64>::param(vec![5., 5., 5., 5.], &[1, 1, 2, 2]).unwrap();
        maxpool2d(&x, 2, 2).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1., 0., 0., 0.]);
    }

    #[test]
    fn upsample_examples() {
        let y = upsample_nearest(&t(vec![1.], &[1, 1, 1, 1]), 2).unwrap();
        assert_eq!(y.data(), &[1., 1., 1., 1.]);
        let x = t(vec![1., 2., 3., 4., 5., 6.], &[1, 1, 2, 3]);
        assert_eq!(upsample_nearest(&x, 1).unwrap().data(), x.data());
    }

    #[test]
    fn block_mean_inverts_upsample() {
        let mut rng = Prng::new(8);
        let x = t((0..2 * 3 * 4 * 5).map(|_| rng.normal()).collect(), &[2, 3, 4, 5]);
        for f in 1..4 {
            let up = upsample_nearest(&x, f).unwrap();
            let down = avgpool2d(&up, f, f).unwrap();
            // mean of f² copies of v is exactly v for f ∈ {1, 2}; within 1 ulp-ish otherwise
            for (a, b) in down.data().iter().zip(x.data()) {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs(), "{a} vs {b}");
            }
            if f <= 2 {
                assert_eq!(down.data(), x.data());
            }
        }
    }

    #[test]
    fn avgpool_value() {
        let y = avgpool2d(&t(vec![1., 2., 3., 4.], &[1, 1, 2, 2]), 2, 2).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }
}
