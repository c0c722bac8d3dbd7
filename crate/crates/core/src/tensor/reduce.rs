use super::{numel_of, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    /// Ties resolve to the first maximum in row-major order.
    Max,
}

impl<T: Element> Tensor<T> {
    /// Reduces over `axes` (all axes when `None`). Reduced dimensions are
    /// removed; reducing every axis yields a scalar of shape `[]`.
    pub fn reduce(&self, op: ReduceOp, axes: Option<&[usize]>) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut reduced = vec![false; rank];
        match axes {
            None => reduced.iter_mut().for_each(|r| *r = true),
            Some(list) => {
                for &a in list {
                    if a >= rank {
                        return Err(Error::InvalidAxis { axis: a, rank });
                    }
                    reduced[a] = true;
                }
            }
        }
        let out_shape: Vec<usize> = (0..rank)
            .filter(|&d| !reduced[d])
            .map(|d| self.shape()[d])
            .collect();
        let out_len = numel_of(&out_shape);
        let count = self.numel() / out_len;

        // Output index for every input element, walking row-major.
        let mut out_strides = vec![0usize; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            if !reduced[d] {
                out_strides[d] = acc;
                acc *= self.shape()[d];
            }
        }
        let mut map = Vec::with_capacity(self.numel());
        let mut idx = vec![0usize; rank];
        let mut dst = 0usize;
        for _ in 0..self.numel() {
            map.push(dst);
            for d in (0..rank).rev() {
                idx[d] += 1;
                dst += out_strides[d];
                if idx[d] < self.shape()[d] {
                    break;
                }
                dst -= out_strides[d] * self.shape()[d];
                idx[d] = 0;
            }
        }

        let x = self.data();
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                let mut out = vec![T::zero(); out_len];
                for (&v, &m) in x.iter().zip(&map) {
                    out[m] += v;
                }
                let denom = if op == ReduceOp::Mean {
                    T::from_f64(count as f64)
                } else {
                    T::one()
                };
                if op == ReduceOp::Mean {
                    out.iter_mut().for_each(|v| *v = *v / denom);
                }
                let name = if op == ReduceOp::Mean { "mean" } else { "sum" };
                Ok(Tensor::from_op(
                    out,
                    &out_shape,
                    name,
                    vec![self.clone()],
                    Box::new(move |g| vec![Some(map.iter().map(|&m| g[m] / denom).collect())]),
                ))
            }
            ReduceOp::Max => {
                let mut out = vec![T::neg_infinity(); out_len];
                let mut arg = vec![usize::MAX; out_len];
                for (i, (&v, &m)) in x.iter().zip(&map).enumerate() {
                    if arg[m] == usize::MAX || v > out[m] {
                        out[m] = v;
                        arg[m] = i;
                    }
                }
                let n = self.numel();
                Ok(Tensor::from_op(
                    out,
                    &out_shape,
                    "max",
                    vec![self.clone()],
                    Box::new(move |g| {
                        let mut gx = vec![T::zero(); n];
                        for (o, &i) in arg.iter().enumerate() {
                            gx[i] += g[o];
                        }
                        vec![Some(gx)]
                    }),
                ))
            }
        }
    }

    pub fn sum(&self) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Sum, None)
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Mean, None)
    }

    pub fn max(&self) -> Result<Tensor<T>> {
        self.reduce(ReduceOp::Max, None)
    }
}
