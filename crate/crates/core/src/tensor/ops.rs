//! Elementwise arithmetic, activations and matrix products.
//!
//! Broadcasting follows the trailing-dimension rule: a binary operation is
//! accepted when the shapes are equal or when one operand's shape, aligned to
//! the right of the other's, has every dimension equal to the matching one or
//! equal to 1. The larger operand's shape becomes the output shape. Leading
//! dimensions are never padded on the larger operand, so `[3,1] + [1,4]` is
//! rejected.

use super::kernels;
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to the argument of [`UnaryOp::LogClamped`].
pub const LOG_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    /// `ln(clamp(x, eps, 1 - eps))`; the gradient is zero where the clamp is active.
    LogClamped,
    /// Unclamped natural log; non-positive inputs are a domain error.
    Log,
    Relu,
    Sigmoid,
}

/// For every element of `big`, the flat index of the element of `small` it
/// reads, or `None` when `small` cannot be broadcast onto `big`.
pub(crate) fn broadcast_map(small: &[usize], big: &[usize]) -> Option<Vec<usize>> {
    if small.len() > big.len() {
        return None;
    }
    let offset = big.len() - small.len();
    for (d, &s) in small.iter().enumerate() {
        if s != 1 && s != big[offset + d] {
            return None;
        }
    }
    // Strides of `small` expressed on `big`'s axes (0 where broadcast).
    let mut strides = vec![0usize; big.len()];
    let mut acc = 1;
    for d in (0..small.len()).rev() {
        if small[d] != 1 {
            strides[offset + d] = acc;
        }
        acc *= small[d];
    }
    let n: usize = big.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; big.len()];
    let mut src = 0usize;
    for _ in 0..n {
        map.push(src);
        for d in (0..big.len()).rev() {
            idx[d] += 1;
            src += strides[d];
            if idx[d] < big[d] {
                break;
            }
            src -= strides[d] * big[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

fn reduce_to<T: Element>(g: &[T], map: &[usize], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for (&gi, &m) in g.iter().zip(map) {
        out[m] += gi;
    }
    out
}

#[inline]
fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Tensor<T> {
    pub fn binary(&self, op: BinaryOp, other: &Tensor<T>) -> Result<Tensor<T>> {
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        let f = |a: T, b: T| match op {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        };

        if self.shape() == other.shape() {
            let data: Vec<T> = self
                .data()
                .iter()
                .zip(other.data())
                .map(|(&a, &b)| f(a, b))
                .collect();
            let (a, b) = (self.clone(), other.clone());
            let (need_a, need_b) = (a.is_requires_grad(), b.is_requires_grad());
            return Ok(Tensor::from_op(
                data,
                self.shape(),
                name,
                vec![self.clone(), other.clone()],
                Box::new(move |g| {
                    let ga = need_a.then(|| match op {
                        BinaryOp::Add | BinaryOp::Sub => g.to_vec(),
                        BinaryOp::Mul => g.iter().zip(b.data()).map(|(&g, &b)| g * b).collect(),
                    });
                    let gb = need_b.then(|| match op {
                        BinaryOp::Add => g.to_vec(),
                        BinaryOp::Sub => g.iter().map(|&g| -g).collect(),
                        BinaryOp::Mul => g.iter().zip(a.data()).map(|(&g, &a)| g * a).collect(),
                    });
                    vec![ga, gb]
                }),
            ));
        }

        // One side is broadcast; `map[i]` indexes the smaller operand.
        let (map, self_is_big) = if let Some(m) = broadcast_map(other.shape(), self.shape()) {
            (m, true)
        } else if let Some(m) = broadcast_map(self.shape(), other.shape()) {
            (m, false)
        } else {
            return Err(Error::shape(name, self.shape(), other.shape()));
        };
        let out_shape = if self_is_big { self.shape() } else { other.shape() };
        let data: Vec<T> = (0..map.len())
            .map(|i| {
                let (ia, ib) = if self_is_big { (i, map[i]) } else { (map[i], i) };
                f(self.data()[ia], other.data()[ib])
            })
            .collect();

        let (a, b) = (self.clone(), other.clone());
        let (need_a, need_b) = (a.is_requires_grad(), b.is_requires_grad());
        Ok(Tensor::from_op(
            data,
            out_shape,
            name,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let idx = |i: usize| if self_is_big { (i, map[i]) } else { (map[i], i) };
                let ga_full: Option<Vec<T>> = need_a.then(|| match op {
                    BinaryOp::Add | BinaryOp::Sub => g.to_vec(),
                    BinaryOp::Mul => (0..g.len()).map(|i| g[i] * b.data()[idx(i).1]).collect(),
                });
                let gb_full: Option<Vec<T>> = need_b.then(|| match op {
                    BinaryOp::Add => g.to_vec(),
                    BinaryOp::Sub => g.iter().map(|&g| -g).collect(),
                    BinaryOp::Mul => (0..g.len()).map(|i| g[i] * a.data()[idx(i).0]).collect(),
                });
                if self_is_big {
                    vec![ga_full, gb_full.map(|gb| reduce_to(&gb, &map, b.numel()))]
                } else {
                    vec![ga_full.map(|ga| reduce_to(&ga, &map, a.numel())), gb_full]
                }
            }),
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn unary(&self, op: UnaryOp) -> Result<Tensor<T>> {
        let eps = T::from_f64(LOG_EPS);
        let hi = T::one() - eps;
        let x = self.data();
        let (name, data): (&'static str, Vec<T>) = match op {
            UnaryOp::Neg => ("neg", x.iter().map(|&v| -v).collect()),
            UnaryOp::Exp => ("exp", x.iter().map(|&v| v.exp()).collect()),
            UnaryOp::LogClamped => (
                "log_clamped",
                x.iter().map(|&v| v.max(eps).min(hi).ln()).collect(),
            ),
            UnaryOp::Log => {
                if x.iter().any(|&v| !(v > T::zero())) {
                    return Err(Error::Domain { op: "log" });
                }
                ("log", x.iter().map(|&v| v.ln()).collect())
            }
            UnaryOp::Relu => ("relu", x.iter().map(|&v| v.max(T::zero())).collect()),
            UnaryOp::Sigmoid => ("sigmoid", x.iter().map(|&v| sigmoid(v)).collect()),
        };

        let input = self.clone();
        let out = data.clone();
        Ok(Tensor::from_op(
            data,
            self.shape(),
            name,
            vec![self.clone()],
            Box::new(move |g| {
                let x = input.data();
                let gx: Vec<T> = match op {
                    UnaryOp::Neg => g.iter().map(|&g| -g).collect(),
                    UnaryOp::Exp => g.iter().zip(&out).map(|(&g, &y)| g * y).collect(),
                    UnaryOp::LogClamped => g
                        .iter()
                        .zip(x)
                        .map(|(&g, &v)| {
                            if v < eps || v > hi {
                                T::zero()
                            } else {
                                g / v
                            }
                        })
                        .collect(),
                    UnaryOp::Log => g.iter().zip(x).map(|(&g, &v)| g / v).collect(),
                    UnaryOp::Relu => g
                        .iter()
                        .zip(x)
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect(),
                    UnaryOp::Sigmoid => g
                        .iter()
                        .zip(&out)
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect(),
                };
                vec![Some(gx)]
            }),
        ))
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary(UnaryOp::Neg).expect("neg is total")
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(UnaryOp::Exp).expect("exp is total")
    }

    pub fn log_clamped(&self) -> Tensor<T> {
        self.unary(UnaryOp::LogClamped).expect("clamped log is total")
    }

    pub fn ln(&self) -> Result<Tensor<T>> {
        self.unary(UnaryOp::Log)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(UnaryOp::Relu).expect("relu is total")
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(UnaryOp::Sigmoid).expect("sigmoid is total")
    }

    /// `self * c` for a constant scalar `c`.
    pub fn scale(&self, c: T) -> Tensor<T> {
        Tensor::from_op(
            self.data().iter().map(|&v| v * c).collect(),
            self.shape(),
            "scale",
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.iter().map(|&g| g * c).collect())]),
        )
    }

    /// `self + c` for a constant scalar `c`.
    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        Tensor::from_op(
            self.data().iter().map(|&v| v + c).collect(),
            self.shape(),
            "add_scalar",
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Matrix product of `[m,k]` and `[k,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm_nn(m, k, n, self.data(), other.data(), &mut out);

        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            &[m, n],
            "matmul",
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                // dA = G·Bᵀ, dB = Aᵀ·G
                let ga = a.is_requires_grad().then(|| {
                    let mut ga = vec![T::zero(); m * k];
                    kernels::gemm_nt(m, n, k, g, b.data(), &mut ga);
                    ga
                });
                let gb = b.is_requires_grad().then(|| {
                    let mut gb = vec![T::zero(); k * n];
                    kernels::gemm_tn(k, m, n, a.data(), g, &mut gb);
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }
}
