//! Dense row-major tensors with tape-free reverse-mode differentiation.
//!
//! Every tensor produced by a differentiable operation keeps handles to its
//! inputs together with a backward rule, so the graph needed for
//! [`Tensor::backward`] is simply the set of nodes reachable from the loss.
//! Data buffers are immutable once constructed; only gradient buffers of leaf
//! tensors change, and they accumulate until [`Tensor::zero_grad`] is called.
//!
//! Tensors are generic over [`Element`] (`f32` for training, `f64` for
//! gradient checking). Handles are reference counted and `Send + Sync`, so
//! read-only tensors can be shared between threads.

mod autograd;
mod gradcheck;
pub mod kernels;
mod ops;
mod prng;
mod reduce;

use std::fmt;
use std::sync::{Arc, Mutex};

pub use autograd::{ComputationRecord, RecordEntry};
pub use gradcheck::{grad_check, grad_check_inputs, GradCheckReport, Selection};
pub use ops::{BinaryOp, UnaryOp, LOG_EPS};
pub use prng::{mix_seed, Prng};
pub use reduce::ReduceOp;

use crate::error::{Error, Result};

/// Floating point element type of a [`Tensor`].
pub trait Element:
    num_traits::Float
    + Copy
    + Send
    + Sync
    + Default
    + fmt::Debug
    + fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Backward rule: maps the gradient of the output to one optional gradient
/// per parent, each with the parent's element count.
pub type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub(crate) struct GradFn<T: Element> {
    pub(crate) name: &'static str,
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

pub(crate) struct Node<T: Element> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    grad_fn: Option<GradFn<T>>,
}

/// Reference-counted handle to an n-dimensional array.
pub struct Tensor<T: Element = f32> {
    node: Arc<Node<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self {
            node: Arc::clone(&self.node),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.node.shape);
        if self.numel() <= 16 {
            s.field("data", &self.node.data);
        }
        s.field("requires_grad", &self.node.requires_grad);
        if let Some(g) = &self.node.grad_fn {
            s.field("op", &g.name);
        }
        s.finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn from_node(node: Node<T>) -> Self {
        Self {
            node: Arc::new(node),
        }
    }

    /// Creates a constant tensor. Fails when `data.len()` differs from the
    /// product of `shape` or when a dimension is zero.
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "dimension sizes must be positive, got {shape:?}"
            )));
        }
        if numel_of(shape) != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {} elements, got {}",
                numel_of(shape),
                data.len()
            )));
        }
        Ok(Self::from_node(Node {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: Mutex::new(None),
            grad_fn: None,
        }))
    }

    /// Creates a leaf tensor that records gradients.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Self::new(data, shape)?.requires_grad(true))
    }

    pub fn from_f64_slice(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&v| T::from_f64(v)).collect(), shape)
    }

    pub fn scalar(v: T) -> Self {
        Self::new(vec![v], &[]).expect("scalar shape is valid")
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Result<Self> {
        Self::new(vec![v; numel_of(shape)], shape)
    }

    /// Returns a leaf with the same data and the given gradient flag. The
    /// result never shares a gradient buffer or history with `self`.
    pub fn requires_grad(&self, flag: bool) -> Self {
        Self::from_node(Node {
            shape: self.node.shape.clone(),
            data: self.node.data.clone(),
            requires_grad: flag,
            grad: Mutex::new(None),
            grad_fn: None,
        })
    }

    /// Constant copy of this tensor, cut off from the graph.
    pub fn detach(&self) -> Self {
        self.requires_grad(false)
    }

    /// Builds the output of a differentiable operation. The backward rule is
    /// only kept when at least one parent requires a gradient.
    pub fn from_op(
        data: Vec<T>,
        shape: &[usize],
        name: &'static str,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(numel_of(shape), data.len(), "{name}: bad output size");
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        let grad_fn = requires_grad.then(|| GradFn {
            name,
            parents,
            backward,
        });
        Self::from_node(Node {
            shape: shape.to_vec(),
            data,
            requires_grad,
            grad: Mutex::new(None),
            grad_fn,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::InvalidShape(format!(
                "item() needs a single element, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.node.data[0])
    }

    pub fn is_requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.node.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.node) as usize
    }

    pub(crate) fn grad_fn(&self) -> Option<&GradFn<T>> {
        self.node.grad_fn.as_ref()
    }

    /// Same data with a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel_of(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Self::from_op(
            self.node.data.clone(),
            shape,
            "reshape",
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        ))
    }

    /// Converts the element type. The result is a constant.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor::new(
            self.node.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            self.shape(),
        )
        .expect("shape unchanged")
    }

    /// Concatenates along `axis`. All other dimensions must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput("concat"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::InvalidAxis { axis, rank });
        }
        for p in &parts[1..] {
            let same = p.rank() == rank
                && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
            if !same {
                return Err(Error::shape("concat", first.shape(), p.shape()));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;

        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &s) in parts.iter().zip(&sizes) {
                data.extend_from_slice(&p.data()[o * s * inner..(o + 1) * s * inner]);
            }
        }
        Ok(Self::from_op(
            data,
            &shape,
            "concat",
            parts.to_vec(),
            Box::new(move |g| {
                let mut grads: Vec<Vec<T>> =
                    sizes.iter().map(|&s| Vec::with_capacity(outer * s * inner)).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (gp, &s) in grads.iter_mut().zip(&sizes) {
                        gp.extend_from_slice(&g[offset..offset + s * inner]);
                        offset += s * inner;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }
}
