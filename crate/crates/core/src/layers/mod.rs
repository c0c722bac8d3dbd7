//! Network building blocks: convolution, pooling, upsampling, linear layers,
//! softmax and parameter initialisation.

mod activation;
mod conv;
mod pool;

pub use activation::{log_softmax, softmax};
pub use conv::{conv2d, conv2d_direct, Conv2dLayer};
pub use pool::{avgpool2d, maxpool2d, upsample_nearest};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{kernels, Element, Prng, Tensor};

/// Anything with trainable parameters and a forward pass.
pub trait Module<T: Element> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme", content = "value")]
pub enum InitScheme {
    HeNormal,
    XavierUniform,
    Zeros,
    Constant(f64),
}

/// Initialisation scheme plus seed. Each parameter tensor draws from its own
/// stream of the seed, so the same (spec, stream) always yields the same
/// values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(scheme: InitScheme, seed: u64) -> Self {
        Self { scheme, seed }
    }

    pub fn he(seed: u64) -> Self {
        Self::new(InitScheme::HeNormal, seed)
    }

    /// Weight tensor of `shape` = `[out, in, ...]`. Fan-in is `in·Πrest`,
    /// fan-out `out·Πrest`.
    pub fn weights<T: Element>(&self, shape: &[usize], stream: u64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let receptive: usize = shape.iter().skip(2).product();
        let fan_in = shape.get(1).copied().unwrap_or(1) * receptive;
        let fan_out = shape[0] * receptive;
        let mut rng = Prng::with_stream(self.seed, stream);
        let data: Vec<T> = match self.scheme {
            InitScheme::HeNormal => {
                let std = (2.0 / fan_in as f64).sqrt();
                (0..n).map(|_| T::from_f64(rng.normal() * std)).collect()
            }
            InitScheme::XavierUniform => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| T::from_f64(rng.uniform_range(-a, a))).collect()
            }
            InitScheme::Zeros => vec![T::zero(); n],
            InitScheme::Constant(c) => vec![T::from_f64(c); n],
        };
        Tensor::param(data, shape).expect("positive shape")
    }

    pub fn bias<T: Element>(&self, len: usize) -> Tensor<T> {
        let v = match self.scheme {
            InitScheme::Constant(c) => c,
            _ => 0.0,
        };
        Tensor::param(vec![T::from_f64(v); len], &[len]).expect("positive length")
    }
}

/// Fully connected layer `y = x·Wᵀ + b` on `[B, in]` inputs.
#[derive(Clone, Debug)]
pub struct LinearLayer<T: Element = f32> {
    /// `[out, in]`
    pub weights: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Element> LinearLayer<T> {
    pub fn new(inputs: usize, outputs: usize, init: &InitSpec, stream: u64) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidParameter(format!(
                "linear: in={inputs} out={outputs}"
            )));
        }
        Ok(Self {
            weights: init.weights(&[outputs, inputs], stream),
            bias: init.bias(outputs),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }
}

impl<T: Element> Module<T> for LinearLayer<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear(x, self)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weights, &mut self.bias]
    }
}

pub fn linear<T: Element>(x: &Tensor<T>, layer: &LinearLayer<T>) -> Result<Tensor<T>> {
    let (n_in, n_out) = (layer.inputs(), layer.outputs());
    if x.rank() != 2 || x.shape()[1] != n_in {
        return Err(Error::shape("linear", x.shape(), layer.weights.shape()));
    }
    let batch = x.shape()[0];
    let mut out = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        out.extend_from_slice(layer.bias.data());
    }
    kernels::gemm_nt(batch, n_in, n_out, x.data(), layer.weights.data(), &mut out);

    let (xt, wt) = (x.clone(), layer.weights.clone());
    let need = (
        x.is_requires_grad(),
        layer.weights.is_requires_grad(),
        layer.bias.is_requires_grad(),
    );
    Ok(Tensor::from_op(
        out,
        &[batch, n_out],
        "linear",
        vec![x.clone(), layer.weights.clone(), layer.bias.clone()],
        Box::new(move |g| {
            let dx = need.0.then(|| {
                let mut dx = vec![T::zero(); batch * n_in];
                kernels::gemm_nn(batch, n_out, n_in, g, wt.data(), &mut dx);
                dx
            });
            let dw = need.1.then(|| {
                let mut dw = vec![T::zero(); n_out * n_in];
                kernels::gemm_tn(n_out, batch, n_in, g, xt.data(), &mut dw);
                dw
            });
            let db = need.2.then(|| {
                let mut db = vec![T::zero(); n_out];
                for row in g.chunks(n_out) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                }
                db
            });
            vec![dx, dw, db]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_scheme() {
        let w: Tensor<f32> = InitSpec::new(InitScheme::Zeros, 1).weights(&[4, 3, 3, 3], 0);
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_bit_identical() {
        let spec = InitSpec::he(77);
        let a: Tensor<f32> = spec.weights(&[8, 4, 3, 3], 2);
        let b: Tensor<f32> = spec.weights(&[8, 4, 3, 3], 2);
        assert_eq!(a.data(), b.data());
        let c: Tensor<f32> = spec.weights(&[8, 4, 3, 3], 3);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn he_normal_empirical_std() {
        // fan_in = 10·5·5 = 250, 4·10·5·5·... → draw 100_000 values
        let spec = InitSpec::he(2024);
        let w: Tensor<f64> = spec.weights(&[400, 10, 5, 5], 0);
        assert_eq!(w.numel(), 100_000);
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let want = (2.0f64 / 250.0).sqrt();
        assert!((var.sqrt() - want).abs() / want < 0.02, "{} vs {want}", var.sqrt());
    }

    #[test]
    fn xavier_bounds() {
        let w: Tensor<f64> = InitSpec::new(InitScheme::XavierUniform, 3).weights(&[20, 30], 0);
        let a = (6.0f64 / 50.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn linear_output_length() {
        let l = LinearLayer::<f64>::new(6, 4, &InitSpec::he(1), 0).unwrap();
        let x = Tensor::<f64>::ones(&[3, 6]).unwrap();
        assert_eq!(linear(&x, &l).unwrap().shape(), &[3, 4]);
        assert!(linear(&Tensor::<f64>::ones(&[3, 5]).unwrap(), &l).is_err());
    }
}
