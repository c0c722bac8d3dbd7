use serde::{Deserialize, Serialize};

use super::{center, check_input, conv_names, ArchDescriptor, Network};
use crate::error::{Error, Result};
use crate::layers::{conv2d, maxpool2d, upsample_nearest, Conv2dLayer, InitSpec, Module};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetLiteConfig {
    /// Encoder levels, each halving the resolution.
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UNetLiteConfig {
    fn default() -> Self {
        Self { depth: 3, base_channels: 16 }
    }
}

impl UNetLiteConfig {
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.depth > 8 {
            return Err(Error::InvalidParameter(format!(
                "unet-lite needs 1 <= depth <= 8 and base_channels >= 1, got {} / {}",
                self.depth, self.base_channels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct DoubleConv<T: Element> {
    a: Conv2dLayer<T>,
    b: Conv2dLayer<T>,
}

impl<T: Element> DoubleConv<T> {
    fn new(cin: usize, cout: usize, init: &InitSpec, stream: &mut u64) -> Result<Self> {
        let a = Conv2dLayer::same3x3(cin, cout, init, *stream)?;
        let b = Conv2dLayer::same3x3(cout, cout, init, *stream + 1)?;
        *stream += 2;
        Ok(Self { a, b })
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(&conv2d(x, &self.a)?.relu(), &self.b).map(|t| t.relu())
    }
}

/// Encoder of 3×3 conv pairs with 2×2 max-pooling, a bottleneck, and a
/// decoder that upsamples (nearest), concatenates the matching encoder
/// output and applies another conv pair. A 1×1 conv and a sigmoid give one
/// probability per pixel.
#[derive(Clone, Debug)]
pub struct UNetLite<T: Element = f32> {
    config: UNetLiteConfig,
    encoder: Vec<DoubleConv<T>>,
    bottleneck: DoubleConv<T>,
    /// `decoder[i]` pairs with `encoder[i]`.
    decoder: Vec<DoubleConv<T>>,
    head: Conv2dLayer<T>,
}

impl<T: Element> UNetLite<T> {
    pub fn new(config: UNetLiteConfig, init: &InitSpec) -> Result<Self> {
        config.validate()?;
        let mut stream = 0;
        let mut encoder = Vec::with_capacity(config.depth);
        let mut cin = 3;
        for level in 0..config.depth {
            encoder.push(DoubleConv::new(cin, config.channels(level), init, &mut stream)?);
            cin = config.channels(level);
        }
        let bottleneck = DoubleConv::new(cin, config.channels(config.depth), init, &mut stream)?;
        let mut decoder = Vec::with_capacity(config.depth);
        for level in 0..config.depth {
            let c = config.channels(level);
            // upsampled channels (2c) plus skip (c)
            decoder.push(DoubleConv::new(3 * c, c, init, &mut stream)?);
        }
        let head = Conv2dLayer::new(config.base_channels, 1, 1, 1, 0, init, stream)?;
        Ok(Self { config, encoder, bottleneck, decoder, head })
    }

    pub fn config(&self) -> &UNetLiteConfig {
        &self.config
    }

    /// `[B,3,H,W]` pixel values in `[0,1]` → `[B,1,H,W]` probabilities.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = check_input("unet-lite", x.shape())?;
        let d = self.config.divisor();
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            return Err(Error::IndivisibleInput { height: h, width: w, divisor: d });
        }
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut cur = center(x);
        for enc in &self.encoder {
            let y = enc.forward(&cur)?;
            cur = maxpool2d(&y, 2, 2)?;
            skips.push(y);
        }
        cur = self.bottleneck.forward(&cur)?;
        for level in (0..self.config.depth).rev() {
            let up = upsample_nearest(&cur, 2)?;
            let joined = Tensor::concat(&[up, skips[level].clone()], 1)?;
            cur = self.decoder[level].forward(&joined)?;
        }
        Ok(conv2d(&cur, &self.head)?.sigmoid())
    }
}

impl<T: Element> Module<T> for UNetLite<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        UNetLite::forward(self, x)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for dc in self.encoder.iter().chain([&self.bottleneck]).chain(&self.decoder) {
            v.extend([&dc.a.weights, &dc.a.bias, &dc.b.weights, &dc.b.bias]);
        }
        v.extend([&self.head.weights, &self.head.bias]);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for dc in self
            .encoder
            .iter_mut()
            .chain([&mut self.bottleneck])
            .chain(self.decoder.iter_mut())
        {
            v.extend([&mut dc.a.weights, &mut dc.a.bias, &mut dc.b.weights, &mut dc.b.bias]);
        }
        v.extend([&mut self.head.weights, &mut self.head.bias]);
        v
    }
}

impl<T: Element> Network<T> for UNetLite<T> {
    fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor::UNetLite(self.config)
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut block = |prefix: String| {
            names.extend(conv_names(&format!("{prefix}.conv1")));
            names.extend(conv_names(&format!("{prefix}.conv2")));
        };
        for i in 0..self.config.depth {
            block(format!("enc{i}"));
        }
        block("bottleneck".into());
        for i in 0..self.config.depth {
            block(format!("dec{i}"));
        }
        names.extend(conv_names("head"));
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check_inputs, Prng, Selection};

    fn input<T: Element>(b: usize, h: usize, w: usize, seed: u64) -> Tensor<T> {
        let mut rng = Prng::new(seed);
        let data: Vec<f64> = (0..b * 3 * h * w).map(|_| rng.uniform()).collect();
        Tensor::from_f64_slice(&data, &[b, 3, h, w]).unwrap()
    }

    #[test]
    fn hand_parameter_count() {
        // depth 1, base 1:
        //   enc0:       3→1 (27+1) + 1→1 (9+1)   = 38
        //   bottleneck: 1→2 (18+2) + 2→2 (36+2)  = 58
        //   dec0:       3→1 (27+1) + 1→1 (9+1)   = 38
        //   head:       1→1 1×1 (1+1)            = 2
        let m = UNetLite::<f32>::new(UNetLiteConfig { depth: 1, base_channels: 1 }, &InitSpec::he(0)).unwrap();
        assert_eq!(m.param_count(), 38 + 58 + 38 + 2);
        assert_eq!(m.param_names().len(), m.params().len());
    }

    #[test]
    fn output_shape_and_range() {
        let m = UNetLite::<f32>::new(UNetLiteConfig { depth: 2, base_channels: 4 }, &InitSpec::he(1)).unwrap();
        let y = m.forward(&input(2, 16, 12, 3)).unwrap();
        assert_eq!(y.shape(), &[2, 1, 16, 12]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn default_config_keeps_resolution() {
        let m = UNetLite::<f32>::new(UNetLiteConfig { depth: 3, base_channels: 2 }, &InitSpec::he(1)).unwrap();
        assert_eq!(m.forward(&input(1, 64, 64, 1)).unwrap().shape(), &[1, 1, 64, 64]);
    }

    #[test]
    fn errors() {
        let m = UNetLite::<f32>::new(UNetLiteConfig { depth: 2, base_channels: 2 }, &InitSpec::he(1)).unwrap();
        assert!(matches!(
            m.forward(&input(1, 10, 8, 0)),
            Err(Error::IndivisibleInput { divisor: 4, .. })
        ));
        let gray = Tensor::<f32>::zeros(&[1, 1, 8, 8]).unwrap();
        assert!(matches!(m.forward(&gray), Err(Error::ChannelMismatch { .. })));
        assert!(UNetLite::<f32>::new(UNetLiteConfig { depth: 0, base_channels: 2 }, &InitSpec::he(1)).is_err());
    }

    #[test]
    fn seeded_and_batch_independent() {
        let cfg = UNetLiteConfig { depth: 1, base_channels: 2 };
        let a = UNetLite::<f32>::new(cfg, &InitSpec::he(9)).unwrap();
        let b = UNetLite::<f32>::new(cfg, &InitSpec::he(9)).unwrap();
        let x = input::<f32>(1, 8, 8, 4);
        assert_eq!(a.forward(&x).unwrap().data(), b.forward(&x).unwrap().data());
        let twice = Tensor::concat(&[x.clone(), x.clone()], 0).unwrap();
        let y = a.forward(&twice).unwrap();
        assert_eq!(&y.data()[..64], &y.data()[64..]);
    }

    #[test]
    fn gradient_spot_check() {
        let m = UNetLite::<f64>::new(UNetLiteConfig { depth: 1, base_channels: 2 }, &InitSpec::he(5)).unwrap();
        let x = input::<f64>(1, 4, 4, 6);
        // zero biases put dead-input pixels exactly on the ReLU kink; move
        // them to a generic point first
        let mut rng = Prng::new(7);
        let params: Vec<Tensor<f64>> = m
            .params()
            .into_iter()
            .map(|p| match p.rank() {
                1 => Tensor::new((0..p.numel()).map(|_| rng.uniform_range(-0.1, 0.1)).collect(), p.shape()).unwrap(),
                _ => p.clone(),
            })
            .collect();
        let n = params.len();
        let report = grad_check_inputs(
            |ps: &[Tensor<f64>]| {
                let mut net = m.clone();
                for (slot, p) in net.params_mut().into_iter().zip(ps) {
                    *slot = p.clone();
                }
                net.forward(&x)?.sum()
            },
            &params,
            1e-6,
            Selection::Random { count: 12, seed: 3 },
        )
        .unwrap();
        assert_eq!(report.per_input.len(), n);
        assert!(report.checked >= 10);
        assert!(report.max_rel_error < 1e-3, "{:?}", report.per_input);
    }
}
