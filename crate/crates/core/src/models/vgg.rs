use serde::{Deserialize, Serialize};

use super::{center, check_input, conv_names, ArchDescriptor, Network};
use crate::error::{Error, Result};
use crate::layers::{conv2d, linear, maxpool2d, Conv2dLayer, InitSpec, LinearLayer, Module};
use crate::metrics::NUM_CLASSES;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VggLiteConfig {
    /// `(channels, convs)` per block; every block ends in a 2×2 max-pool.
    pub blocks: Vec<(usize, usize)>,
    /// Width of the hidden linear layer.
    pub hidden: usize,
    /// `[H, W]` the head is sized for.
    pub input_size: [usize; 2],
}

impl Default for VggLiteConfig {
    fn default() -> Self {
        Self {
            blocks: vec![(16, 2), (32, 2), (64, 2)],
            hidden: 64,
            input_size: [128, 128],
        }
    }
}

impl VggLiteConfig {
    pub fn divisor(&self) -> usize {
        1 << self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.divisor();
        let [h, w] = self.input_size;
        if self.blocks.is_empty() || self.blocks.iter().any(|&(c, n)| c == 0 || n == 0) || self.hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "vgg-lite needs non-empty blocks with positive sizes and hidden >= 1, got {:?} / {}",
                self.blocks, self.hidden
            )));
        }
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::IndivisibleInput { height: h, width: w, divisor: d });
        }
        Ok(())
    }

    fn flat_features(&self) -> usize {
        let d = self.divisor();
        self.blocks.last().map_or(0, |b| b.0) * (self.input_size[0] / d) * (self.input_size[1] / d)
    }
}

/// Blocks of 3×3 conv + ReLU, each closed by a 2×2 max-pool, then
/// flatten → linear → ReLU → linear to four logits.
#[derive(Clone, Debug)]
pub struct VggLite<T: Element = f32> {
    config: VggLiteConfig,
    blocks: Vec<Vec<Conv2dLayer<T>>>,
    fc1: LinearLayer<T>,
    fc2: LinearLayer<T>,
}

impl<T: Element> VggLite<T> {
    pub fn new(config: VggLiteConfig, init: &InitSpec) -> Result<Self> {
        config.validate()?;
        let mut stream = 0;
        let mut cin = 3;
        let mut blocks = Vec::with_capacity(config.blocks.len());
        for &(ch, n) in &config.blocks {
            let mut convs = Vec::with_capacity(n);
            for _ in 0..n {
                convs.push(Conv2dLayer::same3x3(cin, ch, init, stream)?);
                stream += 1;
                cin = ch;
            }
            blocks.push(convs);
        }
        let fc1 = LinearLayer::new(config.flat_features(), config.hidden, init, stream)?;
        let fc2 = LinearLayer::new(config.hidden, NUM_CLASSES, init, stream + 1)?;
        Ok(Self { config, blocks, fc1, fc2 })
    }

    pub fn config(&self) -> &VggLiteConfig {
        &self.config
    }

    /// `[B,3,H,W]` → `[B,4]` logits.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = check_input("vgg-lite", x.shape())?;
        if [h, w] != self.config.input_size {
            return Err(Error::shape(
                "vgg-lite",
                &[h, w],
                &self.config.input_size,
            ));
        }
        let mut cur = center(x);
        for block in &self.blocks {
            for conv in block {
                cur = conv2d(&cur, conv)?.relu();
            }
            cur = maxpool2d(&cur, 2, 2)?;
        }
        let b = cur.shape()[0];
        let flat = cur.reshape(&[b, cur.numel() / b])?;
        linear(&linear(&flat, &self.fc1)?.relu(), &self.fc2)
    }
}

impl<T: Element> Module<T> for VggLite<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        VggLite::forward(self, x)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = Vec::new();
        for conv in self.blocks.iter().flatten() {
            v.extend([&conv.weights, &conv.bias]);
        }
        v.extend([&self.fc1.weights, &self.fc1.bias, &self.fc2.weights, &self.fc2.bias]);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = Vec::new();
        for conv in self.blocks.iter_mut().flatten() {
            v.extend([&mut conv.weights, &mut conv.bias]);
        }
        v.extend([
            &mut self.fc1.weights,
            &mut self.fc1.bias,
            &mut self.fc2.weights,
            &mut self.fc2.bias,
        ]);
        v
    }
}

impl<T: Element> Network<T> for VggLite<T> {
    fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor::VggLite(self.config.clone())
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            for j in 0..block.len() {
                names.extend(conv_names(&format!("block{i}.conv{}", j + 1)));
            }
        }
        names.extend(conv_names("fc1"));
        names.extend(conv_names("fc2"));
        names
    }
}
