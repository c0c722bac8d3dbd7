//! The two stage networks and their checkpoint format.

mod checkpoint;
mod unet;
mod vgg;

use std::fmt;

use crate::error::{Error, Result};
use crate::layers::Module;
use crate::tensor::{Element, Tensor};

pub use checkpoint::{
    load_checkpoint, load_unet, load_vgg, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, OptimizerState,
    ParamRecord, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use unet::{UNetLite, UNetLiteConfig};
pub use vgg::{VggLite, VggLiteConfig};

/// Architecture plus its configuration; written into every checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum ArchDescriptor {
    UNetLite(UNetLiteConfig),
    VggLite(VggLiteConfig),
}

impl ArchDescriptor {
    pub fn name(&self) -> &'static str {
        match self {
            ArchDescriptor::UNetLite(_) => "unet-lite",
            ArchDescriptor::VggLite(_) => "vgg-lite",
        }
    }

    /// `key=value` lines, `arch` first.
    pub fn to_text(&self) -> String {
        let mut s = format!("arch={}\n", self.name());
        match self {
            ArchDescriptor::UNetLite(c) => {
                s += &format!("depth={}\nbase_channels={}\n", c.depth, c.base_channels);
            }
            ArchDescriptor::VggLite(c) => {
                let blocks: Vec<String> = c.blocks.iter().map(|(ch, n)| format!("{ch}x{n}")).collect();
                s += &format!(
                    "blocks={}\nhidden={}\ninput_size={}x{}\n",
                    blocks.join(","),
                    c.hidden,
                    c.input_size[0],
                    c.input_size[1]
                );
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(format!("architecture descriptor: {m}"));
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad line `{line}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing `{k}`")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| bad(format!("`{k}` is not an integer")))
        };
        let pair = |s: &str, sep: char| -> Result<(usize, usize)> {
            let (a, b) = s.split_once(sep).ok_or_else(|| bad(format!("bad pair `{s}`")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(bad(format!("bad pair `{s}`"))),
            }
        };
        match get("arch")? {
            "unet-lite" => Ok(ArchDescriptor::UNetLite(UNetLiteConfig {
                depth: num("depth")?,
                base_channels: num("base_channels")?,
            })),
            "vgg-lite" => {
                let blocks = get("blocks")?
                    .split(',')
                    .map(|b| pair(b, 'x'))
                    .collect::<Result<Vec<_>>>()?;
                let (h, w) = pair(get("input_size")?, 'x')?;
                Ok(ArchDescriptor::VggLite(VggLiteConfig {
                    blocks,
                    hidden: num("hidden")?,
                    input_size: [h, w],
                }))
            }
            other => Err(bad(format!("unknown arch `{other}`"))),
        }
    }
}

impl fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text().trim_end().replace('\n', ", "))
    }
}

/// A model whose parameters carry stable names.
pub trait Network<T: Element>: Module<T> {
    fn descriptor(&self) -> ArchDescriptor;

    fn param_names(&self) -> Vec<String>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Parameters as a checkpoint table.
    fn export_params(&self) -> Vec<ParamRecord> {
        self.param_names()
            .into_iter()
            .zip(self.params())
            .map(|(name, p)| ParamRecord {
                name,
                shape: p.shape().to_vec(),
                data: p.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect()
    }

    /// Replaces every parameter by the record of the same name.
    fn import_params(&mut self, records: &[ParamRecord]) -> Result<()> {
        let names = self.param_names();
        if records.len() != names.len() {
            return Err(Error::InvalidParameter(format!(
                "checkpoint has {} parameter tensors, model has {}",
                records.len(),
                names.len()
            )));
        }
        for (name, slot) in names.iter().zip(self.params_mut()) {
            let rec = records
                .iter()
                .find(|r| &r.name == name)
                .ok_or_else(|| Error::InvalidParameter(format!("checkpoint lacks parameter `{name}`")))?;
            if rec.shape != slot.shape() {
                return Err(Error::shape("import_params", slot.shape(), &rec.shape));
            }
            *slot = Tensor::param(rec.data.iter().map(|&v| T::from_f64(v as f64)).collect(), &rec.shape)?;
        }
        Ok(())
    }
}

fn conv_names(prefix: &str) -> [String; 2] {
    [format!("{prefix}.weight"), format!("{prefix}.bias")]
}

/// Maps `[0,1]` pixel values to `[-1,1]`.
fn center<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.scale(T::from_f64(2.0)).add_scalar(T::from_f64(-1.0))
}

fn check_input(op: &'static str, x: &[usize]) -> Result<(usize, usize)> {
    match *x {
        [_, 3, h, w] => Ok((h, w)),
        [_, c, _, _] => Err(Error::ChannelMismatch { input: c, expected: 3 }),
        _ => Err(Error::InvalidShape(format!("{op} expects [B,3,H,W], got {x:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_text_round_trip() {
        for d in [
            ArchDescriptor::UNetLite(UNetLiteConfig::default()),
            ArchDescriptor::VggLite(VggLiteConfig::default()),
        ] {
            assert_eq!(ArchDescriptor::from_text(&d.to_text()).unwrap(), d);
        }
        assert!(ArchDescriptor::from_text("arch=resnet\n").is_err());
    }
}
