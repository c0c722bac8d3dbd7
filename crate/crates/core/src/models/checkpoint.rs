//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! ```text
//! magic         8 bytes   "INSLNET\0"
//! version       u32
//! descriptor    u32 length + UTF-8 text (key=value lines)
//! param count   u32
//!   name        u32 length + UTF-8
//!   rank        u32
//!   dims        rank × u32
//!   data        Π dims × f32
//! has optimizer u8 (0 or 1)
//!   lr          f64
//!   step        u64
//!   buffers     u32 count, each: u32 length + length × f32
//! ```

use std::fs;
use std::path::Path;

use super::{ArchDescriptor, Network, UNetLite, VggLite};
use crate::error::{Error, Result};
use crate::layers::InitSpec;
use crate::tensor::Element;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INSLNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Optimizer state needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub step: u64,
    /// Momentum buffer per parameter, in parameter order.
    pub velocities: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: ArchDescriptor,
    pub params: Vec<ParamRecord>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_model<T: Element, N: Network<T>>(model: &N, optimizer: Option<OptimizerState>) -> Self {
        Self {
            descriptor: model.descriptor(),
            params: model.export_params(),
            optimizer,
        }
    }

    /// Loads the parameters into `model` after checking the architecture.
    pub fn restore<T: Element, N: Network<T>>(&self, model: &mut N) -> Result<()> {
        let expected = model.descriptor();
        if expected != self.descriptor {
            return Err(Error::ArchitectureMismatch {
                expected: expected.to_string(),
                found: self.descriptor.to_string(),
            });
        }
        model.import_params(&self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.descriptor.to_text());
        put_u32(&mut out, self.params.len());
        for p in &self.params {
            put_str(&mut out, &p.name);
            put_u32(&mut out, p.shape.len());
            p.shape.iter().for_each(|&d| put_u32(&mut out, d));
            p.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        match &self.optimizer {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                out.extend_from_slice(&o.lr.to_le_bytes());
                out.extend_from_slice(&o.step.to_le_bytes());
                put_u32(&mut out, o.velocities.len());
                for v in &o.velocities {
                    put_u32(&mut out, v.len());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(r.corrupt_at(0, "bad magic bytes"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let desc_at = r.pos;
        let text = r.string("descriptor")?;
        let descriptor = ArchDescriptor::from_text(&text)
            .map_err(|e| r.corrupt_at(desc_at, &e.to_string()))?;
        let count = r.u32("parameter count")? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string("parameter name")?;
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(r.corrupt_at(r.pos - 4, &format!("implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32("dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r.f32s(n, "parameter data")?;
            params.push(ParamRecord { name, shape, data });
        }
        let optimizer = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let lr = f64::from_le_bytes(r.take(8, "lr")?.try_into().unwrap());
                let step = u64::from_le_bytes(r.take(8, "step")?.try_into().unwrap());
                let nbuf = r.u32("buffer count")? as usize;
                let mut velocities = Vec::with_capacity(nbuf.min(1024));
                for _ in 0..nbuf {
                    let len = r.u32("buffer length")? as usize;
                    velocities.push(r.f32s(len, "momentum buffer")?);
                }
                Some(OptimizerState { lr, step, velocities })
            }
            f => return Err(r.corrupt_at(r.pos - 1, &format!("optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(r.corrupt_at(r.pos, "trailing bytes"));
        }
        Ok(Self { descriptor, params, optimizer })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt_at(&self, offset: usize, reason: &str) -> Error {
        Error::CorruptCheckpoint { offset: offset as u64, reason: reason.to_string() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt_at(
                self.bytes.len(),
                &format!("truncated while reading {what} ({n} bytes needed at offset {})", self.pos),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt_at(at, &format!("{what} is not UTF-8")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).unwrap_or(usize::MAX), what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Writes `model` (and optionally optimizer state) to `path`.
pub fn save_checkpoint<T: Element, N: Network<T>>(
    model: &N,
    optimizer: Option<OptimizerState>,
    path: &Path,
) -> Result<()> {
    write_checkpoint(&Checkpoint::from_model(model, optimizer), path)
}

/// Reads `path` into `model`, returning any stored optimizer state.
pub fn load_checkpoint<T: Element, N: Network<T>>(model: &mut N, path: &Path) -> Result<Option<OptimizerState>> {
    let ckpt = read_checkpoint(path)?;
    ckpt.restore(model)?;
    Ok(ckpt.optimizer)
}

/// Builds a segmentation network from a checkpoint file.
pub fn load_unet(path: &Path) -> Result<UNetLite> {
    let ckpt = read_checkpoint(path)?;
    match &ckpt.descriptor {
        ArchDescriptor::UNetLite(c) => {
            let mut m = UNetLite::new(*c, &InitSpec::he(0))?;
            ckpt.restore(&mut m)?;
            Ok(m)
        }
        other => Err(Error::ArchitectureMismatch { expected: "arch=unet-lite".into(), found: other.to_string() }),
    }
}

/// Builds a classification network from a checkpoint file.
pub fn load_vgg(path: &Path) -> Result<VggLite> {
    let ckpt = read_checkpoint(path)?;
    match &ckpt.descriptor {
        ArchDescriptor::VggLite(c) => {
            let mut m = VggLite::new(c.clone(), &InitSpec::he(0))?;
            ckpt.restore(&mut m)?;
            Ok(m)
        }
        other => Err(Error::ArchitectureMismatch { expected: "arch=vgg-lite".into(), found: other.to_string() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitSpec;
    use crate::models::{UNetLite, UNetLiteConfig, VggLite, VggLiteConfig};
    use crate::tensor::{Prng, Tensor};

    fn unet(seed: u64) -> UNetLite {
        UNetLite::new(UNetLiteConfig { depth: 1, base_channels: 2 }, &InitSpec::he(seed)).unwrap()
    }

    fn state() -> OptimizerState {
        OptimizerState { lr: 0.008, step: 17, velocities: vec![vec![0.5, -0.25], vec![1e-3]] }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let a = unet(1);
        save_checkpoint(&a, Some(state()), &path).unwrap();
        let mut b = unet(2);
        let opt = load_checkpoint(&mut b, &path).unwrap();
        assert_eq!(opt, Some(state()));
        let mut rng = Prng::new(3);
        let x = Tensor::<f32>::from_f64_slice(&(0..3 * 64).map(|_| rng.uniform()).collect::<Vec<_>>(), &[1, 3, 8, 8]).unwrap();
        let (ya, yb) = (a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert!(ya.data().iter().zip(yb.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn header_layout() {
        let bytes = Checkpoint::from_model(&unet(0), None).to_bytes();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), CHECKPOINT_VERSION);
        assert_eq!(*bytes.last().unwrap(), 0);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = Checkpoint::from_model(&unet(0), Some(state())).to_bytes();
        for cut in [4, 20, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::CorruptCheckpoint { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(7);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(Error::CorruptCheckpoint { offset, .. }) if offset as usize == bytes.len()
        ));
    }

    #[test]
    fn version_and_architecture_checks() {
        let mut bytes = Checkpoint::from_model(&unet(0), None).to_bytes();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::VersionMismatch { found: 9, .. })));

        let ckpt = Checkpoint::from_model(&unet(0), None);
        let mut vgg: VggLite = VggLite::new(
            VggLiteConfig { blocks: vec![(2, 1)], hidden: 3, input_size: [4, 4] },
            &InitSpec::he(0),
        )
        .unwrap();
        assert!(matches!(ckpt.restore(&mut vgg), Err(Error::ArchitectureMismatch { .. })));
        let mut other_depth = UNetLite::<f32>::new(UNetLiteConfig { depth: 2, base_channels: 2 }, &InitSpec::he(0)).unwrap();
        assert!(matches!(ckpt.restore(&mut other_depth), Err(Error::ArchitectureMismatch { .. })));
    }
}
