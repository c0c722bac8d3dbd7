//! Datasets on disk: a CSV manifest, PNG images and masks, and a synthetic
//! scene generator.

mod png;
mod synth;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NUM_CLASSES;
use crate::raster::{Mask, RgbImage};

pub use png::{read_image, read_mask, read_mask_counting, write_image, write_mask};
pub use synth::{
    generate_synthetic_dataset, render_scene, Background, DefectKind, Scene, SplitCounts, SyntheticSceneSpec,
};

pub const MANIFEST_HEADER: [&str; 4] = ["image", "mask", "label", "split"];

/// Label names by class index.
pub const LABEL_NAMES: [&str; NUM_CLASSES] = ["healthy", "broken", "burned/corroded", "missing cap"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(format!("split must be `train` or `val`, got `{s}`")),
        }
    }
}

/// One manifest row. Paths are resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: Option<usize>,
    pub split: Split,
}

/// A sample with its files decoded.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub image: RgbImage,
    pub mask: Option<Mask>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn load(&self) -> Result<LoadedSample> {
        Ok(LoadedSample {
            image: read_image(&self.image)?,
            mask: self.mask.as_deref().map(read_mask).transpose()?,
            label: self.label,
        })
    }
}

pub fn load_samples(samples: &[Sample]) -> Result<Vec<LoadedSample>> {
    samples.iter().map(Sample::load).collect()
}

/// Samples of one split, in manifest order.
pub fn split_of(samples: &[Sample], split: Split) -> Vec<Sample> {
    samples.iter().filter(|s| s.split == split).cloned().collect()
}

/// Reads a manifest. Every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let malformed = |line: u64, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(malformed(1, format!("header must be `{}`", MANIFEST_HEADER.join(","))));
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let resolve = |rel: &str| -> Result<PathBuf> {
            let p = base.join(rel);
            if !p.is_file() {
                return Err(Error::DanglingPath {
                    path: path.to_path_buf(),
                    line,
                    target: p,
                });
            }
            Ok(p)
        };

        if field(0).is_empty() {
            return Err(malformed(line, "empty image path".into()));
        }
        let label = match field(2) {
            "" => None,
            s => match s.parse::<usize>() {
                Ok(c) if c < NUM_CLASSES => Some(c),
                _ => {
                    return Err(malformed(
                        line,
                        format!("label must be an integer in 0..{NUM_CLASSES}, got `{s}`"),
                    ))
                }
            },
        };
        let split = field(3).parse::<Split>().map_err(|e| malformed(line, e))?;
        let mask = match field(1) {
            "" => None,
            m => Some(resolve(m)?),
        };
        if mask.is_none() && label.is_none() {
            return Err(malformed(line, "row has neither a mask nor a label".into()));
        }
        samples.push(Sample {
            image: resolve(field(0))?,
            mask,
            label,
            split,
        });
    }
    Ok(samples)
}

/// Writes a manifest; paths under the manifest's directory are stored
/// relative to it.
pub fn write_manifest(path: &Path, samples: &[Sample]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    if !base.as_os_str().is_empty() {
        fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
    }
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(MANIFEST_HEADER)?;
    for s in samples {
        w.write_record([
            rel(&s.image),
            s.mask.as_deref().map(rel).unwrap_or_default(),
            s.label.map(|l| l.to_string()).unwrap_or_default(),
            s.split.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
