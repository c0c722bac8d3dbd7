//! Probabilistic augmentation of an image and, for geometric transforms, its
//! mask.
//!
//! An [`AugmentationSpec`] is an ordered list of steps. Each step fires with
//! its own probability; parameters are drawn only for steps that fire. Every
//! draw comes from one [`Prng`] seeded per sample, so a `(seed, index)` pair
//! fully determines the output.

mod dihedral;
mod photometric;
mod warp;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage};
use crate::tensor::{mix_seed, Prng};

pub use dihedral::{dihedral_image, dihedral_mask, Dihedral};
pub use photometric::{brightness, clahe, contrast, gamma};
pub use warp::{elastic_field, grid_field, optical_field, warp_image, warp_mask, WarpField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    VerticalFlip,
    HorizontalFlip,
    ElasticTransform,
    GridDistortion,
    OpticalDistortion,
    Transpose,
    RandomRotate90,
    Clahe,
    RandomBrightness,
    RandomContrast,
    RandomGamma,
}

impl TransformKind {
    pub const ALL: [TransformKind; 11] = [
        TransformKind::VerticalFlip,
        TransformKind::HorizontalFlip,
        TransformKind::ElasticTransform,
        TransformKind::GridDistortion,
        TransformKind::OpticalDistortion,
        TransformKind::Transpose,
        TransformKind::RandomRotate90,
        TransformKind::Clahe,
        TransformKind::RandomBrightness,
        TransformKind::RandomContrast,
        TransformKind::RandomGamma,
    ];

    pub fn is_geometric(self) -> bool {
        !matches!(
            self,
            TransformKind::Clahe
                | TransformKind::RandomBrightness
                | TransformKind::RandomContrast
                | TransformKind::RandomGamma
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::VerticalFlip => "VerticalFlip",
            TransformKind::HorizontalFlip => "HorizontalFlip",
            TransformKind::ElasticTransform => "ElasticTransform",
            TransformKind::GridDistortion => "GridDistortion",
            TransformKind::OpticalDistortion => "OpticalDistortion",
            TransformKind::Transpose => "Transpose",
            TransformKind::RandomRotate90 => "RandomRotate90",
            TransformKind::Clahe => "CLAHE",
            TransformKind::RandomBrightness => "RandomBrightness",
            TransformKind::RandomContrast => "RandomContrast",
            TransformKind::RandomGamma => "RandomGamma",
        }
    }
}

/// A transform with its parameter ranges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    VerticalFlip,
    HorizontalFlip,
    Transpose,
    /// `k ∈ {0,1,2,3}` counter-clockwise quarter turns, uniform.
    RandomRotate90,
    ElasticTransform { alpha: f64, sigma: f64 },
    GridDistortion { cells: usize, limit: f64 },
    /// `k1 ~ U(−limit, limit)`.
    OpticalDistortion { limit: f64 },
    Clahe { clip_limit: f64, tiles: usize },
    /// `β ~ U(−limit, limit)`.
    RandomBrightness { limit: f64 },
    /// `α ~ 1 + U(−limit, limit)`.
    RandomContrast { limit: f64 },
    /// `γ ~ U(low, high)`.
    RandomGamma { low: f64, high: f64 },
}

impl Transform {
    pub fn kind(&self) -> TransformKind {
        match self {
            Transform::VerticalFlip => TransformKind::VerticalFlip,
            Transform::HorizontalFlip => TransformKind::HorizontalFlip,
            Transform::Transpose => TransformKind::Transpose,
            Transform::RandomRotate90 => TransformKind::RandomRotate90,
            Transform::ElasticTransform { .. } => TransformKind::ElasticTransform,
            Transform::GridDistortion { .. } => TransformKind::GridDistortion,
            Transform::OpticalDistortion { .. } => TransformKind::OpticalDistortion,
            Transform::Clahe { .. } => TransformKind::Clahe,
            Transform::RandomBrightness { .. } => TransformKind::RandomBrightness,
            Transform::RandomContrast { .. } => TransformKind::RandomContrast,
            Transform::RandomGamma { .. } => TransformKind::RandomGamma,
        }
    }

    /// Default parameter ranges for each kind.
    pub fn default_for(kind: TransformKind) -> Self {
        match kind {
            TransformKind::VerticalFlip => Transform::VerticalFlip,
            TransformKind::HorizontalFlip => Transform::HorizontalFlip,
            TransformKind::Transpose => Transform::Transpose,
            TransformKind::RandomRotate90 => Transform::RandomRotate90,
            TransformKind::ElasticTransform => Transform::ElasticTransform { alpha: 30.0, sigma: 6.0 },
            TransformKind::GridDistortion => Transform::GridDistortion { cells: 5, limit: 0.3 },
            TransformKind::OpticalDistortion => Transform::OpticalDistortion { limit: 0.1 },
            TransformKind::Clahe => Transform::Clahe { clip_limit: 2.0, tiles: 8 },
            TransformKind::RandomBrightness => Transform::RandomBrightness { limit: 0.2 },
            TransformKind::RandomContrast => Transform::RandomContrast { limit: 0.2 },
            TransformKind::RandomGamma => Transform::RandomGamma { low: 0.8, high: 1.2 },
        }
    }

    /// The same kind with every magnitude set to its neutral value.
    pub fn neutral(kind: TransformKind) -> Self {
        match Transform::default_for(kind) {
            Transform::ElasticTransform { sigma, .. } => Transform::ElasticTransform { alpha: 0.0, sigma },
            Transform::GridDistortion { cells, .. } => Transform::GridDistortion { cells, limit: 0.0 },
            Transform::OpticalDistortion { .. } => Transform::OpticalDistortion { limit: 0.0 },
            Transform::RandomBrightness { .. } => Transform::RandomBrightness { limit: 0.0 },
            Transform::RandomContrast { .. } => Transform::RandomContrast { limit: 0.0 },
            Transform::RandomGamma { .. } => Transform::RandomGamma { low: 1.0, high: 1.0 },
            other => other,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("{}: {m}", self.kind().name())));
        match *self {
            Transform::ElasticTransform { alpha, sigma } if !(alpha >= 0.0 && sigma >= 0.0) => {
                bad(format!("alpha and sigma must be >= 0, got {alpha}, {sigma}"))
            }
            Transform::GridDistortion { cells, limit } if cells == 0 || !(0.0..1.0).contains(&limit) => {
                bad(format!("need cells >= 1 and limit in [0,1), got {cells}, {limit}"))
            }
            Transform::OpticalDistortion { limit } if !(0.0..1.0).contains(&limit) => {
                bad(format!("limit must be in [0,1), got {limit}"))
            }
            Transform::Clahe { clip_limit, tiles } if !(clip_limit > 0.0) || tiles == 0 => {
                bad(format!("need clip_limit > 0 and tiles >= 1, got {clip_limit}, {tiles}"))
            }
            Transform::RandomBrightness { limit } | Transform::RandomContrast { limit }
                if !(0.0..=1.0).contains(&limit) =>
            {
                bad(format!("limit must be in [0,1], got {limit}"))
            }
            Transform::RandomGamma { low, high } if !(low > 0.0 && low <= high) => {
                bad(format!("need 0 < low <= high, got {low}, {high}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub transform: Transform,
    pub p: f64,
}

/// One row of the augmentation table as written in a config file.
///
/// Only the parameters relevant to `transform` may be given; omitted ones take
/// the defaults of [`Transform::default_for`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub transform: Option<TransformKind>,
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_limit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
}

impl TryFrom<&StepConfig> for Step {
    type Error = Error;

    fn try_from(c: &StepConfig) -> Result<Step> {
        let kind = c
            .transform
            .ok_or_else(|| Error::InvalidParameter("augmentation step without `transform`".into()))?;
        let p = c
            .p
            .ok_or_else(|| Error::InvalidParameter(format!("{}: missing `p`", kind.name())))?;
        let given = [
            ("alpha", c.alpha.is_some()),
            ("sigma", c.sigma.is_some()),
            ("cells", c.cells.is_some()),
            ("limit", c.limit.is_some()),
            ("clip_limit", c.clip_limit.is_some()),
            ("tiles", c.tiles.is_some()),
            ("low", c.low.is_some()),
            ("high", c.high.is_some()),
        ];
        let allowed: &[&str] = match kind {
            TransformKind::ElasticTransform => &["alpha", "sigma"],
            TransformKind::GridDistortion => &["cells", "limit"],
            TransformKind::OpticalDistortion
            | TransformKind::RandomBrightness
            | TransformKind::RandomContrast => &["limit"],
            TransformKind::Clahe => &["clip_limit", "tiles"],
            TransformKind::RandomGamma => &["low", "high"],
            _ => &[],
        };
        if let Some((name, _)) = given.iter().find(|(n, set)| *set && !allowed.contains(n)) {
            return Err(Error::InvalidParameter(format!(
                "{}: parameter `{name}` does not apply",
                kind.name()
            )));
        }
        let transform = match Transform::default_for(kind) {
            Transform::ElasticTransform { alpha, sigma } => Transform::ElasticTransform {
                alpha: c.alpha.unwrap_or(alpha),
                sigma: c.sigma.unwrap_or(sigma),
            },
            Transform::GridDistortion { cells, limit } => Transform::GridDistortion {
                cells: c.cells.unwrap_or(cells),
                limit: c.limit.unwrap_or(limit),
            },
            Transform::OpticalDistortion { limit } => Transform::OpticalDistortion {
                limit: c.limit.unwrap_or(limit),
            },
            Transform::Clahe { clip_limit, tiles } => Transform::Clahe {
                clip_limit: c.clip_limit.unwrap_or(clip_limit),
                tiles: c.tiles.unwrap_or(tiles),
            },
            Transform::RandomBrightness { limit } => Transform::RandomBrightness {
                limit: c.limit.unwrap_or(limit),
            },
            Transform::RandomContrast { limit } => Transform::RandomContrast {
                limit: c.limit.unwrap_or(limit),
            },
            Transform::RandomGamma { low, high } => Transform::RandomGamma {
                low: c.low.unwrap_or(low),
                high: c.high.unwrap_or(high),
            },
            other => other,
        };
        let step = Step { transform, p };
        step.validate()?;
        Ok(step)
    }
}

impl From<&Step> for StepConfig {
    fn from(s: &Step) -> Self {
        let mut c = StepConfig {
            transform: Some(s.transform.kind()),
            p: Some(s.p),
            ..Default::default()
        };
        match s.transform {
            Transform::ElasticTransform { alpha, sigma } => {
                c.alpha = Some(alpha);
                c.sigma = Some(sigma);
            }
            Transform::GridDistortion { cells, limit } => {
                c.cells = Some(cells);
                c.limit = Some(limit);
            }
            Transform::OpticalDistortion { limit }
            | Transform::RandomBrightness { limit }
            | Transform::RandomContrast { limit } => c.limit = Some(limit),
            Transform::Clahe { clip_limit, tiles } => {
                c.clip_limit = Some(clip_limit);
                c.tiles = Some(tiles);
            }
            Transform::RandomGamma { low, high } => {
                c.low = Some(low);
                c.high = Some(high);
            }
            _ => {}
        }
        c
    }
}

impl Step {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "{}: probability {} outside [0,1]",
                self.transform.kind().name(),
                self.p
            )));
        }
        self.transform.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationSpec {
    pub steps: Vec<Step>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl AugmentationSpec {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        steps.iter().try_for_each(Step::validate)?;
        Ok(Self { steps })
    }

    /// All eleven transforms in table order with their default probabilities.
    pub fn full() -> Self {
        let p = |k: TransformKind| match k {
            TransformKind::OpticalDistortion | TransformKind::Clahe | TransformKind::RandomGamma => 0.8,
            _ => 0.5,
        };
        Self {
            steps: TransformKind::ALL
                .iter()
                .map(|&k| Step { transform: Transform::default_for(k), p: p(k) })
                .collect(),
        }
    }

    /// The subset without elastic, grid and optical warps.
    pub fn coarse() -> Self {
        let mut s = Self::full();
        s.steps.retain(|st| {
            !matches!(
                st.transform.kind(),
                TransformKind::ElasticTransform
                    | TransformKind::GridDistortion
                    | TransformKind::OpticalDistortion
            )
        });
        s
    }

    pub fn none() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn from_config(steps: &[StepConfig]) -> Result<Self> {
        Ok(Self {
            steps: steps.iter().map(Step::try_from).collect::<Result<_>>()?,
        })
    }

    pub fn to_config(&self) -> Vec<StepConfig> {
        self.steps.iter().map(StepConfig::from).collect()
    }

    /// Same steps with every probability replaced by `p`.
    pub fn with_probability(mut self, p: f64) -> Self {
        self.steps.iter_mut().for_each(|s| s.p = p);
        self
    }
}

/// A transform that fired and the parameters it drew.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppliedTransform {
    pub kind: TransformKind,
    pub params: Vec<f64>,
}

impl fmt::Display for AppliedTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if !self.params.is_empty() {
            let ps: Vec<String> = self.params.iter().map(|p| format!("{p:.4}")).collect();
            write!(f, "({})", ps.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPair {
    pub image: RgbImage,
    pub mask: Option<Mask>,
    pub log: Vec<AppliedTransform>,
}

/// Runs every step of `spec` on the pair with a generator seeded by `seed`.
pub fn apply_pipeline(
    image: &RgbImage,
    mask: Option<&Mask>,
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<AugmentedPair> {
    if let Some(m) = mask {
        if (m.width(), m.height()) != (image.width(), image.height()) {
            return Err(Error::shape(
                "apply_pipeline",
                &[image.height(), image.width()],
                &[m.height(), m.width()],
            ));
        }
    }
    let mut rng = Prng::new(seed);
    let mut img = image.clone();
    let mut msk = mask.cloned();
    let mut log = Vec::new();

    for step in &spec.steps {
        if !rng.bernoulli(step.p) {
            continue;
        }
        let (w, h) = (img.width(), img.height());
        let geo = |kind: Dihedral, img: &mut RgbImage, msk: &mut Option<Mask>| {
            *img = dihedral_image(kind, img);
            if let Some(m) = msk.as_mut() {
                *m = dihedral_mask(kind, m);
            }
        };
        let warp = |field: WarpField, img: &mut RgbImage, msk: &mut Option<Mask>| {
            *img = warp_image(img, &field);
            if let Some(m) = msk.as_mut() {
                *m = warp_mask(m, &field);
            }
        };
        let params = match step.transform {
            Transform::VerticalFlip => {
                geo(Dihedral::VFlip, &mut img, &mut msk);
                vec![]
            }
            Transform::HorizontalFlip => {
                geo(Dihedral::HFlip, &mut img, &mut msk);
                vec![]
            }
            Transform::Transpose => {
                geo(Dihedral::Transpose, &mut img, &mut msk);
                vec![]
            }
            Transform::RandomRotate90 => {
                let k = rng.below(4) as u8;
                geo(Dihedral::Rot90(k), &mut img, &mut msk);
                vec![k as f64]
            }
            Transform::ElasticTransform { alpha, sigma } => {
                warp(elastic_field(w, h, alpha, sigma, &mut rng), &mut img, &mut msk);
                vec![alpha, sigma]
            }
            Transform::GridDistortion { cells, limit } => {
                warp(grid_field(w, h, cells, limit, &mut rng), &mut img, &mut msk);
                vec![cells as f64, limit]
            }
            Transform::OpticalDistortion { limit } => {
                let k1 = draw(&mut rng, -limit, limit);
                warp(optical_field(w, h, k1), &mut img, &mut msk);
                vec![k1]
            }
            Transform::Clahe { clip_limit, tiles } => {
                img = clahe(&img, clip_limit, tiles);
                vec![clip_limit, tiles as f64]
            }
            Transform::RandomBrightness { limit } => {
                let beta = draw(&mut rng, -limit, limit);
                img = brightness(&img, beta);
                vec![beta]
            }
            Transform::RandomContrast { limit } => {
                let alpha = 1.0 + draw(&mut rng, -limit, limit);
                img = contrast(&img, alpha);
                vec![alpha]
            }
            Transform::RandomGamma { low, high } => {
                let g = draw(&mut rng, low, high);
                img = gamma(&img, g);
                vec![g]
            }
        };
        log.push(AppliedTransform { kind: step.transform.kind(), params });
    }
    Ok(AugmentedPair { image: img, mask: msk, log })
}

fn draw(rng: &mut Prng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.uniform_range(lo, hi)
    } else {
        lo
    }
}

/// Seed for sample `index` of variant `variant` under a base seed.
pub fn sample_seed(seed: u64, index: u64, variant: u64) -> u64 {
    mix_seed(seed, &[index, variant])
}

/// `variants` augmented copies of one sample.
pub fn augment_variants(
    image: &RgbImage,
    mask: Option<&Mask>,
    spec: &AugmentationSpec,
    seed: u64,
    index: u64,
    variants: usize,
) -> Result<Vec<AugmentedPair>> {
    (0..variants as u64)
        .map(|v| apply_pipeline(image, mask, spec, sample_seed(seed, index, v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64, w: usize, h: usize) -> (RgbImage, Mask) {
        let mut rng = Prng::new(seed);
        let img = RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.below(256) as u8).collect()).unwrap();
        let mask = Mask::new(w, h, (0..w * h).map(|_| rng.below(2) as u8).collect()).unwrap();
        (img, mask)
    }

    #[test]
    fn default_probabilities() {
        let spec = AugmentationSpec::full();
        assert_eq!(spec.steps.len(), 11);
        for s in &spec.steps {
            let expect = match s.transform.kind() {
                TransformKind::OpticalDistortion | TransformKind::Clahe | TransformKind::RandomGamma => 0.8,
                _ => 0.5,
            };
            assert_eq!(s.p, expect, "{:?}", s.transform.kind());
        }
        assert!(AugmentationSpec::coarse().steps.iter().all(|s| {
            !matches!(
                s.transform,
                Transform::ElasticTransform { .. }
                    | Transform::GridDistortion { .. }
                    | Transform::OpticalDistortion { .. }
            )
        }));
    }

    #[test]
    fn zero_probability_is_identity() {
        let (img, mask) = sample(1, 17, 12);
        let out = apply_pipeline(&img, Some(&mask), &AugmentationSpec::full().with_probability(0.0), 9).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.mask.unwrap(), mask);
        assert!(out.log.is_empty());
    }

    #[test]
    fn deterministic() {
        let (img, mask) = sample(2, 20, 16);
        let spec = AugmentationSpec::full();
        let a = apply_pipeline(&img, Some(&mask), &spec, 77).unwrap();
        let b = apply_pipeline(&img, Some(&mask), &spec, 77).unwrap();
        assert_eq!(a, b);
        let c = apply_pipeline(&img, Some(&mask), &spec, 78).unwrap();
        assert!(a.log != c.log || a.image != c.image);
    }

    #[test]
    fn neutral_parametric_steps_at_p1_are_identity() {
        let (img, mask) = sample(3, 24, 18);
        let steps = TransformKind::ALL
            .iter()
            .filter(|k| {
                !matches!(
                    k,
                    TransformKind::VerticalFlip
                        | TransformKind::HorizontalFlip
                        | TransformKind::Transpose
                        | TransformKind::RandomRotate90
                        | TransformKind::Clahe
                )
            })
            .map(|&k| Step { transform: Transform::neutral(k), p: 1.0 })
            .collect();
        let spec = AugmentationSpec::new(steps).unwrap();
        let out = apply_pipeline(&img, Some(&mask), &spec, 5).unwrap();
        assert_eq!(out.log.len(), 6);
        // gamma 1 can move a level by rounding; the rest is exact
        for (a, b) in out.image.data().iter().zip(img.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
        assert_eq!(out.mask.unwrap(), mask);
    }

    #[test]
    fn geometric_steps_keep_pairs_aligned() {
        let (img, _) = sample(4, 15, 10);
        // mask marks bright red pixels; after every pipeline draw the marks
        // still land on (or next to) red pixels
        let mut img = img;
        let mut mask = Mask::zeros(15, 10);
        for (x, y) in [(3, 2), (11, 7), (7, 5)] {
            img.put(x, y, [255, 0, 0]);
            mask.set(x, y, true);
        }
        let geometric = AugmentationSpec {
            steps: AugmentationSpec::full()
                .steps
                .into_iter()
                .filter(|s| s.transform.kind().is_geometric())
                .collect(),
        };
        for seed in 0..20 {
            let out = apply_pipeline(&img, Some(&mask), &geometric, seed).unwrap();
            let m = out.mask.unwrap();
            assert_eq!((m.width(), m.height()), (out.image.width(), out.image.height()));
            assert!(m.data().iter().all(|&v| v <= 1));
        }
    }

    #[test]
    fn dihedral_permutes_multiset() {
        let (img, _) = sample(5, 9, 6);
        let mut before = img.data().chunks(3).map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>();
        before.sort();
        for k in [Dihedral::HFlip, Dihedral::VFlip, Dihedral::Transpose, Dihedral::Rot90(1)] {
            let mut after = dihedral_image(k, &img).data().chunks(3).map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>();
            after.sort();
            assert_eq!(after, before);
        }
    }

    #[test]
    fn variant_count() {
        let (img, mask) = sample(6, 4, 4);
        let spec = AugmentationSpec::coarse();
        let mut total = 0;
        for i in 0..119 {
            total += augment_variants(&img, Some(&mask), &spec, 1, i, 80).unwrap().len();
        }
        assert_eq!(total, 9520);
        assert_eq!(46 * 80, 3680);
    }

    #[test]
    fn step_config_round_trip_and_validation() {
        let cfg = AugmentationSpec::full().to_config();
        assert_eq!(AugmentationSpec::from_config(&cfg).unwrap(), AugmentationSpec::full());
        let bad = StepConfig {
            transform: Some(TransformKind::VerticalFlip),
            p: Some(0.5),
            alpha: Some(1.0),
            ..Default::default()
        };
        assert!(Step::try_from(&bad).is_err());
        let out_of_range = StepConfig {
            transform: Some(TransformKind::RandomGamma),
            p: Some(1.5),
            ..Default::default()
        };
        assert!(Step::try_from(&out_of_range).is_err());
        let json = r#"{"transform":"random-gamma","p":0.8,"low":0.9}"#;
        let c: StepConfig = serde_json::from_str(json).unwrap();
        assert_eq!(
            Step::try_from(&c).unwrap().transform,
            Transform::RandomGamma { low: 0.9, high: 1.2 }
        );
        assert!(serde_json::from_str::<StepConfig>(r#"{"transform":"clahe","p":1,"bogus":1}"#).is_err());
    }
}
