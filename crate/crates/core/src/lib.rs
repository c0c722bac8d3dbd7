//! `insulnet`: a small CPU deep-learning framework and a two-stage power-line
//! insulator inspection pipeline built on it.
//!
//! Stage one segments insulators with a UNet-style network; the predicted
//! binary mask is multiplied into the image, and stage two classifies the
//! masked image into four defect states (healthy, broken, burned/corroded,
//! missing cap).

pub mod augment;
pub mod data;
pub mod error;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod raster;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Element, Prng, Tensor};
