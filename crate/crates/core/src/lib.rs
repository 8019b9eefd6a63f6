//! Nighttime auto white balance.
//!
//! [`sgplrd`] estimates the scene illuminant from salient gray pixels and
//! local reflectance differences. [`env`] wraps the estimator as a
//! sequential decision problem over its two tunables and [`sac`] trains a
//! Soft Actor-Critic agent on it. [`synth`] renders scenes with a known
//! illuminant for testing and training.

pub mod dataset;
pub mod env;
pub mod error;
pub mod features;
pub mod illuminant;
pub mod image;
pub mod metrics;
pub mod sac;
pub mod sgplrd;
pub mod synth;

pub use dataset::{Dataset, DatasetEntry, GroundTruthRecord};
pub use error::{AwbError, Result};
pub use illuminant::IlluminantEstimate;
pub use image::{LinearImage, LoadOptions};
pub use sgplrd::{Estimate, ParamBounds, PreparedImage, SgpParams};
