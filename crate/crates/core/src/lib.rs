//! Sensitive-query classification, rule overrides, decision logging and
//! log analytics for a generative search service.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the service uses.

pub mod analytics;
pub mod classifier;
pub mod feedback;
pub mod gateway;
pub mod rules;
pub mod scalar;
pub mod simulator;
pub mod taxonomy;
mod util;

pub use scalar::Scalar;
pub use taxonomy::{Category, Group};

pub type ModelWeights = classifier::LinearHead<f64>;
pub type ModelWeightsF32 = classifier::LinearHead<f32>;
pub type ScoreVector = classifier::Scores<f64>;
pub type SparseFeatureVector = classifier::SparseVector<f64>;
pub type Model = classifier::LinearModel<f64>;
pub type ModelF32 = classifier::LinearModel<f32>;
