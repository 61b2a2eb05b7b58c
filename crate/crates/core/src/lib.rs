//! Difference-guided reasoning over evolving object states.
//!
//! Instead of handing a model (or an operator) every raw observation, this
//! crate extracts feature vectors from object states, computes *differences*
//! between them — across time, across sub-objects in space, or against
//! historical reference states — and then reasons over the differences:
//! ranking them by weighted impact, classifying them as normal or abnormal,
//! fusing in external evidence, phrasing them as difference-oriented prompts
//! for a language-model backend, and measuring whether difference prompting
//! actually beats direct prompting on answer quality.
//!
//! The crate is organised as a pipeline of small modules:
//!
//! * [`feature`] — named, unit-annotated feature vectors and state records;
//! * [`extract`] — extractors that turn raw payloads into feature vectors;
//! * [`diff`] — difference algebra: temporal deltas, spatial pairwise
//!   differences, impact scoring and top-n selection;
//! * [`history`] — an append-only store of labelled historical states with
//!   reference-state selection (latest / mean / medoid);
//! * [`anomaly`] — threshold and history-distance anomaly classification;
//! * [`fusion`] — merging internal state with external evidence streams;
//! * [`gateway`] — prompt templates and pluggable chat backends (scripted
//!   mock or remote HTTP);
//! * [`eval`] — the evaluation harness: runs direct-vs-difference trials,
//!   scores responses by embedding similarity and applies a Welch t-test;
//! * [`stats`] — the numerical kernels behind the harness.
//!
//! All numeric code is generic over the scalar type through the
//! [`scalar::Real`] trait; `f64` is the default everywhere, and the crate
//! root exports concrete aliases ([`FeatureVectorF64`], [`DifferenceF32`],
//! …) for the common instantiations.

pub mod anomaly;
pub mod config;
pub mod diff;
pub mod error;
pub mod eval;
pub mod extract;
pub mod feature;
pub mod fusion;
pub mod gateway;
pub mod history;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// Feature vector over `f64` scalars (the default instantiation).
pub type FeatureVectorF64 = feature::FeatureVector<f64>;
/// Feature vector over `f32` scalars.
pub type FeatureVectorF32 = feature::FeatureVector<f32>;
/// State record over `f64` scalars.
pub type StateRecordF64 = feature::StateRecord<f64>;
/// State record over `f32` scalars.
pub type StateRecordF32 = feature::StateRecord<f32>;
/// Difference over `f64` scalars.
pub type DifferenceF64 = diff::Difference<f64>;
/// Difference over `f32` scalars.
pub type DifferenceF32 = diff::Difference<f32>;
