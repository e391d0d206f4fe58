//! Speaker identification in stressful talking environments with first-,
//! second- and third-order hidden Markov models.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod hmm;
pub mod logspace;
pub mod prng;
pub mod scalar;
pub mod speaker;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision HMM.
pub type Model = hmm::HmmModel<f64>;
/// Double-precision feature sequence.
pub type Features = features::FeatureSequence<f64>;
/// Double-precision speaker model.
pub type SpeakerModel = speaker::SpeakerModel<f64>;
/// Double-precision speaker registry.
pub type Registry = speaker::SpeakerRegistry<f64>;
