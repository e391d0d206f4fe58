//! Order-1/2/3 hidden Markov models with diagonal Gaussian mixture
//! emissions: representation, validation, scoring, decoding and training.

mod forward;
pub mod gmm;
mod init;
mod io;
mod kmeans;
mod model;
mod reduce;
mod sample;
mod train;
mod viterbi;

pub use forward::{forward_log_likelihood, joint_log_prob, state_sequence_log_prob, PreparedModel};
pub use gmm::{gmm_log_density, train_gmm, variance_floor, GmmEmission, GmmTrainOptions, MIN_VARIANCE};
pub use init::{init_model, DEFAULT_VARIANCE_FLOOR_RATIO};
pub use io::{model_from_json, model_to_json, read_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use model::{
    validate_model, BoundaryDistributions, HmmModel, StateSequence, TableName, TransitionTensor, ValidationReport,
    Violation, MAX_ORDER,
};
pub use reduce::{order_reduce, ReducedModel};
pub use sample::{sample_gmm, sample_hmm};
pub use train::{total_log_likelihood, train_baum_welch, TrainOptions, TrainOutcome, PROBABILITY_FLOOR};
pub use viterbi::viterbi_decode;
