//! Most likely state path.

use super::forward::PreparedModel;
use super::model::{tuple_digits, HmmModel, StateSequence};
use super::reduce::{order_reduce, viterbi_dense};
use crate::error::Result;
use crate::features::FeatureSequence;
use crate::scalar::Scalar;

/// `argmax_Q log P(Q, O)` and its value. Ties go to the lowest state index.
///
/// Order 2 and 3 models are decoded on their composite first-order
/// equivalent. Sequences shorter than the order never reach the full tensor,
/// so they are decoded by enumeration.
pub fn viterbi_decode<F: Scalar>(model: &HmmModel<F>, obs: &FeatureSequence<F>) -> Result<(StateSequence, F)> {
    let t_len = obs.num_frames();
    if model.order == 1 {
        let prepared = PreparedModel::new(model);
        let table = prepared.emission_table(obs)?;
        let (path, value) = viterbi_dense(
            &prepared.log_boundary[0],
            &prepared.log_trans,
            &table,
            0,
            model.num_states,
        );
        return Ok((StateSequence::new(path)?, value));
    }
    if t_len < model.order {
        return decode_by_enumeration(model, obs);
    }
    let reduced = order_reduce(model)?;
    let (composite, value) = reduced.viterbi(obs)?;
    Ok((StateSequence::new(reduced.project_path(&composite))?, value))
}

fn decode_by_enumeration<F: Scalar>(model: &HmmModel<F>, obs: &FeatureSequence<F>) -> Result<(StateSequence, F)> {
    let prepared = PreparedModel::new(model);
    let n = model.num_states;
    let t_len = obs.num_frames();
    let mut best: Option<(StateSequence, F)> = None;
    for idx in 0..n.pow(t_len as u32) {
        let seq = StateSequence::new(tuple_digits(idx, t_len, n))?;
        let value = prepared.joint_log_prob(&seq, obs)?;
        // Enumeration is in lexicographic order, so strict improvement keeps
        // the lowest-index path on ties.
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((seq, value));
        }
    }
    Ok(best.expect("at least one state path"))
}
