//! Order reduction: an order-r model over `N` states as a first-order model
//! over `N^r` composite states.
//!
//! Composite state `(u_1, .., u_r)` (index with `u_1` most significant) is
//! entered at time `t` when `q_{t-r+1..t} = (u_1, .., u_r)`. It moves to
//! `(u_2, .., u_r, w)` with probability `a[u_1..u_r, w]` and to nothing else,
//! and emits with the mixture of its last element. The chain starts at time
//! `r` with probability `pi1(u_1) pi2(u_2 | u_1) pi3(u_3 | u_1, u_2)`; the
//! first `r - 1` observations are emitted by the earlier tuple elements and
//! enter as a prefix weight on that initial distribution.

use super::forward::PreparedModel;
use super::model::{tuple_digit, BoundaryDistributions, HmmModel, TransitionTensor};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::{log_sum_exp, LogAccumulator};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ReducedModel<F> {
    /// Order of the model this was reduced from.
    pub base_order: usize,
    /// State count of the model this was reduced from.
    pub base_states: usize,
    /// First-order model over `base_states^base_order` composite states.
    pub model: HmmModel<F>,
}

/// Builds the composite-state first-order equivalent of an order-2 or
/// order-3 model.
pub fn order_reduce<F: Scalar>(model: &HmmModel<F>) -> Result<ReducedModel<F>> {
    let r = model.order;
    if r == 1 {
        return Err(Error::NothingToReduce(r));
    }
    let n = model.num_states;
    let k = n.pow(r as u32);
    let b = &model.boundary;

    let mut init = Vec::with_capacity(k);
    for c in 0..k {
        // Table `t` is indexed by the tuple's first `t + 1` digits.
        let p = (0..r).fold(F::one(), |p, t| p * b.table(t)[c / n.pow((r - 1 - t) as u32)]);
        init.push(p);
    }

    let mut trans = vec![F::zero(); k * k];
    let keep = k / n;
    for c in 0..k {
        let base = (c % keep) * n;
        for w in 0..n {
            trans[c * k + base + w] = model.transitions.row(c)[w];
        }
    }

    let emissions = (0..k).map(|c| model.emissions[c % n].clone()).collect();
    let composite = HmmModel::new(
        BoundaryDistributions {
            pi1: init,
            pi2: None,
            pi3: None,
        },
        TransitionTensor::new(1, k, trans)?,
        emissions,
    )?;
    Ok(ReducedModel {
        base_order: r,
        base_states: n,
        model: composite,
    })
}

impl<F: Scalar> ReducedModel<F> {
    /// Log weight of each composite state at time `r`: `log init(c)` plus the
    /// emissions of the first `r - 1` frames by the tuple's earlier elements.
    /// `log_b` is the composite emission table.
    fn start_weights(&self, log_pi: &[F], log_b: &[F]) -> Vec<F> {
        let (r, n) = (self.base_order, self.base_states);
        let k = self.model.num_states;
        (0..k)
            .map(|c| {
                let mut w = log_pi[c];
                for s in 0..r - 1 {
                    // Composite index `u` (< n) has last element `u`.
                    let u = tuple_digit(c, s, r, n);
                    w = w + log_b[s * k + u];
                }
                w
            })
            .collect()
    }

    fn prepared(&self, obs: &FeatureSequence<F>) -> Result<(PreparedModel<F>, Vec<F>)> {
        if obs.num_frames() < self.base_order {
            return Err(Error::LengthMismatch(format!(
                "composite scoring needs at least {} frames, got {}",
                self.base_order,
                obs.num_frames()
            )));
        }
        let prepared = PreparedModel::new(&self.model);
        let table = prepared.emission_table(obs)?;
        Ok((prepared, table))
    }

    /// Standard first-order forward pass over the composite chain, started
    /// at time `r`. Requires `T >= r`.
    pub fn forward_log_likelihood(&self, obs: &FeatureSequence<F>) -> Result<F> {
        let (prepared, log_b) = self.prepared(obs)?;
        let k = self.model.num_states;
        let t_len = obs.num_frames();
        let start = self.start_weights(&prepared.log_boundary[0], &log_b);
        let first = self.base_order - 1;

        let mut alpha: Vec<F> = (0..k).map(|c| start[c] + log_b[first * k + c]).collect();
        let mut next = vec![F::zero(); k];
        for t in first + 1..t_len {
            for (j, slot) in next.iter_mut().enumerate() {
                let mut acc = LogAccumulator::new();
                for (i, &a) in alpha.iter().enumerate() {
                    acc.add(a + prepared.log_trans[i * k + j]);
                }
                *slot = acc.value() + log_b[t * k + j];
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        Ok(log_sum_exp(&alpha))
    }

    /// Most likely composite path for frames `r..T` (0-based `r-1..T-1`) and
    /// its joint log probability. Ties go to the lowest composite index.
    pub fn viterbi(&self, obs: &FeatureSequence<F>) -> Result<(Vec<usize>, F)> {
        let (prepared, log_b) = self.prepared(obs)?;
        let start = self.start_weights(&prepared.log_boundary[0], &log_b);
        let first = self.base_order - 1;
        Ok(viterbi_dense(&start, &prepared.log_trans, &log_b, first, self.model.num_states))
    }

    /// Expands a composite path (as returned by [`Self::viterbi`]) into the
    /// base-state path.
    pub fn project_path(&self, composite: &[usize]) -> Vec<usize> {
        let (r, n) = (self.base_order, self.base_states);
        let mut states: Vec<usize> = match composite.first() {
            Some(&c0) => (0..r - 1).map(|s| tuple_digit(c0, s, r, n)).collect(),
            None => return Vec::new(),
        };
        states.extend(composite.iter().map(|&c| c % n));
        states
    }
}

/// Dense first-order Viterbi from frame `first` with start weights `start`
/// (excluding the frame-`first` emission).
pub(crate) fn viterbi_dense<F: Scalar>(
    start: &[F],
    log_trans: &[F],
    log_b: &[F],
    first: usize,
    k: usize,
) -> (Vec<usize>, F) {
    let t_len = log_b.len() / k;
    let mut delta: Vec<F> = (0..k).map(|c| start[c] + log_b[first * k + c]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len - first);
    let mut next = vec![F::zero(); k];
    for t in first + 1..t_len {
        let mut ptr = vec![0usize; k];
        for j in 0..k {
            let mut best = F::neg_infinity();
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let v = d + log_trans[i * k + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_b[t * k + j];
            ptr[j] = arg;
        }
        back.push(ptr);
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = F::neg_infinity();
    let mut last = 0;
    for (c, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = c;
        }
    }
    let mut path = vec![last];
    for ptr in back.iter().rev() {
        let prev = ptr[*path.last().expect("nonempty")];
        path.push(prev);
    }
    path.reverse();
    (path, best)
}
