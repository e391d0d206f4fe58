//! Likelihood of observation sequences under order-r models.

use super::gmm::PreparedGmm;
use super::model::{tuple_index, HmmModel, StateSequence};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::{log_sum_exp, safe_ln, LogAccumulator};
use crate::scalar::Scalar;

/// A model with every probability converted to log space and the emission
/// constants precomputed. Build once per model and reuse for scoring.
#[derive(Debug, Clone)]
pub struct PreparedModel<F> {
    pub(crate) order: usize,
    pub(crate) num_states: usize,
    pub(crate) feature_dim: usize,
    /// `log pi1`, `log pi2`, `log pi3` in boundary order.
    pub(crate) log_boundary: Vec<Vec<F>>,
    /// `N^r x N` log transition rows.
    pub(crate) log_trans: Vec<F>,
    pub(crate) emissions: Vec<PreparedGmm<F>>,
}

impl<F: Scalar> PreparedModel<F> {
    pub fn new(model: &HmmModel<F>) -> Self {
        let ln = |v: &Vec<F>| v.iter().map(|&p| safe_ln(p)).collect::<Vec<_>>();
        let b = &model.boundary;
        let mut log_boundary = vec![ln(&b.pi1)];
        if model.order >= 2 {
            log_boundary.push(ln(b.pi2.as_ref().expect("pi2 for order >= 2")));
        }
        if model.order >= 3 {
            log_boundary.push(ln(b.pi3.as_ref().expect("pi3 for order 3")));
        }
        Self {
            order: model.order,
            num_states: model.num_states,
            feature_dim: model.feature_dim,
            log_boundary,
            log_trans: ln(&model.transitions.probs),
            emissions: model.emissions.iter().map(PreparedGmm::new).collect(),
        }
    }

    /// `T x N` table of `log b_j(O_t)`.
    pub(crate) fn emission_table(&self, obs: &FeatureSequence<F>) -> Result<Vec<F>> {
        if obs.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: obs.dim(),
            });
        }
        let mut table = Vec::with_capacity(obs.num_frames() * self.num_states);
        let max_m = self.emissions.iter().map(PreparedGmm::num_components).max().unwrap_or(0);
        let mut terms = vec![F::zero(); max_m];
        for x in obs.rows() {
            for e in &self.emissions {
                let t = &mut terms[..e.num_components()];
                e.component_log_terms(x, t);
                table.push(log_sum_exp(t));
            }
        }
        Ok(table)
    }

    /// Log probability of moving to `next` at 0-based time `t`, given the
    /// preceding states (at least `min(t, order)` of them, oldest first).
    #[inline]
    pub(crate) fn log_step(&self, t: usize, history: &[usize], next: usize) -> F {
        let n = self.num_states;
        if t < self.order {
            let ctx = &history[history.len() - t..];
            self.log_boundary[t][tuple_index(ctx, n) * n + next]
        } else {
            let ctx = &history[history.len() - self.order..];
            self.log_trans[tuple_index(ctx, n) * n + next]
        }
    }

    /// Direct order-r forward recursion over windows of the most recent
    /// `min(t, r)` states.
    pub(crate) fn forward_from_table(&self, log_b: &[F]) -> F {
        let n = self.num_states;
        let r = self.order;
        let t_len = log_b.len() / n;
        let b = |t: usize, j: usize| log_b[t * n + j];

        let mut alpha: Vec<F> = (0..n).map(|j| self.log_boundary[0][j] + b(0, j)).collect();
        let mut width = 1;
        for t in 1..t_len {
            if t < r {
                // Window grows: alpha'[(h, k)] = alpha[h] + log pi_{t+1}(k | h) + b_k.
                let table = &self.log_boundary[t];
                let mut next = Vec::with_capacity(alpha.len() * n);
                for (h, &a) in alpha.iter().enumerate() {
                    for k in 0..n {
                        next.push(a + table[h * n + k] + b(t, k));
                    }
                }
                alpha = next;
                width += 1;
            } else {
                // Window slides: alpha'[(rest, k)] = lse_{h1} alpha[(h1, rest)] + log a[(h1, rest), k] + b_k.
                debug_assert_eq!(width, r);
                let rest_count = n.pow(r as u32 - 1);
                let mut next = vec![F::zero(); alpha.len()];
                for rest in 0..rest_count {
                    for k in 0..n {
                        let mut acc = LogAccumulator::new();
                        for h1 in 0..n {
                            let hist = h1 * rest_count + rest;
                            acc.add(alpha[hist] + self.log_trans[hist * n + k]);
                        }
                        next[rest * n + k] = acc.value() + b(t, k);
                    }
                }
                alpha = next;
            }
        }
        log_sum_exp(&alpha)
    }

    pub fn forward_log_likelihood(&self, obs: &FeatureSequence<F>) -> Result<F> {
        let table = self.emission_table(obs)?;
        Ok(self.forward_from_table(&table))
    }

    fn check_states(&self, seq: &StateSequence) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::EmptyInput("state sequence has no states"));
        }
        if let Some(&bad) = seq.states.iter().find(|&&s| s >= self.num_states) {
            return Err(Error::StateOutOfRange {
                index: bad,
                num_states: self.num_states,
            });
        }
        Ok(())
    }

    pub fn state_sequence_log_prob(&self, seq: &StateSequence) -> Result<F> {
        self.check_states(seq)?;
        let q = &seq.states;
        let mut total = self.log_boundary[0][q[0]];
        for t in 1..q.len() {
            total = total + self.log_step(t, &q[..t], q[t]);
        }
        Ok(total)
    }

    pub fn joint_log_prob(&self, seq: &StateSequence, obs: &FeatureSequence<F>) -> Result<F> {
        if seq.len() != obs.num_frames() {
            return Err(Error::LengthMismatch(format!(
                "{} states for {} frames",
                seq.len(),
                obs.num_frames()
            )));
        }
        let path = self.state_sequence_log_prob(seq)?;
        let table = self.emission_table(obs)?;
        let n = self.num_states;
        let emit: F = seq.states.iter().enumerate().map(|(t, &j)| table[t * n + j]).sum();
        Ok(path + emit)
    }
}

/// Natural-log likelihood `log sum_Q P(Q, O | model)`.
pub fn forward_log_likelihood<F: Scalar>(model: &HmmModel<F>, obs: &FeatureSequence<F>) -> Result<F> {
    PreparedModel::new(model).forward_log_likelihood(obs)
}

/// `log P(Q)`: boundary factors for the first `r` states, then the order-r
/// tensor.
pub fn state_sequence_log_prob<F: Scalar>(model: &HmmModel<F>, seq: &StateSequence) -> Result<F> {
    PreparedModel::new(model).state_sequence_log_prob(seq)
}

/// `log P(Q, O)`: path probability plus `sum_t log b_{q_t}(O_t)`.
pub fn joint_log_prob<F: Scalar>(
    model: &HmmModel<F>,
    seq: &StateSequence,
    obs: &FeatureSequence<F>,
) -> Result<F> {
    PreparedModel::new(model).joint_log_prob(seq, obs)
}
