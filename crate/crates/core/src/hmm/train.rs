//! Baum-Welch training of order-r models.
//!
//! Each E-step runs forward-backward on the composite first-order chain
//! (see [`super::reduce`]), exploiting that composite state `c` has only `N`
//! successors. Emissions are tied across composite states that share a last
//! element, so occupancies are folded back onto base states before the
//! mixture update; the first `r - 1` frames take their occupancy from the
//! posterior of the initial composite state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::PreparedModel;
use super::gmm::{relative_gain, variance_floor, MixtureAccumulator, PreparedGmm};
use super::model::{tuple_digit, validate_model, BoundaryDistributions, HmmModel, TransitionTensor};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::{log_sum_exp, LogAccumulator};
use crate::scalar::Scalar;

/// Additive floor applied to expected transition and boundary counts before
/// renormalization, so no probability reaches exactly zero.
pub const PROBABILITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Stop once `(L_k - L_{k-1}) / |L_{k-1}|` falls below this.
    pub rel_tol: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_ratio: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iters: 20,
            rel_tol: 1e-4,
            variance_floor_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: HmmModel<F>,
    /// Total training log-likelihood of every model evaluated, starting with
    /// the initial one; the last entry belongs to `model`.
    pub trace: Vec<F>,
    /// Number of re-estimation steps applied.
    pub iterations: usize,
    /// Whether training stopped on the tolerance rather than the cap.
    pub converged: bool,
}

/// Composite-chain view of a model, in log space.
struct Composite<F> {
    r: usize,
    n: usize,
    k: usize,
    /// `N^(r-1)`: number of distinct tuple suffixes.
    keep: usize,
    log_init: Vec<F>,
    log_trans: Vec<F>,
    emissions: Vec<PreparedGmm<F>>,
    max_m: usize,
}

/// Expected sufficient statistics of one sequence.
struct Stats<F> {
    log_likelihood: F,
    trans: Vec<F>,
    start: Vec<F>,
    mixtures: Vec<MixtureAccumulator<F>>,
}

impl<F: Scalar> Composite<F> {
    fn new(model: &HmmModel<F>) -> Self {
        let prepared = PreparedModel::new(model);
        let (r, n) = (model.order, model.num_states);
        let k = n.pow(r as u32);
        // log pi1(u1) + log pi2(u2 | u1) + log pi3(u3 | u1, u2): the entry of
        // table `t` sits at the index of the tuple's first `t + 1` digits.
        let log_init = (0..k)
            .map(|c| {
                (0..r)
                    .map(|t| prepared.log_boundary[t][c / n.pow((r - 1 - t) as u32)])
                    .sum()
            })
            .collect();
        let max_m = model.emissions.iter().map(|e| e.num_components()).max().unwrap_or(0);
        Self {
            r,
            n,
            k,
            keep: k / n,
            log_init,
            log_trans: prepared.log_trans,
            emissions: prepared.emissions,
            max_m,
        }
    }

    fn expectations(&self, obs: &FeatureSequence<F>) -> Result<Stats<F>> {
        let (r, n, k, keep, mm) = (self.r, self.n, self.k, self.keep, self.max_m);
        let t_len = obs.num_frames();

        let mut terms = vec![F::neg_infinity(); t_len * n * mm];
        let mut lb = vec![F::zero(); t_len * n];
        for (t, x) in obs.rows().enumerate() {
            for (j, e) in self.emissions.iter().enumerate() {
                let slot = &mut terms[(t * n + j) * mm..][..e.num_components()];
                e.component_log_terms(x, slot);
                lb[t * n + j] = log_sum_exp(slot);
            }
        }

        let f0 = r - 1;
        let steps = t_len - f0;
        let mut alpha = vec![F::zero(); steps * k];
        for c in 0..k {
            let mut a = self.log_init[c] + lb[f0 * n + c % n];
            for s in 0..f0 {
                a = a + lb[s * n + tuple_digit(c, s, r, n)];
            }
            alpha[c] = a;
        }
        for i in 1..steps {
            let t = f0 + i;
            let (prev, cur) = alpha.split_at_mut(i * k);
            let prev = &prev[(i - 1) * k..];
            for (c, slot) in cur[..k].iter_mut().enumerate() {
                let (rest, w) = (c / n, c % n);
                let mut acc = LogAccumulator::new();
                for h1 in 0..n {
                    let p = h1 * keep + rest;
                    acc.add(prev[p] + self.log_trans[p * n + w]);
                }
                *slot = acc.value() + lb[t * n + w];
            }
        }
        let log_likelihood = log_sum_exp(&alpha[(steps - 1) * k..]);
        if !log_likelihood.is_finite() {
            return Err(Error::InvalidModel(
                "a training sequence has zero likelihood under the model".into(),
            ));
        }

        let mut beta = vec![F::zero(); steps * k];
        for i in (0..steps - 1).rev() {
            let t = f0 + i;
            let (cur, next) = beta.split_at_mut((i + 1) * k);
            let next = &next[..k];
            for (c, slot) in cur[i * k..].iter_mut().enumerate() {
                let base = (c % keep) * n;
                let mut acc = LogAccumulator::new();
                for w in 0..n {
                    acc.add(self.log_trans[c * n + w] + lb[(t + 1) * n + w] + next[base + w]);
                }
                *slot = acc.value();
            }
        }

        let mut trans = vec![F::zero(); k * n];
        let mut occupancy = vec![F::zero(); t_len * n];
        for i in 0..steps {
            let t = f0 + i;
            for c in 0..k {
                let a = alpha[i * k + c];
                if a == F::neg_infinity() {
                    continue;
                }
                let gamma = (a + beta[i * k + c] - log_likelihood).exp();
                occupancy[t * n + c % n] = occupancy[t * n + c % n] + gamma;
                if i == 0 {
                    for s in 0..f0 {
                        let j = tuple_digit(c, s, r, n);
                        occupancy[s * n + j] = occupancy[s * n + j] + gamma;
                    }
                }
                if i + 1 < steps {
                    let base = (c % keep) * n;
                    for w in 0..n {
                        let xi = (a + self.log_trans[c * n + w] + lb[(t + 1) * n + w] + beta[(i + 1) * k + base + w]
                            - log_likelihood)
                            .exp();
                        trans[c * n + w] = trans[c * n + w] + xi;
                    }
                }
            }
        }
        let start = (0..k)
            .map(|c| (alpha[c] + beta[c] - log_likelihood).exp())
            .collect();

        let dim = obs.dim();
        let mut mixtures: Vec<MixtureAccumulator<F>> = self
            .emissions
            .iter()
            .map(|e| MixtureAccumulator::new(e.num_components(), dim))
            .collect();
        for (t, x) in obs.rows().enumerate() {
            for (j, acc) in mixtures.iter_mut().enumerate() {
                let occ = occupancy[t * n + j];
                if occ > F::zero() {
                    let m = self.emissions[j].num_components();
                    acc.add_frame(x, &terms[(t * n + j) * mm..][..m], lb[t * n + j], occ);
                }
            }
        }

        Ok(Stats {
            log_likelihood,
            trans,
            start,
            mixtures,
        })
    }
}

impl<F: Scalar> Stats<F> {
    fn merge(&mut self, other: &Self) {
        self.log_likelihood = self.log_likelihood + other.log_likelihood;
        for (a, &b) in self.trans.iter_mut().zip(&other.trans) {
            *a = *a + b;
        }
        for (a, &b) in self.start.iter_mut().zip(&other.start) {
            *a = *a + b;
        }
        for (a, b) in self.mixtures.iter_mut().zip(&other.mixtures) {
            a.merge(b);
        }
    }
}

/// Floors and normalizes consecutive rows of `n` counts in place.
fn normalize_rows<F: Scalar>(counts: &mut [F], n: usize) {
    let floor = F::lit(PROBABILITY_FLOOR);
    for row in counts.chunks_mut(n) {
        row.iter_mut().for_each(|v| *v = *v + floor);
        let total: F = row.iter().copied().sum();
        row.iter_mut().for_each(|v| *v = *v / total);
    }
}

fn e_step<F: Scalar>(model: &HmmModel<F>, data: &[FeatureSequence<F>]) -> Result<Stats<F>> {
    let composite = Composite::new(model);
    // Gather per-sequence statistics in parallel, then reduce in input order
    // so the result does not depend on scheduling.
    let per_seq: Vec<Stats<F>> = data
        .par_iter()
        .map(|o| composite.expectations(o))
        .collect::<Result<_>>()?;
    let mut iter = per_seq.into_iter();
    let mut total = iter.next().expect("nonempty training data");
    for s in iter {
        total.merge(&s);
    }
    Ok(total)
}

fn m_step<F: Scalar>(model: &HmmModel<F>, stats: &Stats<F>, floor: &[F]) -> Result<HmmModel<F>> {
    let (r, n) = (model.order, model.num_states);
    let k = n.pow(r as u32);

    let mut trans = stats.trans.clone();
    normalize_rows(&mut trans, n);

    // Boundary table `t` conditions on the first `t` states; its counts are
    // the initial composite posterior summed over the remaining digits.
    let mut tables: Vec<Vec<F>> = (0..r)
        .map(|t| {
            let mut counts = vec![F::zero(); n.pow(t as u32 + 1)];
            let div = n.pow((r - 1 - t) as u32);
            for c in 0..k {
                counts[c / div] = counts[c / div] + stats.start[c];
            }
            normalize_rows(&mut counts, n);
            counts
        })
        .collect();
    let pi3 = (r >= 3).then(|| tables.pop().expect("pi3"));
    let pi2 = (r >= 2).then(|| tables.pop().expect("pi2"));
    let pi1 = tables.pop().expect("pi1");

    let emissions = stats
        .mixtures
        .iter()
        .zip(&model.emissions)
        .map(|(acc, prev)| acc.finish(prev, floor))
        .collect();
    HmmModel::new(
        BoundaryDistributions { pi1, pi2, pi3 },
        TransitionTensor::new(r, n, trans)?,
        emissions,
    )
}

fn check_data<F: Scalar>(model: &HmmModel<F>, data: &[FeatureSequence<F>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training sequences"));
    }
    for seq in data {
        if seq.dim() != model.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: model.feature_dim,
                got: seq.dim(),
            });
        }
        if seq.num_frames() < model.order {
            return Err(Error::InsufficientData(format!(
                "sequence of {} frames is shorter than the model order {}",
                seq.num_frames(),
                model.order
            )));
        }
    }
    Ok(())
}

/// Runs EM from `init` until the relative improvement of the total
/// log-likelihood drops below `rel_tol` or `max_iters` re-estimations have
/// been applied.
pub fn train_baum_welch<F: Scalar>(
    init: &HmmModel<F>,
    data: &[FeatureSequence<F>],
    opts: &TrainOptions,
) -> Result<TrainOutcome<F>> {
    validate_model(init).into_result()?;
    check_data(init, data)?;
    let floor = variance_floor(data, opts.variance_floor_ratio)?;

    let mut model = init.clone();
    let mut trace = Vec::with_capacity(opts.max_iters + 1);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let stats = e_step(&model, data)?;
        let ll = stats.log_likelihood;
        if let Some(&prev) = trace.last() {
            converged = relative_gain(prev, ll) < F::lit(opts.rel_tol);
        }
        trace.push(ll);
        if converged || iterations == opts.max_iters {
            break;
        }
        model = m_step(&model, &stats, &floor)?;
        iterations += 1;
    }
    Ok(TrainOutcome {
        model,
        trace,
        iterations,
        converged,
    })
}

/// Sum of forward log-likelihoods over `data`.
pub fn total_log_likelihood<F: Scalar>(model: &HmmModel<F>, data: &[FeatureSequence<F>]) -> Result<F> {
    let prepared = PreparedModel::new(model);
    let scores: Vec<F> = data
        .par_iter()
        .map(|o| prepared.forward_log_likelihood(o))
        .collect::<Result<_>>()?;
    Ok(scores.into_iter().sum())
}
