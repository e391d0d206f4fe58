//! Data-driven starting point for training.

use super::gmm::{mixture_from_clusters, variance_floor, GmmEmission};
use super::kmeans::kmeans;
use super::model::{check_order, BoundaryDistributions, HmmModel, TransitionTensor};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::prng::SplitMix64;
use crate::scalar::Scalar;

/// Variance floor, relative to the global per-dimension variance, used when
/// none is given explicitly.
pub const DEFAULT_VARIANCE_FLOOR_RATIO: f64 = 1e-3;

const KMEANS_MAX_ITERS: usize = 50;

/// Builds an initial model: k-means over all frames gives one cluster per
/// state, a second k-means inside each cluster gives its mixture components.
/// Transitions and boundary distributions start uniform.
pub fn init_model<F: Scalar>(
    order: usize,
    num_states: usize,
    num_mixtures: usize,
    data: &[FeatureSequence<F>],
    seed: u64,
) -> Result<HmmModel<F>> {
    check_order(order)?;
    if num_states == 0 || num_mixtures == 0 {
        return Err(Error::InvalidModel("need at least one state and one mixture component".into()));
    }
    let floor = variance_floor(data, DEFAULT_VARIANCE_FLOOR_RATIO)?;
    let points: Vec<&[F]> = data.iter().flat_map(|s| s.rows()).collect();
    if points.len() < num_states * num_mixtures {
        return Err(Error::InsufficientData(format!(
            "{} frames for {num_states} states x {num_mixtures} mixtures",
            points.len()
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let states = kmeans(&points, num_states, &mut rng, KMEANS_MAX_ITERS);
    let mut emissions: Vec<GmmEmission<F>> = Vec::with_capacity(num_states);
    for j in 0..num_states {
        let members: Vec<&[F]> = points
            .iter()
            .zip(&states.assignments)
            .filter(|&(_, &a)| a == j)
            .map(|(&p, _)| p)
            .collect();
        // A state whose centroid duplicates another's gets no frames; seed it
        // from the whole data set instead.
        let pool = if members.is_empty() { &points } else { &members };
        let mut sub = rng.substream(j as u64);
        emissions.push(mixture_from_clusters(pool, num_mixtures, &floor, &mut sub));
    }

    HmmModel::new(
        BoundaryDistributions::uniform(order, num_states),
        TransitionTensor::uniform(order, num_states)?,
        emissions,
    )
}
