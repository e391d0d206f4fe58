//! Drawing state paths and observations from a model.

use super::gmm::GmmEmission;
use super::model::{tuple_index, HmmModel, StateSequence};
use crate::error::Result;
use crate::features::{FeatureSequence, Fingerprint};
use crate::prng::SplitMix64;
use crate::scalar::Scalar;

/// Index drawn from the (unnormalized) weights `p`.
pub(crate) fn categorical<F: Scalar>(p: &[F], rng: &mut SplitMix64) -> usize {
    let total: f64 = p.iter().map(|v| v.to_f64_lossy()).sum();
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, v) in p.iter().enumerate() {
        let v = v.to_f64_lossy();
        if v > 0.0 {
            last_positive = i;
        }
        acc += v;
        if acc > target {
            return i;
        }
    }
    last_positive
}

/// One observation vector from a diagonal mixture.
pub fn sample_gmm<F: Scalar>(g: &GmmEmission<F>, rng: &mut SplitMix64) -> Vec<F> {
    let m = categorical(&g.weights, rng);
    g.means[m]
        .iter()
        .zip(&g.variances[m])
        .map(|(&mu, &var)| mu + var.sqrt() * F::lit(rng.normal()))
        .collect()
}

/// Draws a state path of length `len` and its observations.
pub fn sample_hmm<F: Scalar>(
    model: &HmmModel<F>,
    len: usize,
    fingerprint: Fingerprint,
    rng: &mut SplitMix64,
) -> Result<(StateSequence, FeatureSequence<F>)> {
    let n = model.num_states;
    let r = model.order;
    let mut states: Vec<usize> = Vec::with_capacity(len);
    let mut frames = Vec::with_capacity(len * model.feature_dim);
    for t in 0..len {
        let row = if t < r {
            let ctx = tuple_index(&states, n);
            &model.boundary.table(t)[ctx * n..(ctx + 1) * n]
        } else {
            model.transitions.row(tuple_index(&states[t - r..], n))
        };
        let q = categorical(row, rng);
        states.push(q);
        frames.extend(sample_gmm(&model.emissions[q], rng));
    }
    Ok((
        StateSequence::new(states)?,
        FeatureSequence::new(frames, model.feature_dim, fingerprint)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::model::{BoundaryDistributions, TransitionTensor};

    #[test]
    fn categorical_skips_zero_weights() {
        let mut g = SplitMix64::new(3);
        for _ in 0..1000 {
            let i = categorical(&[0.0, 0.5, 0.0, 0.5], &mut g);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn empirical_transition_frequencies() {
        // Order 2, two states: after (0, 1) go to 0 with probability 0.8.
        let mut probs = vec![0.5; 8];
        probs[2] = 0.8;
        probs[3] = 0.2;
        let m = HmmModel::new(
            BoundaryDistributions::uniform(2, 2),
            TransitionTensor::new(2, 2, probs).unwrap(),
            vec![GmmEmission::single(vec![0.0], vec![1.0]).unwrap(); 2],
        )
        .unwrap();
        let mut g = SplitMix64::new(9);
        let (q, o) = sample_hmm(&m, 20000, Fingerprint::default(), &mut g).unwrap();
        assert_eq!(o.num_frames(), 20000);
        let (mut hits, mut total) = (0, 0);
        for w in q.states.windows(3) {
            if w[0] == 0 && w[1] == 1 {
                total += 1;
                hits += usize::from(w[2] == 0);
            }
        }
        let freq = hits as f64 / total as f64;
        assert!((freq - 0.8).abs() < 0.03, "{freq}");
    }
}
