//! Diagonal-covariance Gaussian mixtures: the per-state emission density and
//! the stand-alone mixture classifier used as a baseline.

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::{log_sum_exp, log_zero, safe_ln};
use crate::prng::SplitMix64;
use crate::scalar::Scalar;

/// Absolute lower bound on any variance produced by training.
pub const MIN_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GmmEmission<F> {
    pub weights: Vec<F>,
    /// `M x D`.
    pub means: Vec<Vec<F>>,
    /// `M x D` diagonal variances.
    pub variances: Vec<Vec<F>>,
}

impl<F: Scalar> GmmEmission<F> {
    /// Checks shapes only; stochastic and positivity constraints are reported
    /// by model validation.
    pub fn new(weights: Vec<F>, means: Vec<Vec<F>>, variances: Vec<Vec<F>>) -> Result<Self> {
        let g = Self {
            weights,
            means,
            variances,
        };
        g.check_shape()?;
        Ok(g)
    }

    /// Single component with the given mean and variance.
    pub fn single(mean: Vec<F>, variance: Vec<F>) -> Result<Self> {
        Self::new(vec![F::one()], vec![mean], vec![variance])
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 {
            return Err(Error::InvalidModel("mixture has no components".into()));
        }
        if self.means.len() != m || self.variances.len() != m {
            return Err(Error::InvalidModel(format!(
                "mixture has {m} weights but {} means and {} variance rows",
                self.means.len(),
                self.variances.len()
            )));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::InvalidModel("mixture dimension is zero".into()));
        }
        if self.means.iter().chain(&self.variances).any(|r| r.len() != d) {
            return Err(Error::InvalidModel("ragged mixture parameter rows".into()));
        }
        Ok(())
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `log sum_m w_m N(x; mu_m, diag(var_m))`.
    pub fn log_density(&self, x: &[F]) -> Result<F> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(PreparedGmm::new(self).log_density(x))
    }

    /// Converts every parameter to another scalar type.
    pub fn map_scalars<G: Scalar>(&self, f: impl Fn(F) -> G) -> GmmEmission<G> {
        GmmEmission {
            weights: self.weights.iter().map(|&w| f(w)).collect(),
            means: self.means.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect(),
            variances: self
                .variances
                .iter()
                .map(|r| r.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }
}

/// Free-function form of [`GmmEmission::log_density`].
pub fn gmm_log_density<F: Scalar>(emission: &GmmEmission<F>, x: &[F]) -> Result<F> {
    emission.log_density(x)
}

/// Mixture with per-component constants precomputed for repeated scoring.
#[derive(Debug, Clone)]
pub(crate) struct PreparedGmm<F> {
    /// `log w_m - 0.5 sum_d log(2 pi var_md)`.
    offsets: Vec<F>,
    means: Vec<Vec<F>>,
    inv_vars: Vec<Vec<F>>,
}

impl<F: Scalar> PreparedGmm<F> {
    pub(crate) fn new(g: &GmmEmission<F>) -> Self {
        let two_pi = F::TAU();
        let half = F::lit(0.5);
        let offsets = g
            .weights
            .iter()
            .zip(&g.variances)
            .map(|(&w, var)| {
                let log_det: F = var.iter().map(|&v| (two_pi * v).ln()).sum();
                safe_ln(w) - half * log_det
            })
            .collect();
        Self {
            offsets,
            means: g.means.clone(),
            inv_vars: g
                .variances
                .iter()
                .map(|r| r.iter().map(|&v| v.recip()).collect())
                .collect(),
        }
    }

    pub(crate) fn num_components(&self) -> usize {
        self.offsets.len()
    }

    pub(crate) fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Per-component `log w_m + log N_m(x)` into `out`.
    #[inline]
    pub(crate) fn component_log_terms(&self, x: &[F], out: &mut [F]) {
        let half = F::lit(0.5);
        for (m, slot) in out.iter_mut().enumerate() {
            let offset = self.offsets[m];
            if offset == F::neg_infinity() {
                *slot = log_zero();
                continue;
            }
            let mut q = F::zero();
            for ((&xi, &mu), &iv) in x.iter().zip(&self.means[m]).zip(&self.inv_vars[m]) {
                let d = xi - mu;
                q = q + d * d * iv;
            }
            *slot = offset - half * q;
        }
    }

    #[inline]
    pub(crate) fn log_density(&self, x: &[F]) -> F {
        let mut terms = vec![F::zero(); self.num_components()];
        self.component_log_terms(x, &mut terms);
        log_sum_exp(&terms)
    }
}

/// Per-dimension variance floor: `max(ratio * global variance, MIN_VARIANCE)`.
pub fn variance_floor<F: Scalar>(data: &[FeatureSequence<F>], ratio: f64) -> Result<Vec<F>> {
    let (_, var) = global_moments(data)?;
    Ok(var
        .into_iter()
        .map(|v| (F::lit(ratio) * v).max(F::lit(MIN_VARIANCE)))
        .collect())
}

/// Pooled per-dimension mean and population variance over every frame.
pub(crate) fn global_moments<F: Scalar>(data: &[FeatureSequence<F>]) -> Result<(Vec<F>, Vec<F>)> {
    let first = data.first().ok_or(Error::EmptyInput("no training sequences"))?;
    let dim = first.dim();
    let mut sum = vec![F::zero(); dim];
    let mut count = 0usize;
    for seq in data {
        if seq.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: seq.dim(),
            });
        }
        for row in seq.rows() {
            for (s, &x) in sum.iter_mut().zip(row) {
                *s = *s + x;
            }
            count += 1;
        }
    }
    let n = F::from_usize_lossy(count);
    let mean: Vec<F> = sum.into_iter().map(|s| s / n).collect();
    let mut var = vec![F::zero(); dim];
    for seq in data {
        for row in seq.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v = *v + (x - m) * (x - m);
            }
        }
    }
    var.iter_mut().for_each(|v| *v = *v / n);
    Ok((mean, var))
}

/// Options for fitting a stand-alone mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmTrainOptions {
    pub num_components: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub variance_floor_ratio: f64,
}

impl Default for GmmTrainOptions {
    fn default() -> Self {
        Self {
            num_components: 32,
            max_iters: 20,
            rel_tol: 1e-4,
            variance_floor_ratio: 1e-3,
        }
    }
}

/// Initial mixture from k-means over pooled frames: centroids as means,
/// cluster scatter as variances (floored), occupancies as weights.
pub(crate) fn mixture_from_clusters<F: Scalar>(
    points: &[&[F]],
    num_components: usize,
    floor: &[F],
    rng: &mut SplitMix64,
) -> GmmEmission<F> {
    let dim = floor.len();
    let clusters = kmeans(points, num_components, rng, 50);
    let mut counts = vec![0usize; num_components];
    let mut scatter = vec![vec![F::zero(); dim]; num_components];
    for (p, &a) in points.iter().zip(&clusters.assignments) {
        counts[a] += 1;
        for ((s, &x), &c) in scatter[a].iter_mut().zip(p.iter()).zip(&clusters.centroids[a]) {
            *s = *s + (x - c) * (x - c);
        }
    }
    // Clusters too small for a scatter estimate borrow the pooled scatter.
    let pooled: Vec<F> = {
        let n = F::from_usize_lossy(points.len().max(1));
        let mut mean = vec![F::zero(); dim];
        for p in points {
            for (m, &x) in mean.iter_mut().zip(p.iter()) {
                *m = *m + x / n;
            }
        }
        let mut v = vec![F::zero(); dim];
        for p in points {
            for ((s, &x), &m) in v.iter_mut().zip(p.iter()).zip(&mean) {
                *s = *s + (x - m) * (x - m) / n;
            }
        }
        v
    };
    let total = F::from_usize_lossy(points.len() + num_components);
    let mut weights = Vec::with_capacity(num_components);
    let mut variances = Vec::with_capacity(num_components);
    for k in 0..num_components {
        weights.push(F::from_usize_lossy(counts[k] + 1) / total);
        let var = if counts[k] >= 2 {
            let n = F::from_usize_lossy(counts[k]);
            scatter[k].iter().map(|&s| s / n).collect::<Vec<_>>()
        } else {
            pooled.clone()
        };
        variances.push(var.iter().zip(floor).map(|(&v, &f)| v.max(f)).collect());
    }
    GmmEmission {
        weights,
        means: clusters.centroids,
        variances,
    }
}

/// Fits one mixture to every frame of `data` by EM, starting from seeded
/// k-means. Returns the model and the per-iteration total log-likelihood.
pub fn train_gmm<F: Scalar>(
    data: &[FeatureSequence<F>],
    opts: &GmmTrainOptions,
    seed: u64,
) -> Result<(GmmEmission<F>, Vec<F>)> {
    let floor = variance_floor(data, opts.variance_floor_ratio)?;
    let points: Vec<&[F]> = data.iter().flat_map(|s| s.rows()).collect();
    if opts.num_components == 0 {
        return Err(Error::InsufficientData("mixture needs at least one component".into()));
    }
    if points.len() < opts.num_components {
        return Err(Error::InsufficientData(format!(
            "{} frames for {} mixture components",
            points.len(),
            opts.num_components
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut gmm = mixture_from_clusters(&points, opts.num_components, &floor, &mut rng);
    let mut trace = Vec::new();

    for iter in 0..=opts.max_iters {
        let mut acc = MixtureAccumulator::new(gmm.num_components(), floor.len());
        let prepared = PreparedGmm::new(&gmm);
        let mut terms = vec![F::zero(); gmm.num_components()];
        let mut total = F::zero();
        for x in &points {
            prepared.component_log_terms(x, &mut terms);
            let lse = log_sum_exp(&terms);
            total = total + lse;
            acc.add_frame(x, &terms, lse, F::one());
        }
        let converged = trace
            .last()
            .is_some_and(|&prev: &F| relative_gain(prev, total) < F::lit(opts.rel_tol));
        trace.push(total);
        if converged || iter == opts.max_iters {
            break;
        }
        gmm = acc.finish(&gmm, &floor);
    }
    Ok((gmm, trace))
}

pub(crate) fn relative_gain<F: Scalar>(prev: F, current: F) -> F {
    (current - prev) / prev.abs().max(F::min_positive_value())
}

/// Sufficient statistics of one mixture under soft assignments.
#[derive(Debug, Clone)]
pub(crate) struct MixtureAccumulator<F> {
    pub(crate) occupancy: Vec<F>,
    pub(crate) first: Vec<Vec<F>>,
    pub(crate) second: Vec<Vec<F>>,
}

impl<F: Scalar> MixtureAccumulator<F> {
    pub(crate) fn new(m: usize, d: usize) -> Self {
        Self {
            occupancy: vec![F::zero(); m],
            first: vec![vec![F::zero(); d]; m],
            second: vec![vec![F::zero(); d]; m],
        }
    }

    /// Adds frame `x` with state occupancy `weight`; `terms` holds the
    /// component log terms and `lse` their log-sum-exp.
    #[inline]
    pub(crate) fn add_frame(&mut self, x: &[F], terms: &[F], lse: F, weight: F) {
        if lse == F::neg_infinity() {
            return;
        }
        for (m, &term) in terms.iter().enumerate() {
            let r = weight * (term - lse).exp();
            if r <= F::zero() {
                continue;
            }
            self.occupancy[m] = self.occupancy[m] + r;
            for ((f, s), &xi) in self.first[m].iter_mut().zip(self.second[m].iter_mut()).zip(x) {
                *f = *f + r * xi;
                *s = *s + r * xi * xi;
            }
        }
    }

    pub(crate) fn merge(&mut self, other: &Self) {
        for m in 0..self.occupancy.len() {
            self.occupancy[m] = self.occupancy[m] + other.occupancy[m];
            for d in 0..self.first[m].len() {
                self.first[m][d] = self.first[m][d] + other.first[m][d];
                self.second[m][d] = self.second[m][d] + other.second[m][d];
            }
        }
    }

    /// M-step. Components with negligible occupancy keep their previous
    /// mean and variance; a state with no occupancy keeps its mixture.
    pub(crate) fn finish(&self, previous: &GmmEmission<F>, floor: &[F]) -> GmmEmission<F> {
        let total: F = self.occupancy.iter().copied().sum();
        if !(total > F::lit(1e-300)) {
            return previous.clone();
        }
        let tiny = F::lit(1e-10);
        let mut out = previous.clone();
        for m in 0..self.occupancy.len() {
            let occ = self.occupancy[m];
            out.weights[m] = occ / total;
            if occ <= tiny {
                continue;
            }
            for d in 0..floor.len() {
                let mean = self.first[m][d] / occ;
                let var = self.second[m][d] / occ - mean * mean;
                out.means[m][d] = mean;
                out.variances[m][d] = var.max(floor[d]);
            }
        }
        let wsum: F = out.weights.iter().copied().sum();
        out.weights.iter_mut().for_each(|w| *w = *w / wsum);
        out
    }
}
