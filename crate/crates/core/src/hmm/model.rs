use std::fmt;

use super::gmm::GmmEmission;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Highest supported Markov order.
pub const MAX_ORDER: usize = 3;

/// Index of a state tuple `(u_1, .., u_k)` with `u_1` most significant.
#[inline]
pub(crate) fn tuple_index(states: &[usize], num_states: usize) -> usize {
    states.iter().fold(0, |acc, &s| acc * num_states + s)
}

/// Digit `pos` (0 = oldest) of a `len`-digit tuple index.
#[inline]
pub(crate) fn tuple_digit(index: usize, pos: usize, len: usize, num_states: usize) -> usize {
    (index / num_states.pow((len - 1 - pos) as u32)) % num_states
}

pub(crate) fn tuple_digits(index: usize, len: usize, num_states: usize) -> Vec<usize> {
    (0..len).map(|p| tuple_digit(index, p, len, num_states)).collect()
}

/// Order-`r` transition probabilities: a row of `N` successor probabilities
/// for every history `(q_{t-r}, .., q_{t-1})`, stored row-major as an
/// `N^r x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor<F> {
    pub order: usize,
    pub num_states: usize,
    pub probs: Vec<F>,
}

impl<F: Scalar> TransitionTensor<F> {
    pub fn new(order: usize, num_states: usize, probs: Vec<F>) -> Result<Self> {
        check_order(order)?;
        let expected = num_states.pow(order as u32 + 1);
        if num_states == 0 || probs.len() != expected {
            return Err(Error::InvalidModel(format!(
                "order-{order} transitions over {num_states} states need {expected} entries, got {}",
                probs.len()
            )));
        }
        Ok(Self {
            order,
            num_states,
            probs,
        })
    }

    pub fn uniform(order: usize, num_states: usize) -> Result<Self> {
        let p = F::one() / F::from_usize_lossy(num_states.max(1));
        Self::new(order, num_states, vec![p; num_states.pow(order as u32 + 1)])
    }

    pub fn num_histories(&self) -> usize {
        self.num_states.pow(self.order as u32)
    }

    pub fn row(&self, history: usize) -> &[F] {
        let n = self.num_states;
        &self.probs[history * n..(history + 1) * n]
    }

    pub fn row_mut(&mut self, history: usize) -> &mut [F] {
        let n = self.num_states;
        &mut self.probs[history * n..(history + 1) * n]
    }

    /// `P(next | history)` with `history` oldest first.
    pub fn get(&self, history: &[usize], next: usize) -> F {
        self.row(tuple_index(history, self.num_states))[next]
    }
}

/// Distributions of the first `r` states: `pi1(q1)`, `pi2(q2 | q1)` (order 2
/// and up) and `pi3(q3 | q1, q2)` (order 3). Conditional tables are row-major
/// with the conditioning tuple as row index.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDistributions<F> {
    pub pi1: Vec<F>,
    pub pi2: Option<Vec<F>>,
    pub pi3: Option<Vec<F>>,
}

impl<F: Scalar> BoundaryDistributions<F> {
    pub fn uniform(order: usize, num_states: usize) -> Self {
        let p = F::one() / F::from_usize_lossy(num_states.max(1));
        let n2 = num_states * num_states;
        Self {
            pi1: vec![p; num_states],
            pi2: (order >= 2).then(|| vec![p; n2]),
            pi3: (order >= 3).then(|| vec![p; n2 * num_states]),
        }
    }

    /// Conditional distribution used at 0-based time `t < order`, as a table
    /// whose rows are indexed by the `t` preceding states.
    pub(crate) fn table(&self, t: usize) -> &[F] {
        match t {
            0 => &self.pi1,
            1 => self.pi2.as_deref().expect("pi2 present for order >= 2"),
            2 => self.pi3.as_deref().expect("pi3 present for order 3"),
            _ => unreachable!("boundary distributions cover at most three steps"),
        }
    }
}

/// Ergodic order-`r` HMM with a diagonal-covariance mixture per state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel<F> {
    pub order: usize,
    pub num_states: usize,
    pub boundary: BoundaryDistributions<F>,
    pub transitions: TransitionTensor<F>,
    pub emissions: Vec<GmmEmission<F>>,
    pub feature_dim: usize,
}

impl<F: Scalar> HmmModel<F> {
    /// Assembles a model after checking that all shapes agree. Probability
    /// constraints are checked by [`validate_model`].
    pub fn new(
        boundary: BoundaryDistributions<F>,
        transitions: TransitionTensor<F>,
        emissions: Vec<GmmEmission<F>>,
    ) -> Result<Self> {
        let model = Self {
            order: transitions.order,
            num_states: transitions.num_states,
            feature_dim: emissions.first().map_or(0, GmmEmission::dim),
            boundary,
            transitions,
            emissions,
        };
        let report = model.shape_violations();
        if let Some(v) = report.first() {
            return Err(Error::InvalidModel(v.to_string()));
        }
        Ok(model)
    }

    pub fn num_mixtures(&self) -> usize {
        self.emissions.first().map_or(0, GmmEmission::num_components)
    }

    fn shape_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.num_states;
        let mut shape = |m: String| out.push(Violation::Shape(m));
        if !(1..=MAX_ORDER).contains(&self.order) {
            shape(format!("order {} not in 1..={MAX_ORDER}", self.order));
            return out;
        }
        if n == 0 {
            shape("model has no states".into());
            return out;
        }
        if self.transitions.order != self.order || self.transitions.num_states != n {
            shape("transition tensor order/state count disagree with model".into());
        }
        if self.transitions.probs.len() != n.pow(self.order as u32 + 1) {
            shape(format!(
                "transition tensor has {} entries, expected {}",
                self.transitions.probs.len(),
                n.pow(self.order as u32 + 1)
            ));
        }
        let b = &self.boundary;
        if b.pi1.len() != n {
            shape(format!("pi1 has {} entries, expected {n}", b.pi1.len()));
        }
        match (&b.pi2, self.order >= 2) {
            (Some(p), true) if p.len() != n * n => shape(format!("pi2 has {} entries, expected {}", p.len(), n * n)),
            (None, true) => shape("pi2 missing for order >= 2".into()),
            (Some(_), false) => shape("pi2 present for a first-order model".into()),
            _ => {}
        }
        match (&b.pi3, self.order >= 3) {
            (Some(p), true) if p.len() != n * n * n => {
                shape(format!("pi3 has {} entries, expected {}", p.len(), n * n * n))
            }
            (None, true) => shape("pi3 missing for order 3".into()),
            (Some(_), false) => shape("pi3 present for order < 3".into()),
            _ => {}
        }
        if self.emissions.len() != n {
            shape(format!("{} emission mixtures for {n} states", self.emissions.len()));
        }
        for (j, e) in self.emissions.iter().enumerate() {
            if let Err(err) = e.check_shape() {
                shape(format!("state {j}: {err}"));
            } else if e.dim() != self.feature_dim {
                shape(format!("state {j} has dimension {}, model {}", e.dim(), self.feature_dim));
            }
        }
        out
    }

    /// Applies a state relabeling: new state `perm[j]` takes the role of old
    /// state `j`. Likelihoods are unchanged.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_states;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidModel("not a permutation of the states".into()));
        }
        let remap = |idx: usize, len: usize| -> usize {
            let digits = tuple_digits(idx, len, n);
            tuple_index(&digits.iter().map(|&d| perm[d]).collect::<Vec<_>>(), n)
        };
        let permute_table = |table: &[F], len: usize| -> Vec<F> {
            let mut out = vec![F::zero(); table.len()];
            for (i, &v) in table.iter().enumerate() {
                out[remap(i, len)] = v;
            }
            out
        };
        let r = self.order;
        let mut emissions = self.emissions.clone();
        for (j, e) in self.emissions.iter().enumerate() {
            emissions[perm[j]] = e.clone();
        }
        HmmModel::new(
            BoundaryDistributions {
                pi1: permute_table(&self.boundary.pi1, 1),
                pi2: self.boundary.pi2.as_ref().map(|p| permute_table(p, 2)),
                pi3: self.boundary.pi3.as_ref().map(|p| permute_table(p, 3)),
            },
            TransitionTensor::new(r, n, permute_table(&self.transitions.probs, r + 1))?,
            emissions,
        )
    }
}

pub(crate) fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("order {order} not in 1..={MAX_ORDER}")))
    }
}

/// A hidden state path `q_1..q_T` (0-based state indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence {
    pub states: Vec<usize>,
}

impl StateSequence {
    pub fn new(states: Vec<usize>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyInput("state sequence has no states"));
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Probability table named in a [`Violation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableName {
    Pi1,
    Pi2,
    Pi3,
    Transitions,
    MixtureWeights,
}

impl fmt::Display for TableName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableName::Pi1 => "pi1",
            TableName::Pi2 => "pi2",
            TableName::Pi3 => "pi3",
            TableName::Transitions => "transitions",
            TableName::MixtureWeights => "mixture weights",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    /// A distribution whose entries do not sum to one; `index` is the
    /// conditioning tuple (or the state, for mixture weights).
    RowSum {
        table: TableName,
        index: Vec<usize>,
        sum: f64,
    },
    InvalidProbability {
        table: TableName,
        index: Vec<usize>,
        value: f64,
    },
    Variance {
        state: usize,
        mixture: usize,
        dim: usize,
        value: f64,
    },
    NonFiniteMean {
        state: usize,
        mixture: usize,
        dim: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(m) => write!(f, "shape: {m}"),
            Violation::RowSum { table, index, sum } => {
                write!(f, "{table} row {index:?} sums to {sum}")
            }
            Violation::InvalidProbability { table, index, value } => {
                write!(f, "{table} entry {index:?} is {value}")
            }
            Violation::Variance { state, mixture, dim, value } => write!(
                f,
                "variance of state {state}, mixture {mixture}, dim {dim} is {value}"
            ),
            Violation::NonFiniteMean { state, mixture, dim } => {
                write!(f, "mean of state {state}, mixture {mixture}, dim {dim} is not finite")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self.to_string()))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural and stochastic invariant of `model`, reporting
/// all violations rather than stopping at the first.
pub fn validate_model<F: Scalar>(model: &HmmModel<F>) -> ValidationReport {
    let mut violations = model.shape_violations();
    if !violations.is_empty() {
        return ValidationReport { violations };
    }
    let n = model.num_states;
    let tol = F::stochastic_tolerance();

    let mut check_rows = |table: TableName, values: &[F], prefix_len: usize| {
        for (row_idx, row) in values.chunks_exact(n).enumerate() {
            let index = tuple_digits(row_idx, prefix_len, n);
            for (k, &p) in row.iter().enumerate() {
                if !(p >= F::zero() && p <= F::one()) {
                    let mut at = index.clone();
                    at.push(k);
                    violations.push(Violation::InvalidProbability {
                        table,
                        index: at,
                        value: p.to_f64_lossy(),
                    });
                }
            }
            let sum: F = row.iter().copied().sum();
            if !((sum - F::one()).abs() <= tol) {
                violations.push(Violation::RowSum {
                    table,
                    index,
                    sum: sum.to_f64_lossy(),
                });
            }
        }
    };
    check_rows(TableName::Pi1, &model.boundary.pi1, 0);
    if let Some(p) = &model.boundary.pi2 {
        check_rows(TableName::Pi2, p, 1);
    }
    if let Some(p) = &model.boundary.pi3 {
        check_rows(TableName::Pi3, p, 2);
    }
    check_rows(TableName::Transitions, &model.transitions.probs, model.order);

    for (j, e) in model.emissions.iter().enumerate() {
        for (m, &w) in e.weights.iter().enumerate() {
            if !(w >= F::zero() && w <= F::one()) {
                violations.push(Violation::InvalidProbability {
                    table: TableName::MixtureWeights,
                    index: vec![j, m],
                    value: w.to_f64_lossy(),
                });
            }
        }
        let sum: F = e.weights.iter().copied().sum();
        if !((sum - F::one()).abs() <= tol) {
            violations.push(Violation::RowSum {
                table: TableName::MixtureWeights,
                index: vec![j],
                sum: sum.to_f64_lossy(),
            });
        }
        for m in 0..e.num_components() {
            for d in 0..e.dim() {
                let v = e.variances[m][d];
                if !(v > F::zero() && v.is_finite()) {
                    violations.push(Violation::Variance {
                        state: j,
                        mixture: m,
                        dim: d,
                        value: v.to_f64_lossy(),
                    });
                }
                if !e.means[m][d].is_finite() {
                    violations.push(Violation::NonFiniteMean {
                        state: j,
                        mixture: m,
                        dim: d,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}
