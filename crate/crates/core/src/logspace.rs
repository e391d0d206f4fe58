//! Natural-log probability helpers.
//!
//! Zero probability is represented by `-inf` ([`log_zero`]); every helper here
//! treats it as an absorbing value rather than producing `NaN`.

use crate::scalar::Scalar;

/// Log of probability zero.
#[inline]
pub fn log_zero<F: Scalar>() -> F {
    F::neg_infinity()
}

/// `true` for the log-zero sentinel.
#[inline]
pub fn is_log_zero<F: Scalar>(x: F) -> bool {
    x == F::neg_infinity()
}

/// `ln(p)` with `ln(0) = -inf`.
#[inline]
pub fn safe_ln<F: Scalar>(p: F) -> F {
    if p <= F::zero() {
        log_zero()
    } else {
        p.ln()
    }
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add<F: Scalar>(a: F, b: F) -> F {
    if is_log_zero(a) {
        return b;
    }
    if is_log_zero(b) {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(x)))` over a slice; empty or all-zero input gives log zero.
pub fn log_sum_exp<F: Scalar>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if is_log_zero(max) {
        return log_zero();
    }
    let sum: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogAccumulator<F> {
    max: F,
    sum: F,
}

impl<F: Scalar> Default for LogAccumulator<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> LogAccumulator<F> {
    pub fn new() -> Self {
        Self {
            max: F::neg_infinity(),
            sum: F::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: F) {
        if is_log_zero(x) {
            return;
        }
        if x <= self.max {
            self.sum = self.sum + (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + F::one();
            self.max = x;
        }
    }

    pub fn value(&self) -> F {
        if is_log_zero(self.max) {
            log_zero()
        } else {
            self.max + self.sum.ln()
        }
    }
}
