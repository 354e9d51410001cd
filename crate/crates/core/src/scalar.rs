//! Scalar abstractions shared by the numeric kernels.
//!
//! The DPO kernel needs transcendental functions and is generic over
//! [`num_traits::Float`] (`f32`, `f64`). The metric evaluator only needs
//! field arithmetic on counts, so it is generic over [`Ratio`], which is
//! implemented for the floats and for exact rationals.

use std::fmt::Debug;

use num_rational::Ratio as Rational;
use num_traits::{Float, Num};

/// Field-like scalar that can represent count ratios.
///
/// Implemented for `f32`, `f64` and the `num_rational` rationals over
/// `i64`/`i128`, so metric code can be checked exactly against
/// hand-computed fractions.
pub trait Ratio: Num + Clone + PartialOrd + Debug {
    /// Converts a count into the scalar.
    fn from_count(n: usize) -> Self;

    /// `num / den`, or zero when `den == 0`.
    fn ratio_or_zero(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }

    /// Lossy view used for reports.
    fn to_f64(&self) -> f64;
}

impl Ratio for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Ratio for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Ratio for Rational<i64> {
    fn from_count(n: usize) -> Self {
        Rational::from_integer(i64::try_from(n).expect("count fits in i64"))
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Ratio for Rational<i128> {
    fn from_count(n: usize) -> Self {
        Rational::from_integer(n as i128)
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<F: Float>(x: F) -> F {
    let zero = F::zero();
    let pos = if x > zero { x } else { zero };
    pos + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function `1 / (1 + e^-x)`.
pub fn sigmoid<F: Float>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Mean of `values` using pairwise summation in slice order.
///
/// Returns zero for an empty slice.
pub fn pairwise_mean<F: Float>(values: &[F]) -> F {
    if values.is_empty() {
        return F::zero();
    }
    pairwise_sum(values) / F::from(values.len()).expect("length representable")
}

fn pairwise_sum<F: Float>(values: &[F]) -> F {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(F::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
