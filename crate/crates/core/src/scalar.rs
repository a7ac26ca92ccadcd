//! Scalar abstraction shared by the deterministic math (impact laws, special
//! functions, Gaussian closed forms).
//!
//! Everything in those modules is written against [`Scalar`] so it can be
//! evaluated in `f32` for quick plotting or in `f64` where the tolerances
//! below 1e-10 matter. The data-side modules (ingestion, simulation,
//! estimation) work in `f64` only.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub(crate) fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry = carry + ((sum - t) + x);
        } else {
            carry = carry + ((x - t) + sum);
        }
        sum = t;
    }
    sum + carry
}

/// Order-independent sum.
///
/// Positive and negative parts are sorted by magnitude and accumulated
/// separately, so the result is bit-identical under any permutation of the
/// input and exactly antisymmetric under negation of every term.
pub fn canonical_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for x in values {
        if x > T::zero() {
            pos.push(x);
        } else if x < T::zero() {
            neg.push(-x);
        } else if x.is_nan() {
            return x;
        }
    }
    let by_value = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    pos.sort_by(by_value);
    neg.sort_by(by_value);
    compensated_sum(pos) - compensated_sum(neg)
}
