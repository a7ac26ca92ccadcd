//! Functional forms of daily price impact: the signed power, the square-root
//! law for one metaorder, the (α, δ) aggregation of N simultaneous
//! metaorders, and the net-order-flow law it reduces to at α = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{canonical_sum, lit, Scalar};

/// Parameters of the aggregation ansatz Y·(Σ φ_i^{•α})^{•δ/α}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams<T> {
    pub y_ratio: T,
    pub alpha: T,
    pub delta: T,
}

impl<T: Scalar> AnsatzParams<T> {
    pub fn new(y_ratio: T, alpha: T, delta: T) -> Result<Self> {
        if !(y_ratio > T::zero()) || !y_ratio.is_finite() {
            return Err(Error::domain(format!("y_ratio must be > 0, got {y_ratio}")));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::domain(format!("alpha must be > 0, got {alpha}")));
        }
        if !(delta > T::zero() && delta <= T::one()) {
            return Err(Error::domain(format!("delta must lie in (0, 1], got {delta}")));
        }
        Ok(Self { y_ratio, alpha, delta })
    }

    /// The net-order-flow square-root law: α = 1, δ = 1/2.
    pub fn net_flow_sqrt(y_ratio: T) -> Result<Self> {
        Self::new(y_ratio, T::one(), lit(0.5))
    }
}

/// Signed power sign(x)·|x|^p.
#[inline]
pub fn sign_power<T: Scalar>(x: T, p: T) -> T {
    if x == T::zero() || x.is_nan() {
        return x;
    }
    let magnitude = if p == T::one() {
        x.abs()
    } else if p == lit(0.5) {
        x.abs().sqrt()
    } else {
        x.abs().powf(p)
    };
    if x > T::zero() {
        magnitude
    } else {
        -magnitude
    }
}

/// Square-root law Y·φ^{•1/2} for a single metaorder.
#[inline]
pub fn sqrt_law<T: Scalar>(phi: T, y_ratio: T) -> T {
    y_ratio * sign_power(phi, lit(0.5))
}

/// Aggregate impact Y·(Σ φ_i^{•α})^{•δ/α} of simultaneous metaorders.
///
/// The inner sum is order-independent, so the result is exactly invariant
/// under permutation of `phis` and exactly odd under `phis -> -phis`.
pub fn aggregate_impact<T: Scalar>(phis: &[T], params: &AnsatzParams<T>) -> T {
    let inner = canonical_sum(phis.iter().map(|&phi| sign_power(phi, params.alpha)));
    params.y_ratio * sign_power(inner, params.delta / params.alpha)
}

/// Net-flow impact Y·Φ^{•1/2}.
#[inline]
pub fn global_impact<T: Scalar>(net_flow: T, y_ratio: T) -> T {
    sqrt_law(net_flow, y_ratio)
}

/// Shifted square root A·√(φ + B).
pub fn shifted_sqrt<T: Scalar>(phi: T, a: T, b: T) -> Result<T> {
    let shifted = phi + b;
    if !(shifted >= T::zero()) {
        return Err(Error::domain(format!("shifted_sqrt needs phi + b >= 0, got {phi} + {b}")));
    }
    Ok(a * shifted.sqrt())
}
