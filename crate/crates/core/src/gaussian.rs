//! Closed-form individual impact curves I_N(φ)/Y when the other N − 1
//! metaorders are Gaussian, plus the large-N asymptotes for stable volume
//! distributions.
//!
//! For i.i.d. centred Gaussian volumes with variance Σ², the co-executed net
//! flow is N(0, (N − 1)Σ²) and
//!
//! ```text
//! I_N(φ) = Γ(1/4)/(2√π) · φ/(2(N−1)Σ²)^{1/4} · e^{-z} ₁F₁(5/4, 3/2, z),
//! z = φ² / (2(N−1)Σ²)
//! ```
//!
//! which is linear for φ ≪ Σ√(N−1) and tends to √φ above it. Exchangeable
//! correlated volumes reduce to the same curve after shifting φ and Σ².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar};
use crate::specfun::{gamma, kummer_1f1_scaled};

fn check_n_sigma<T: Scalar>(n: usize, sigma: T) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!(
            "Gaussian co-impact needs N >= 2 (N = 1 is the bare square-root law), got {n}"
        )));
    }
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

/// Impact I_N(φ)/Y of one metaorder among N i.i.d. N(0, Σ²) metaorders.
pub fn iid_gaussian_impact<T: Scalar>(phi: T, n: usize, sigma: T) -> Result<T> {
    check_n_sigma(n, sigma)?;
    if phi == T::zero() {
        return Ok(T::zero());
    }
    let variance = lit::<T>(2.0) * from_usize::<T>(n - 1) * sigma * sigma;
    let z = phi * phi / variance;
    let prefactor = gamma(lit::<T>(0.25))? / (lit::<T>(2.0) * T::PI().sqrt());
    let scaled = kummer_1f1_scaled(lit(1.25), lit(1.5), z)?;
    Ok(prefactor * phi / variance.sqrt().sqrt() * scaled)
}

/// ξ = 2^{3/4} Γ(5/4) / √π, the dimensionless slope of the rescaled curve at 0.
pub fn xi<T: Scalar>() -> Result<T> {
    Ok(lit::<T>(2.0).powf(lit(0.75)) * gamma(lit::<T>(1.25))? / T::PI().sqrt())
}

/// Slope of the linear regime, 2^{3/4} Γ(5/4) / (π² Σ² (N−1))^{1/4}.
pub fn small_phi_slope<T: Scalar>(n: usize, sigma: T) -> Result<T> {
    check_n_sigma(n, sigma)?;
    let denom = T::PI() * T::PI() * sigma * sigma * from_usize::<T>(n - 1);
    Ok(lit::<T>(2.0).powf(lit(0.75)) * gamma(lit::<T>(1.25))? / denom.sqrt().sqrt())
}

/// Crossover volume fraction φ*_N ≃ ξ⁻¹ Σ √(N−1) between the linear and
/// square-root regimes.
///
/// This is the conventional order-of-magnitude scale. The two asymptotes
/// ξφ/(Σ²(N−1))^{1/4} and √φ actually meet at ξ⁻² Σ √(N−1), see
/// [`asymptote_intersection`].
pub fn crossover_phi_star<T: Scalar>(n: usize, sigma: T) -> Result<T> {
    check_n_sigma(n, sigma)?;
    Ok(sigma * from_usize::<T>(n - 1).sqrt() / xi::<T>()?)
}

/// Abscissa where the linear asymptote meets √φ: ξ⁻² Σ √(N−1).
pub fn asymptote_intersection<T: Scalar>(n: usize, sigma: T) -> Result<T> {
    let slope = small_phi_slope(n, sigma)?;
    Ok(T::one() / (slope * slope))
}

/// Dimensionless volume φ̃ = φ / (√(N−1) Σ).
pub fn rescale_phi<T: Scalar>(phi: T, n: usize, sigma: T) -> Result<T> {
    check_n_sigma(n, sigma)?;
    Ok(phi / (from_usize::<T>(n - 1).sqrt() * sigma))
}

/// Universal rescaled curve y(φ̃) = I_N(φ)/((N−1)Σ²)^{1/4}.
pub fn rescaled_impact<T: Scalar>(phi_tilde: T) -> Result<T> {
    if phi_tilde == T::zero() {
        return Ok(T::zero());
    }
    let z = phi_tilde * phi_tilde / lit(2.0);
    let prefactor = gamma(lit::<T>(0.25))? / (lit::<T>(2.0) * T::PI().sqrt());
    Ok(prefactor * phi_tilde / lit::<T>(2.0).powf(lit(0.25)) * kummer_1f1_scaled(lit(1.25), lit(1.5), z)?)
}

/// Exchangeable zero-mean Gaussian volumes for a day with N metaorders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPanelModel<T> {
    pub n: usize,
    /// E[φ² | N].
    pub second_moment: T,
    /// Pairwise volume correlation C_φ(N).
    pub c_phi: T,
}

impl<T: Scalar> GaussianPanelModel<T> {
    pub fn new(n: usize, second_moment: T, c_phi: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("panel model needs N >= 2, got {n}")));
        }
        if !(second_moment > T::zero()) || !second_moment.is_finite() {
            return Err(Error::domain(format!("E[phi^2] must be > 0, got {second_moment}")));
        }
        let lower = -T::one() / from_usize::<T>(n - 1);
        if !(c_phi > lower && c_phi < T::one()) {
            return Err(Error::domain(format!(
                "C_phi must lie in ({lower}, 1) for N = {n}, got {c_phi}"
            )));
        }
        Ok(Self { n, second_moment, c_phi })
    }

    fn nt(&self) -> T {
        from_usize(self.n)
    }

    /// 1 − C + N C, the covariance eigenvalue (in units of E[φ²]) along 1.
    fn collective(&self) -> T {
        T::one() - self.c_phi + self.nt() * self.c_phi
    }
}

/// Couplings (A_N, B_N) of the quadratic form −A/2 Σφ_i² + B/N Σ_{i<j} φ_iφ_j.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCouplings<T> {
    pub a: T,
    pub b: T,
}

/// Moments implied by couplings (A_N, B_N).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments<T> {
    pub second_moment: T,
    pub cross_moment: T,
    pub c_phi: T,
}

/// Couplings from E[φ²|N] and C_φ(N).
pub fn gaussian_params_from_moments<T: Scalar>(model: &GaussianPanelModel<T>) -> Result<GaussianCouplings<T>> {
    let model = GaussianPanelModel::new(model.n, model.second_moment, model.c_phi)?;
    let c = model.c_phi;
    let denom = (T::one() - c) * model.collective() * model.second_moment;
    let a = (T::one() - lit::<T>(2.0) * c + model.nt() * c) / denom;
    let b = model.nt() * c / denom;
    Ok(GaussianCouplings { a, b })
}

/// E[φ²|N], E[φ_iφ_j|N] and C_φ(N) from couplings.
pub fn moments_from_params<T: Scalar>(a: T, b: T, n: usize) -> Result<GaussianMoments<T>> {
    if n < 2 {
        return Err(Error::domain(format!("panel model needs N >= 2, got {n}")));
    }
    let nt: T = from_usize(n);
    // λ₁ = A + B/N − B and λ₂ = A + B/N must both be positive.
    let lambda1 = a + b / nt - b;
    let lambda2 = a + b / nt;
    if !(lambda1 > T::zero() && lambda2 > T::zero()) {
        return Err(Error::domain(format!(
            "couplings (A={a}, B={b}) violate B < A + B/N or A + B/N > 0 for N = {n}"
        )));
    }
    let denom = lambda1 * lambda2;
    let second_moment = (a + lit::<T>(2.0) * b / nt - b) / denom;
    let cross_moment = (b / nt) / denom;
    let c_phi = (b / nt) / (a + lit::<T>(2.0) * b / nt - b);
    Ok(GaussianMoments { second_moment, cross_moment, c_phi })
}

/// Eigenvalues of the coupling matrix (A on the diagonal, −B/N off it):
/// λ₁ along (1, …, 1), λ₂ with multiplicity N − 1, and λ̃₁, the eigenvalue
/// along (1, …, 1) of the same matrix restricted to N − 1 metaorders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenTriple<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub lambda1_tilde: T,
}

pub fn eigen_triple<T: Scalar>(model: &GaussianPanelModel<T>) -> EigenTriple<T> {
    let e = model.second_moment;
    let one_minus_c = T::one() - model.c_phi;
    EigenTriple {
        lambda1: T::one() / (e * model.collective()),
        lambda2: T::one() / (e * one_minus_c),
        lambda1_tilde: T::one() / (e * model.collective() * one_minus_c),
    }
}

/// Impact I_N(φ)/Y with exchangeable correlated Gaussian volumes: the i.i.d.
/// curve evaluated at φ(1 + (N−1)C_φ) with Σ² replaced by 1/λ̃₁.
pub fn correlated_gaussian_impact<T: Scalar>(phi: T, model: &GaussianPanelModel<T>) -> Result<T> {
    let model = GaussianPanelModel::new(model.n, model.second_moment, model.c_phi)?;
    let shifted = phi * (T::one() + from_usize::<T>(model.n - 1) * model.c_phi);
    // 1/λ̃₁ written out so that C_φ = 0 reproduces E[φ²] bit for bit.
    let conditional_variance = model.second_moment * model.collective() * (T::one() - model.c_phi);
    iid_gaussian_impact(shifted, model.n, conditional_variance.sqrt())
}

fn check_levy<T: Scalar>(n: usize, c: T, alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < lit(2.0)) {
        return Err(Error::domain(format!(
            "Levy asymptote needs alpha in (0, 2); use the Gaussian curve for alpha = 2, got {alpha}"
        )));
    }
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::domain(format!("Levy scale c must be > 0, got {c}")));
    }
    if n < 2 {
        return Err(Error::domain(format!("Levy asymptote needs N >= 2, got {n}")));
    }
    Ok(())
}

/// Linear-regime slope for volumes in the domain of attraction of a symmetric
/// stable law with characteristic function exp(−c|λ|^α):
/// Γ(1/(2α)) / (√(2π) α [c(N−1)]^{1/(2α)}).
///
/// Exact for every N when the volumes are themselves stable; a large-N
/// asymptote otherwise. At α → 2 it tends to [`small_phi_slope`] with
/// Σ² = 2c.
pub fn levy_linear_slope<T: Scalar>(n: usize, c: T, alpha: T) -> Result<T> {
    check_levy(n, c, alpha)?;
    let half_inv_alpha = T::one() / (lit::<T>(2.0) * alpha);
    let spread = (c * from_usize::<T>(n - 1)).powf(half_inv_alpha);
    Ok(gamma(half_inv_alpha)? / (T::TAU().sqrt() * alpha * spread))
}

/// Crossover φ*_N ≃ (c(N−1))^{1/α} for stable volumes.
pub fn levy_crossover<T: Scalar>(n: usize, c: T, alpha: T) -> Result<T> {
    check_levy(n, c, alpha)?;
    Ok((c * from_usize::<T>(n - 1)).powf(T::one() / alpha))
}
