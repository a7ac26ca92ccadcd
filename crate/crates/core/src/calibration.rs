//! Fitting the model to panels: the (α, δ) grid with Y profiled out, the
//! Y-ratio, sign couplings from realized correlations, GMM for Gaussian
//! volumes, the shifted square root, and the model-vs-data comparison split
//! by realized sign correlation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DayPanel;
use crate::error::{Error, Result};
use crate::estimators::{
    equal_count_ranges, geometric_mean, panel_signs, realized_sign_correlation, CurveBin, ImpactCurve,
};
use crate::gaussian::{gaussian_params_from_moments, moments_from_params, GaussianPanelModel};
use crate::impact_law::{aggregate_impact, sign_power, AnsatzParams};
use crate::scalar::{canonical_sum, compensated_sum};
use crate::sim::{matched_impact, mc_impact, NModel, SignModel, SigmaSpec, VolumeScheme};
use crate::specfun::RngStream;
use crate::stats::RunningStats;

/// Default α grid: 0.1, 0.2, …, 2.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

/// Default δ grid: 0.1, 0.15, …, 1.0.
pub fn default_delta_grid() -> Vec<f64> {
    (2..=20).map(|i| i as f64 / 20.0).collect()
}

/// Correlations this close to the edge of (−1/(N−1), 1) are treated as infeasible.
pub const GMM_FEASIBILITY_MARGIN: f64 = 1e-6;

/// Default smallest N for the pooled γ_ε plateau.
pub const DEFAULT_PLATEAU_MIN_N: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub delta: f64,
    pub y_fit: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFitResult {
    /// Row-major over (α, δ): α varies slowest.
    pub grid: Vec<GridPoint>,
    pub argmax: (f64, f64),
    pub r2_max: f64,
}

fn returns_of(panels: &[DayPanel]) -> Result<(Vec<f64>, f64)> {
    let r: Vec<f64> = panels.iter().map(|p| p.rescaled_return).collect();
    let mean = compensated_sum(r.iter().copied()) / r.len() as f64;
    let ss_tot = compensated_sum(r.iter().map(|x| (x - mean) * (x - mean)));
    if !(ss_tot > 0.0) {
        return Err(Error::DegenerateRegression("returns have zero variance".into()));
    }
    Ok((r, ss_tot))
}

/// Least squares through the origin of `r` on `pred`: (Y, SS_res, Σpred²).
fn origin_regression(pred: &[f64], r: &[f64]) -> (f64, f64, f64) {
    let spp = compensated_sum(pred.iter().map(|p| p * p));
    let spr = compensated_sum(pred.iter().zip(r).map(|(p, y)| p * y));
    let y = spr / spp;
    let ss_res = compensated_sum(pred.iter().zip(r).map(|(p, x)| (x - y * p) * (x - y * p)));
    (y, ss_res, spp)
}

/// r²(α, δ) of rescaled returns on Y·(Σφ_i^{•α})^{•δ/α}, with Y fitted in
/// closed form at every grid point.
pub fn fit_alpha_delta(panels: &[DayPanel], alpha_grid: &[f64], delta_grid: &[f64]) -> Result<GridFitResult> {
    if panels.len() < 2 {
        return Err(Error::InsufficientData(format!("grid fit needs >= 2 panels, got {}", panels.len())));
    }
    if alpha_grid.is_empty() || delta_grid.is_empty() {
        return Err(Error::Config("alpha and delta grids must be nonempty".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a <= 2.0)) {
        return Err(Error::Config(format!("alpha grid values must lie in (0, 2], got {a}")));
    }
    if let Some(d) = delta_grid.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
        return Err(Error::Config(format!("delta grid values must lie in (0, 1], got {d}")));
    }
    let (r, ss_tot) = returns_of(panels)?;
    let rows: Vec<Vec<GridPoint>> = alpha_grid
        .par_iter()
        .map(|&alpha| {
            // Σ φ_i^{•α} depends on α only; δ acts on it through one power.
            let inner: Vec<f64> = panels
                .iter()
                .map(|p| canonical_sum(p.phis.iter().map(|&x| sign_power(x, alpha))))
                .collect();
            delta_grid
                .iter()
                .map(|&delta| {
                    let pred: Vec<f64> = inner.iter().map(|&s| sign_power(s, delta / alpha)).collect();
                    let (y_fit, ss_res, spp) = origin_regression(&pred, &r);
                    let r_squared = if spp > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NEG_INFINITY };
                    GridPoint { alpha, delta, y_fit, r_squared }
                })
                .collect()
        })
        .collect();
    let grid: Vec<GridPoint> = rows.into_iter().flatten().collect();
    let best = grid
        .iter()
        .fold(None::<&GridPoint>, |best, g| match best {
            Some(b) if b.r_squared >= g.r_squared => Some(b),
            _ => Some(g),
        })
        .expect("grid is nonempty");
    let (argmax, r2_max) = ((best.alpha, best.delta), best.r_squared);
    Ok(GridFitResult { grid, argmax, r2_max })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YFit {
    pub y_ratio: f64,
    pub std_error: f64,
}

/// Y = ⟨pred·r⟩/⟨pred²⟩ for the ansatz at fixed (α, δ), with the standard
/// error from the residual variance.
pub fn fit_y_ratio(panels: &[DayPanel], alpha: f64, delta: f64) -> Result<YFit> {
    if panels.len() < 2 {
        return Err(Error::InsufficientData(format!("Y fit needs >= 2 panels, got {}", panels.len())));
    }
    let unit = AnsatzParams::new(1.0, alpha, delta)?;
    let pred: Vec<f64> = panels.iter().map(|p| aggregate_impact(&p.phis, &unit)).collect();
    let r: Vec<f64> = panels.iter().map(|p| p.rescaled_return).collect();
    let (y_ratio, ss_res, spp) = origin_regression(&pred, &r);
    if !(spp > 0.0) {
        return Err(Error::DegenerateRegression("predictor is identically zero".into()));
    }
    let residual_var = ss_res / (pred.len() - 1) as f64;
    Ok(YFit { y_ratio, std_error: (residual_var / spp).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub std_error: f64,
    pub mean_rho: f64,
    pub rho_std_error: f64,
    /// True when the mean realized correlation was negative and γ was set to 0.
    pub clamped: bool,
    pub panels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub by_n: BTreeMap<usize, GammaEstimate>,
    /// Pooled over all panels with N at least `plateau_min_n`.
    pub plateau: Option<GammaEstimate>,
    pub plateau_min_n: usize,
}

fn gamma_from_rhos(rho: &RunningStats) -> GammaEstimate {
    let mean_rho = rho.mean();
    let rho_se = rho.std_error();
    let clamped = mean_rho < 0.0;
    let gamma = mean_rho.max(0.0).sqrt();
    // Delta method on √ρ̄; it breaks down at ρ̄ = 0, where √SE(ρ̄) is the scale.
    let std_error = if gamma > 0.0 { (rho_se / (2.0 * gamma)).min(rho_se.sqrt()) } else { rho_se.sqrt() };
    GammaEstimate {
        gamma: gamma.min(1.0),
        std_error,
        mean_rho,
        rho_std_error: rho_se,
        clamped,
        panels: rho.count() as usize,
    }
}

/// γ_ε(N) = √max(0, E[ρ_ε | N]) for every N ≥ 2 with at least `min_panels`
/// panels, plus the pooled large-N value.
pub fn fit_gamma_eps(panels: &[DayPanel], min_panels: usize, plateau_min_n: usize) -> Result<GammaFit> {
    let mut by_n: BTreeMap<usize, RunningStats> = BTreeMap::new();
    let mut plateau = RunningStats::new();
    for p in panels.iter().filter(|p| p.n >= 2) {
        let rho = realized_sign_correlation(&panel_signs(p)?)?;
        by_n.entry(p.n).or_default().push(rho);
        if p.n >= plateau_min_n {
            plateau.push(rho);
        }
    }
    Ok(GammaFit {
        by_n: by_n
            .iter()
            .filter(|(_, s)| s.count() as usize >= min_panels.max(1))
            .map(|(&n, s)| (n, gamma_from_rhos(s)))
            .collect(),
        plateau: (plateau.count() > 0).then(|| gamma_from_rhos(&plateau)),
        plateau_min_n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    /// E[φ² | N] = Σ_N².
    pub second_moment: f64,
    /// E[φ_iφ_j | N], i ≠ j.
    pub cross_moment: f64,
    pub c_phi: f64,
    pub c_phi_std_error: f64,
    /// Largest relative deviation of the moments recomputed from (A, B).
    pub round_trip_error: f64,
    pub panels: usize,
}

/// Moment inversion for panels that all have the same N ≥ 2.
pub fn fit_gmm_at_n(panels: &[&DayPanel]) -> Result<GmmFit> {
    let Some(first) = panels.first() else {
        return Err(Error::InsufficientData("no panels".into()));
    };
    let n = first.n;
    if n < 2 || panels.iter().any(|p| p.n != n) {
        return Err(Error::domain("GMM needs panels with one common N >= 2"));
    }
    let nf = n as f64;
    let mut sq = Vec::with_capacity(panels.len());
    let mut cross = Vec::with_capacity(panels.len());
    for p in panels {
        let s2: f64 = p.phis.iter().map(|x| x * x).sum();
        let s1: f64 = p.phis.iter().sum();
        sq.push(s2 / nf);
        cross.push((s1 * s1 - s2) / (nf * (nf - 1.0)));
    }
    let count = panels.len() as f64;
    let second_moment = compensated_sum(sq.iter().copied()) / count;
    let cross_moment = compensated_sum(cross.iter().copied()) / count;
    if !(second_moment > 0.0) {
        return Err(Error::Infeasible { n, reason: "E[phi^2] is zero".into() });
    }
    let c_phi = cross_moment / second_moment;
    let lower = -1.0 / (nf - 1.0);
    if !(c_phi < 1.0 - GMM_FEASIBILITY_MARGIN && c_phi > lower + GMM_FEASIBILITY_MARGIN) {
        return Err(Error::Infeasible {
            n,
            reason: format!("empirical C_phi = {c_phi} outside ({lower}, 1)"),
        });
    }
    // Ratio-of-means delta method.
    let linearised: RunningStats = cross.iter().zip(&sq).map(|(c, s)| (c - c_phi * s) / second_moment).collect();
    let model = GaussianPanelModel::new(n, second_moment, c_phi)?;
    let couplings = gaussian_params_from_moments(&model)?;
    if !(couplings.b < couplings.a + couplings.b / nf) {
        return Err(Error::Infeasible { n, reason: "B_N >= A_N + B_N/N".into() });
    }
    let back = moments_from_params(couplings.a, couplings.b, n)?;
    let round_trip_error = [
        (back.second_moment - second_moment).abs() / second_moment,
        (back.cross_moment - cross_moment).abs() / second_moment,
        (back.c_phi - c_phi).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(GmmFit {
        n,
        a: couplings.a,
        b: couplings.b,
        second_moment,
        cross_moment,
        c_phi,
        c_phi_std_error: linearised.std_error(),
        round_trip_error,
        panels: panels.len(),
    })
}

/// Per-N GMM fits. Any infeasible N fails the whole call; use
/// [`fit_gmm_at_n`] to fit groups independently.
pub fn fit_gmm_gaussian(panels: &[DayPanel], min_panels: usize) -> Result<BTreeMap<usize, GmmFit>> {
    panels_by_n(panels)
        .into_iter()
        .filter(|(n, group)| *n >= 2 && group.len() >= min_panels.max(1))
        .map(|(n, group)| Ok((n, fit_gmm_at_n(&group)?)))
        .collect()
}

/// Panels grouped by N.
pub fn panels_by_n(panels: &[DayPanel]) -> BTreeMap<usize, Vec<&DayPanel>> {
    let mut groups: BTreeMap<usize, Vec<&DayPanel>> = BTreeMap::new();
    for p in panels {
        groups.entry(p.n).or_default().push(p);
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedSqrtFit {
    pub a: f64,
    pub b: f64,
    pub weighted_sse: f64,
    pub iterations: usize,
    /// `inverse_variance`, or `uniform` when some bin has no standard error.
    pub weighting: String,
}

const GOLDEN_TOLERANCE: f64 = 1e-10;
const GOLDEN_MAX_ITER: usize = 500;

/// A·√(φ + B) fitted to bin means with weights 1/SE²; A is profiled out and
/// B found by golden-section search on [0, max φ].
pub fn fit_shifted_sqrt(curve: &ImpactCurve) -> Result<ShiftedSqrtFit> {
    let bins: &[CurveBin] = &curve.bins;
    if bins.len() < 3 {
        return Err(Error::InsufficientData(format!("shifted-sqrt fit needs >= 3 bins, got {}", bins.len())));
    }
    let uniform = bins.iter().any(|b| !(b.std_error > 0.0) || !b.std_error.is_finite());
    let w: Vec<f64> = bins
        .iter()
        .map(|b| if uniform { 1.0 } else { 1.0 / (b.std_error * b.std_error) })
        .collect();
    let profile = |b: f64| -> (f64, f64) {
        let s: Vec<f64> = bins.iter().map(|bin| (bin.phi_center + b).sqrt()).collect();
        let sws: f64 = s.iter().zip(&w).map(|(s, w)| w * s * s).sum();
        let swy: f64 = s.iter().zip(&w).zip(bins).map(|((s, w), bin)| w * s * bin.mean_impact).sum();
        let a = swy / sws;
        let sse = s.iter().zip(&w).zip(bins).map(|((s, w), bin)| w * (bin.mean_impact - a * s).powi(2)).sum();
        (a, sse)
    };
    let upper = bins.iter().map(|b| b.phi_center).fold(0.0, f64::max);
    if !(upper > 0.0) {
        return Err(Error::domain("curve has no positive bin centre"));
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, upper);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = profile(x1).1;
    let mut f2 = profile(x2).1;
    let mut iterations = 0;
    while hi - lo > GOLDEN_TOLERANCE {
        iterations += 1;
        if iterations > GOLDEN_MAX_ITER {
            return Err(Error::Numerical(format!(
                "golden-section search for B did not converge: bracket [{lo}, {hi}] after {GOLDEN_MAX_ITER} steps"
            )));
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = profile(x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = profile(x2).1;
        }
    }
    // The optimum may sit on the boundary B = 0.
    let mid = 0.5 * (lo + hi);
    let (b, (a, weighted_sse)) = [mid, 0.0]
        .into_iter()
        .map(|b| (b, profile(b)))
        .fold(None::<(f64, (f64, f64))>, |best, cand| match best {
            Some(bst) if bst.1 .1 <= cand.1 .1 => Some(bst),
            _ => Some(cand),
        })
        .expect("two candidates");
    if !a.is_finite() || !weighted_sse.is_finite() {
        return Err(Error::Numerical(format!("shifted-sqrt fit produced A = {a}, SSE = {weighted_sse}")));
    }
    Ok(ShiftedSqrtFit {
        a,
        b,
        weighted_sse,
        iterations,
        weighting: if uniform { "uniform" } else { "inverse_variance" }.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBin {
    pub phi_center: f64,
    pub count: usize,
    /// Mean of ε·r/Y over the bin.
    pub empirical: f64,
    pub empirical_se: f64,
    /// Simulated impact for the bin's own (|φ|, N) pairs.
    pub model: f64,
    pub model_se: f64,
    pub z: f64,
    /// Σ_N p̂(N) I_N(φ) at the bin centre.
    pub mixture: f64,
    pub mixture_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub label: String,
    pub panels: usize,
    pub metaorders: usize,
    pub y_ratio: YFit,
    pub gamma_by_n: BTreeMap<usize, f64>,
    pub sigma_by_n: BTreeMap<usize, f64>,
    pub p_n: BTreeMap<usize, f64>,
    pub bins: Vec<ComparisonBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVsEmpirical {
    pub rho_threshold: f64,
    pub sim_samples: usize,
    pub subsamples: Vec<SubsampleReport>,
}

impl ModelVsEmpirical {
    /// Share of bins, over all subsamples, with |z| ≤ `limit`.
    pub fn fraction_within(&self, limit: f64) -> f64 {
        let zs: Vec<f64> = self.subsamples.iter().flat_map(|s| s.bins.iter().map(|b| b.z)).collect();
        zs.iter().filter(|z| z.abs() <= limit).count() as f64 / zs.len() as f64
    }
}

/// Panels with N ≥ 2 split into ρ_ε > threshold and |ρ_ε| ≤ threshold (a
/// threshold of 1 keeps them together). For each part: Y fitted on the
/// net-flow law, the empirical φ-curve in units of Y, and the model curve
/// simulated with the part's own γ̂_N, Σ̂_N and metaorder sizes.
pub fn model_vs_empirical(
    panels: &[DayPanel],
    rho_threshold: f64,
    n_bins: usize,
    sim_samples: usize,
    stream: &RngStream,
) -> Result<ModelVsEmpirical> {
    if !(rho_threshold > 0.0 && rho_threshold <= 1.0) {
        return Err(Error::Config(format!("rho threshold must lie in (0, 1], got {rho_threshold}")));
    }
    let mut high = Vec::new();
    let mut low = Vec::new();
    let mut all = Vec::new();
    for p in panels.iter().filter(|p| p.n >= 2) {
        let rho = realized_sign_correlation(&panel_signs(p)?)?;
        if rho > rho_threshold {
            high.push(p.clone());
        } else if rho.abs() <= rho_threshold {
            low.push(p.clone());
        }
        all.push(p.clone());
    }
    let parts: Vec<(String, Vec<DayPanel>)> = if rho_threshold >= 1.0 {
        vec![("all".to_string(), all)]
    } else {
        vec![
            (format!("rho > {rho_threshold}"), high),
            (format!("|rho| <= {rho_threshold}"), low),
        ]
    };
    let subsamples = parts
        .into_iter()
        .enumerate()
        .map(|(i, (label, part))| {
            if part.is_empty() {
                return Err(Error::InsufficientData(format!("partition {label:?} is empty")));
            }
            compare_subsample(label, &part, n_bins, sim_samples, &stream.substream(i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelVsEmpirical { rho_threshold, sim_samples, subsamples })
}

fn compare_subsample(
    label: String,
    panels: &[DayPanel],
    n_bins: usize,
    sim_samples: usize,
    stream: &RngStream,
) -> Result<SubsampleReport> {
    let y = fit_y_ratio(panels, 1.0, 0.5)?;
    if !(y.y_ratio > 0.0) {
        return Err(Error::Numerical(format!("fitted Y = {} is not positive for {label}", y.y_ratio)));
    }
    let mut models = BTreeMap::new();
    let mut gamma_by_n = BTreeMap::new();
    let mut sigma_by_n = BTreeMap::new();
    let mut p_n = BTreeMap::new();
    for (n, group) in panels_by_n(panels) {
        let rhos = group
            .iter()
            .map(|p| realized_sign_correlation(&panel_signs(p)?))
            .collect::<Result<RunningStats>>()?;
        let gamma = gamma_from_rhos(&rhos).gamma;
        let phis: RunningStats = group.iter().flat_map(|p| p.phis.iter().copied()).collect();
        let sigma = phis.std_dev();
        if !(sigma > 0.0) {
            return Err(Error::ZeroVariance(format!("all volumes equal at N = {n} in {label}")));
        }
        models.insert(n, NModel { sign_model: SignModel::new(gamma)?, sigma });
        gamma_by_n.insert(n, gamma);
        sigma_by_n.insert(n, sigma);
        p_n.insert(n, group.len() as f64 / panels.len() as f64);
    }

    // (|φ|, ε·r/Y, N), ordered as in the binned curve.
    let mut rows: Vec<(f64, f64, usize)> = panels
        .iter()
        .flat_map(|p| {
            p.phis.iter().map(move |&phi| (phi.abs(), phi.signum() * p.rescaled_return / y.y_ratio, p.n))
        })
        .collect();
    if rows.len() < n_bins * 2 || n_bins == 0 {
        return Err(Error::InsufficientData(format!(
            "{} metaorders cannot fill {n_bins} bins in {label}",
            rows.len()
        )));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let bins = equal_count_ranges(rows.len(), n_bins)
        .into_iter()
        .enumerate()
        .map(|(b, range)| {
            let chunk = &rows[range];
            let empirical: RunningStats = chunk.iter().map(|r| r.1).collect();
            let members: Vec<(f64, usize)> = chunk.iter().map(|r| (r.0, r.2)).collect();
            let bin_stream = stream.substream(b as u64);
            let model = matched_impact(&members, &models, sim_samples, &bin_stream.substream(0))?;
            let phi_center = geometric_mean(chunk.iter().map(|r| r.0));
            let (mut mixture, mut mixture_var) = (0.0, 0.0);
            for (&n, m) in &models {
                let scheme = VolumeScheme::HalfNormal(SigmaSpec::Constant(m.sigma));
                let est = mc_impact(phi_center, n, &m.sign_model, &scheme, sim_samples, &bin_stream.substream(n as u64))?;
                mixture += p_n[&n] * est.mean;
                mixture_var += (p_n[&n] * est.std_error).powi(2);
            }
            let se = (empirical.std_error().powi(2) + model.std_error.powi(2)).sqrt();
            Ok(ComparisonBin {
                phi_center,
                count: chunk.len(),
                empirical: empirical.mean(),
                empirical_se: empirical.std_error(),
                model: model.mean,
                model_se: model.std_error,
                z: if se > 0.0 { (empirical.mean() - model.mean) / se } else { 0.0 },
                mixture,
                mixture_se: mixture_var.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsampleReport {
        label,
        panels: panels.len(),
        metaorders: rows.len(),
        y_ratio: y,
        gamma_by_n,
        sigma_by_n,
        p_n,
        bins,
    })
}
