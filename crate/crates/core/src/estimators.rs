//! Statistics computed from panels and records: binned impact curves, sign
//! correlations, concentration, volume dispersion by N, and tail fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{DayPanel, MetaorderRecord};
use crate::error::{Error, Result};
use crate::stats::RunningStats;

/// Default smallest bin population for [`binned_curve`].
pub const DEFAULT_MIN_COUNT: usize = 50;

/// Default smallest number of panels for an N to be reported.
pub const DEFAULT_MIN_PANELS: usize = 2;

/// Number of logarithmic bins used by [`powerlaw_tail_fit`].
pub const TAIL_FIT_BINS: usize = 20;

/// Smallest sample count inside the window for [`powerlaw_tail_fit`].
pub const TAIL_FIT_MIN_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    /// Geometric mean of |x| over the bin.
    pub phi_center: f64,
    /// Mean of sign(x)·r over the bin.
    pub mean_impact: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub bins: Vec<CurveBin>,
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Conditional mean of sign(x)·r given |x|, in `n_bins` equally populated bins.
///
/// Samples are ordered by (|x|, sign(x)·r), so the curve is unchanged by any
/// permutation of the input and by flipping the sign of every pair.
pub fn binned_curve(samples: &[(f64, f64)], n_bins: usize, min_count: usize) -> Result<ImpactCurve> {
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    if samples.is_empty() || samples.len() < n_bins * min_count.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {n_bins} bins of at least {min_count}",
            samples.len()
        )));
    }
    if samples.iter().any(|(x, r)| !x.is_finite() || !r.is_finite()) {
        return Err(Error::domain("curve samples must be finite"));
    }
    let mut keyed: Vec<(f64, f64)> = samples.iter().map(|&(x, r)| (x.abs(), sgn(x) * r)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut bins = Vec::with_capacity(n_bins);
    for range in equal_count_ranges(keyed.len(), n_bins) {
        let len = range.len();
        let chunk = &keyed[range];
        let values: RunningStats = chunk.iter().map(|&(_, y)| y).collect();
        let phi_center = geometric_mean(chunk.iter().map(|&(a, _)| a));
        bins.push(CurveBin { phi_center, mean_impact: values.mean(), std_error: values.std_error(), count: len });
    }
    Ok(ImpactCurve { bins })
}

/// Splits `0..len` into `n_bins` consecutive ranges whose sizes differ by at most one.
pub(crate) fn equal_count_ranges(len: usize, n_bins: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / n_bins;
    let extra = len % n_bins;
    let mut start = 0;
    (0..n_bins)
        .map(|i| {
            let size = base + usize::from(i < extra);
            start += size;
            start - size..start
        })
        .collect()
}

/// Geometric mean, or 0 if any value is 0.
pub(crate) fn geometric_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    if values.clone().any(|a| a == 0.0) {
        return 0.0;
    }
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), a| (s + a.ln(), c + 1));
    (sum / count as f64).exp()
}

/// (Φ, r) pairs, one per panel.
pub fn net_flow_samples(panels: &[DayPanel]) -> Vec<(f64, f64)> {
    panels.iter().map(|p| (p.net_flow, p.rescaled_return)).collect()
}

/// (φ_i, r) pairs, one per metaorder.
pub fn metaorder_samples(panels: &[DayPanel]) -> Vec<(f64, f64)> {
    panels
        .iter()
        .flat_map(|p| p.phis.iter().map(move |&phi| (phi, p.rescaled_return)))
        .collect()
}

/// Average of ε_iε_j over the N(N−1)/2 pairs: ((Σε)² − N)/(N(N−1)).
pub fn realized_sign_correlation(signs: &[f64]) -> Result<f64> {
    let n = signs.len();
    if n < 2 {
        return Err(Error::domain(format!("sign correlation needs at least 2 signs, got {n}")));
    }
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::domain("signs must be +1 or -1"));
    }
    let total: f64 = signs.iter().sum();
    let nf = n as f64;
    Ok((total * total - nf) / (nf * (nf - 1.0)))
}

/// Signs of a panel's metaorders; zero volumes have no sign.
pub fn panel_signs(panel: &DayPanel) -> Result<Vec<f64>> {
    panel
        .phis
        .iter()
        .map(|&phi| match sgn(phi) {
            0.0 => Err(Error::domain(format!("zero volume in panel {}", panel.group_name()))),
            s => Ok(s),
        })
        .collect()
}

fn group_by_n(panels: &[DayPanel]) -> BTreeMap<usize, Vec<&DayPanel>> {
    let mut groups: BTreeMap<usize, Vec<&DayPanel>> = BTreeMap::new();
    for p in panels {
        groups.entry(p.n).or_default().push(p);
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCorrelation {
    pub c_eps: f64,
    pub std_error: f64,
    /// Mean of the realized correlations ρ_ε over panels.
    pub mean_rho: f64,
    /// Mean sign over all metaorders.
    pub mean_sign: f64,
    pub panels: usize,
}

/// Sign correlation of panels that share one N ≥ 2:
/// (E[ε_iε_j] − E[ε]²)/(1 − E[ε]²), each panel weighted equally.
pub fn sign_correlation(panels: &[&DayPanel]) -> Result<SignCorrelation> {
    let Some(first) = panels.first() else {
        return Err(Error::InsufficientData("no panels".into()));
    };
    let n = first.n;
    if panels.iter().any(|p| p.n != n) {
        return Err(Error::domain("sign_correlation expects panels with equal N"));
    }
    let mut rho = RunningStats::new();
    let mut sign_sum = 0.0;
    for p in panels {
        let signs = panel_signs(p)?;
        sign_sum += signs.iter().sum::<f64>();
        rho.push(realized_sign_correlation(&signs)?);
    }
    let mean_sign = sign_sum / (panels.len() * n) as f64;
    let denom = 1.0 - mean_sign * mean_sign;
    if denom <= 1e-12 {
        return Err(Error::ZeroVariance(format!(
            "every metaorder sign at N = {n} is identical; sign correlation undefined"
        )));
    }
    Ok(SignCorrelation {
        c_eps: ((rho.mean() - mean_sign * mean_sign) / denom).clamp(-1.0, 1.0),
        std_error: rho.std_error() / denom,
        mean_rho: rho.mean(),
        mean_sign,
        panels: panels.len(),
    })
}

/// C_ε(N) for every N ≥ 2 with at least `min_panels` panels.
pub fn sign_correlation_by_n(panels: &[DayPanel], min_panels: usize) -> Result<BTreeMap<usize, SignCorrelation>> {
    group_by_n(panels)
        .into_iter()
        .filter(|(n, group)| *n >= 2 && group.len() >= min_panels.max(1))
        .map(|(n, group)| Ok((n, sign_correlation(&group)?)))
        .collect()
}

/// Inverse participation ratio Σφ²/(Σ|φ|)².
pub fn herfindahl(phis: &[f64]) -> Result<f64> {
    let gross: f64 = phis.iter().map(|x| x.abs()).sum();
    if !(gross > 0.0) || !gross.is_finite() {
        return Err(Error::domain("Herfindahl index needs at least one nonzero finite volume"));
    }
    let squares: f64 = phis.iter().map(|x| x * x).sum();
    Ok(squares / (gross * gross))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

/// E[ζ | N] over panels.
pub fn herfindahl_by_n(panels: &[DayPanel], min_panels: usize) -> Result<BTreeMap<usize, MeanEstimate>> {
    group_by_n(panels)
        .into_iter()
        .filter(|(_, group)| group.len() >= min_panels.max(1))
        .map(|(n, group)| {
            let mut stats = RunningStats::new();
            for p in &group {
                stats.push(herfindahl(&p.phis)?);
            }
            Ok((n, MeanEstimate { mean: stats.mean(), std_error: stats.std_error(), count: group.len() }))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    /// Σ_N, the standard deviation of φ over metaorders of N-panels.
    pub sigma: f64,
    /// Σ_N √(N − 1), the scale of the crossover volume.
    pub phi_scale: f64,
    pub panels: usize,
}

/// Σ_N = sd(φ | N) for every N with at least `min_panels` panels.
pub fn sigma_by_n(panels: &[DayPanel], min_panels: usize) -> BTreeMap<usize, SigmaEstimate> {
    group_by_n(panels)
        .into_iter()
        .filter(|(_, group)| group.len() >= min_panels.max(2))
        .map(|(n, group)| {
            let stats: RunningStats = group.iter().flat_map(|p| p.phis.iter().copied()).collect();
            let sigma = stats.std_dev();
            (n, SigmaEstimate { sigma, phi_scale: sigma * ((n - 1) as f64).sqrt(), panels: group.len() })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub count: usize,
    pub fraction: f64,
}

/// Empirical p(N).
pub fn p_n_histogram(panels: &[DayPanel]) -> BTreeMap<usize, HistogramEntry> {
    let total = panels.len() as f64;
    group_by_n(panels)
        .into_iter()
        .map(|(n, group)| (n, HistogramEntry { count: group.len(), fraction: group.len() as f64 / total }))
        .collect()
}

/// Participation rate, duration in volume time and daily fraction of one metaorder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaorderStats {
    /// π = |Q| / (V(t_e) − V(t_s)).
    pub participation: f64,
    /// D = (V(t_e) − V(t_s)) / V(t_c).
    pub duration_voltime: f64,
    /// |φ| = |Q| / V(t_c) = π·D.
    pub daily_fraction: f64,
}

/// `None` when the record carries no interval volume.
pub fn metaorder_stats(record: &MetaorderRecord) -> Option<MetaorderStats> {
    let interval = record.exec_volume.filter(|v| *v > 0.0)?;
    Some(MetaorderStats {
        participation: record.shares / interval,
        duration_voltime: interval / record.day_volume,
        daily_fraction: record.shares / record.day_volume,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Exponent a of the density p(x) ∝ x^a.
    pub exponent: f64,
    pub std_error: f64,
    pub samples_in_window: usize,
    pub bins_used: usize,
    pub method: String,
}

/// Power-law exponent of the density on [x_min, x_max] by least squares of
/// log density on log x over logarithmic bins.
pub fn powerlaw_tail_fit(samples: &[f64], x_min: f64, x_max: f64) -> Result<TailFit> {
    if !(x_min > 0.0 && x_max > x_min) || !x_max.is_finite() {
        return Err(Error::domain(format!("need 0 < x_min < x_max, got [{x_min}, {x_max}]")));
    }
    let inside: Vec<f64> = samples.iter().copied().filter(|&x| x >= x_min && x <= x_max).collect();
    if inside.len() < TAIL_FIT_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in [{x_min}, {x_max}], need {TAIL_FIT_MIN_SAMPLES}",
            inside.len()
        )));
    }
    let (lo, hi) = (x_min.ln(), x_max.ln());
    let step = (hi - lo) / TAIL_FIT_BINS as f64;
    let mut counts = [0usize; TAIL_FIT_BINS];
    for x in &inside {
        let k = (((x.ln() - lo) / step) as usize).min(TAIL_FIT_BINS - 1);
        counts[k] += 1;
    }
    let total = inside.len() as f64;
    let points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let left = (lo + k as f64 * step).exp();
            let right = (lo + (k + 1) as f64 * step).exp();
            let centre = lo + (k as f64 + 0.5) * step;
            (centre, (c as f64 / (total * (right - left))).ln())
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::DegenerateRegression(format!(
            "only {} nonempty bins in the fit window",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Ok(TailFit {
        exponent: slope,
        std_error: (ssr / (m - 2.0) / sxx).sqrt(),
        samples_in_window: inside.len(),
        bins_used: points.len(),
        method: format!("least squares on log density, {TAIL_FIT_BINS} logarithmic bins"),
    })
}
