//! The hidden-factor sign model, Monte Carlo estimation of the individual
//! impact I_N(φ), its p(N) mixture, and synthetic market days.
//!
//! Every Monte Carlo routine splits its samples into fixed chunks of
//! [`MC_CHUNK`] draws. Chunk `c` draws from `stream.substream(c)` and the
//! chunk statistics are merged in chunk order, so results do not depend on
//! the number of worker threads.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DayPanel;
use crate::error::{Error, Result};
use crate::impact_law::{sign_power, sqrt_law, AnsatzParams, aggregate_impact};
use crate::specfun::{draw_flat_dirichlet_into, draw_half_normal, draw_stable_symmetric, RngStream};
use crate::stats::RunningStats;

/// Samples per Monte Carlo chunk.
pub const MC_CHUNK: usize = 4096;

/// Smallest accepted sample count for [`mc_impact`].
pub const MIN_MC_SAMPLES: usize = 1000;

/// Resampling attempts before a synthetic day with Σ|φ| > 1 is declared infeasible.
pub const MAX_DAY_ATTEMPTS: usize = 1000;

/// Symbol used for synthetic panels.
pub const SYNTHETIC_SYMBOL: &str = "SYN";

/// First date of synthetic panels; day `d` is this date plus `d` days.
pub fn synthetic_base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Signs tilted by a common hidden factor ε̃: P(ε_i = ε̃) = (1 + γ)/2.
/// Pairwise sign correlation is C_ε = γ².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignModel {
    gamma_eps: f64,
}

impl SignModel {
    pub fn new(gamma_eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma_eps) {
            return Err(Error::Config(format!("gamma_eps must lie in [0, 1], got {gamma_eps}")));
        }
        Ok(Self { gamma_eps })
    }

    pub fn gamma_eps(&self) -> f64 {
        self.gamma_eps
    }

    pub fn c_eps(&self) -> f64 {
        self.gamma_eps * self.gamma_eps
    }

    #[inline]
    fn align_probability(&self) -> f64 {
        0.5 * (1.0 + self.gamma_eps)
    }
}

/// Draws one sign per entry of `out` given the hidden factor.
/// Each sign consumes exactly one uniform.
#[inline]
fn fill_signs<R: Rng + ?Sized>(rng: &mut R, hidden: f64, model: &SignModel, out: &mut [f64]) {
    let p = model.align_probability();
    for s in out.iter_mut() {
        let u: f64 = rng.random();
        *s = if u < p { hidden } else { -hidden };
    }
}

/// Hidden factor conditioned on ε_k = +1, then the other N − 1 signs.
/// Returns (ε̃, signs) with `signs[0] = +1`.
pub fn sample_signs_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize, model: &SignModel) -> Result<(f64, Vec<f64>)> {
    if n == 0 {
        return Err(Error::domain("sign sampling needs n >= 1"));
    }
    let hidden = draw_conditioned_hidden(rng, model);
    let mut signs = vec![1.0; n];
    fill_signs(rng, hidden, model, &mut signs[1..]);
    Ok((hidden, signs))
}

#[inline]
fn draw_conditioned_hidden<R: Rng + ?Sized>(rng: &mut R, model: &SignModel) -> f64 {
    let u: f64 = rng.random();
    if u < model.align_probability() {
        1.0
    } else {
        -1.0
    }
}

/// Hidden factor drawn fair, then all N signs.
pub fn sample_signs_unconditioned<R: Rng + ?Sized>(rng: &mut R, n: usize, model: &SignModel) -> Vec<f64> {
    let u: f64 = rng.random();
    let hidden = if u < 0.5 { 1.0 } else { -1.0 };
    let mut signs = vec![0.0; n];
    fill_signs(rng, hidden, model, &mut signs);
    signs
}

/// How Σ_N depends on N for half-normal volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaSpec {
    Constant(f64),
    /// Σ_N = c / N.
    InverseN(f64),
    Table(BTreeMap<usize, f64>),
}

impl SigmaSpec {
    pub fn sigma(&self, n: usize) -> Result<f64> {
        let s = match self {
            SigmaSpec::Constant(s) => *s,
            SigmaSpec::InverseN(c) => c / n as f64,
            SigmaSpec::Table(t) => *t
                .get(&n)
                .ok_or_else(|| Error::Config(format!("sigma table has no entry for N = {n}")))?,
        };
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Config(format!("sigma for N = {n} must be > 0, got {s}")));
        }
        Ok(s)
    }
}

/// Distribution of metaorder magnitudes |φ|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum VolumeScheme {
    HalfNormal(SigmaSpec),
    /// Piecewise-uniform density: bin `i` spans `edges[i]..edges[i+1]` with probability `masses[i]`.
    EmpiricalHistogram { edges: Vec<f64>, masses: Vec<f64> },
    /// The N magnitudes of a day are `total` times a flat Dirichlet draw.
    FlatDirichletScaled { total: f64 },
    /// Absolute values of symmetric stable draws with characteristic
    /// function exp(−|scale·λ|^alpha).
    SymmetricStable { alpha: f64, scale: f64 },
}

impl VolumeScheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            VolumeScheme::HalfNormal(spec) => {
                if let SigmaSpec::Table(t) = spec {
                    if t.is_empty() {
                        return Err(Error::Config("sigma table is empty".into()));
                    }
                    for &n in t.keys() {
                        spec.sigma(n)?;
                    }
                } else {
                    spec.sigma(1)?;
                }
            }
            VolumeScheme::EmpiricalHistogram { edges, masses } => {
                if edges.len() != masses.len() + 1 || masses.is_empty() {
                    return Err(Error::Config("histogram needs len(edges) = len(masses) + 1 >= 2".into()));
                }
                if !(edges[0] > 0.0) || edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("histogram edges must be positive and increasing".into()));
                }
                if masses.iter().any(|&m| !(m >= 0.0)) || (masses.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Config("histogram masses must be nonnegative and sum to 1".into()));
                }
            }
            VolumeScheme::FlatDirichletScaled { total } => {
                if !(*total > 0.0 && *total <= 1.0) {
                    return Err(Error::Config(format!("Dirichlet total must lie in (0, 1], got {total}")));
                }
            }
            VolumeScheme::SymmetricStable { alpha, scale } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) {
                    return Err(Error::Config(format!("stable alpha must lie in (0, 2], got {alpha}")));
                }
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::Config(format!("stable scale must be > 0, got {scale}")));
                }
            }
        }
        Ok(())
    }

    /// Resolves the scheme for days with `n_total` metaorders.
    fn for_day(&self, n_total: usize) -> Result<DaySampler<'_>> {
        Ok(match self {
            VolumeScheme::HalfNormal(spec) => DaySampler::HalfNormal(spec.sigma(n_total)?),
            VolumeScheme::EmpiricalHistogram { edges, masses } => {
                let mut cumulative = Vec::with_capacity(masses.len());
                let mut acc = 0.0;
                for m in masses {
                    acc += m;
                    cumulative.push(acc);
                }
                DaySampler::Histogram { edges, cumulative }
            }
            VolumeScheme::FlatDirichletScaled { total } => DaySampler::Dirichlet { total: *total, n_total },
            VolumeScheme::SymmetricStable { alpha, scale } => DaySampler::Stable { alpha: *alpha, scale: *scale },
        })
    }
}

enum DaySampler<'a> {
    HalfNormal(f64),
    Histogram { edges: &'a [f64], cumulative: Vec<f64> },
    Dirichlet { total: f64, n_total: usize },
    Stable { alpha: f64, scale: f64 },
}

impl DaySampler<'_> {
    /// Fills `out` with magnitudes of `out.len()` metaorders of one day.
    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            DaySampler::HalfNormal(sigma) => {
                for x in out.iter_mut() {
                    *x = draw_half_normal(rng, *sigma);
                }
            }
            DaySampler::Histogram { edges, cumulative } => {
                for x in out.iter_mut() {
                    let u: f64 = rng.random();
                    let bin = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                    let v: f64 = rng.random();
                    *x = edges[bin] + v * (edges[bin + 1] - edges[bin]);
                }
            }
            DaySampler::Dirichlet { total, n_total } => {
                scratch.resize(*n_total, 0.0);
                draw_flat_dirichlet_into(rng, scratch);
                let skip = n_total - out.len();
                for (x, w) in out.iter_mut().zip(&scratch[skip..]) {
                    *x = total * w;
                }
            }
            DaySampler::Stable { alpha, scale } => {
                for x in out.iter_mut() {
                    *x = loop {
                        let v = draw_stable_symmetric(rng, *alpha, *scale).abs();
                        if v > 0.0 {
                            break v;
                        }
                    };
                }
            }
        }
    }
}

/// Probability mass p(N) over the number of simultaneous metaorders.
pub fn validate_p_n(p_n: &BTreeMap<usize, f64>) -> Result<()> {
    if p_n.is_empty() {
        return Err(Error::Config("p_n is empty".into()));
    }
    if p_n.contains_key(&0) {
        return Err(Error::Config("p_n must only cover N >= 1".into()));
    }
    if p_n.values().any(|&p| !(p >= 0.0)) {
        return Err(Error::Config("p_n masses must be nonnegative".into()));
    }
    let total: f64 = p_n.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("p_n masses sum to {total}, not 1")));
    }
    Ok(())
}

/// Generative settings for synthetic days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p_n: BTreeMap<usize, f64>,
    pub sign_model: SignModel,
    pub volume_scheme: VolumeScheme,
    pub y_ratio: f64,
    /// Standard deviation of the Gaussian return noise added to Y·Φ^{•1/2}.
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        validate_p_n(&self.p_n)?;
        self.volume_scheme.validate()?;
        for &n in self.p_n.keys() {
            self.volume_scheme.for_day(n)?;
        }
        if !(self.y_ratio > 0.0) || !self.y_ratio.is_finite() {
            return Err(Error::Config(format!("y_ratio must be > 0, got {}", self.y_ratio)));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaScaling {
    #[default]
    Constant,
    InverseN,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    HalfNormal,
    Histogram,
    FlatDirichlet,
    Stable,
}

/// JSON form of a simulation config, as read by the `simulate` command.
///
/// ```json
/// {"p_n": {"1": 0.5, "5": 0.5}, "gamma_eps": 0.3, "sigma": 0.008,
///  "y_ratio": 1.0, "noise_sd": 2.0, "seed": 7, "days": 10000}
/// ```
///
/// `volume_scheme` is one of `half_normal` (default; uses `sigma`,
/// `sigma_scaling` = `constant` | `inverse_n`, or `sigma_table`),
/// `histogram` (`histogram_edges`, `histogram_masses`), `flat_dirichlet`
/// (`dirichlet_total`) or `stable` (`stable_alpha`, `stable_scale`).
/// Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigFile {
    pub p_n: BTreeMap<usize, f64>,
    pub gamma_eps: f64,
    #[serde(default)]
    pub volume_scheme: SchemeName,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigma_scaling: SigmaScaling,
    #[serde(default)]
    pub sigma_table: Option<BTreeMap<usize, f64>>,
    #[serde(default)]
    pub histogram_edges: Option<Vec<f64>>,
    #[serde(default)]
    pub histogram_masses: Option<Vec<f64>>,
    #[serde(default)]
    pub dirichlet_total: Option<f64>,
    #[serde(default)]
    pub stable_alpha: Option<f64>,
    #[serde(default)]
    pub stable_scale: Option<f64>,
    pub y_ratio: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub days: usize,
}

impl SimConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Converts to a validated [`SimConfig`] plus the number of days.
    pub fn resolve(&self) -> Result<(SimConfig, usize)> {
        fn need<T: Copy>(value: Option<T>, key: &str, scheme: &str) -> Result<T> {
            value.ok_or_else(|| Error::Config(format!("volume_scheme {scheme} requires key {key}")))
        }
        let volume_scheme = match self.volume_scheme {
            SchemeName::HalfNormal => match (&self.sigma_table, self.sigma) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config("give either sigma or sigma_table, not both".into()))
                }
                (Some(t), None) => VolumeScheme::HalfNormal(SigmaSpec::Table(t.clone())),
                (None, sigma) => {
                    let s = need(sigma, "sigma", "half_normal")?;
                    VolumeScheme::HalfNormal(match self.sigma_scaling {
                        SigmaScaling::Constant => SigmaSpec::Constant(s),
                        SigmaScaling::InverseN => SigmaSpec::InverseN(s),
                    })
                }
            },
            SchemeName::Histogram => VolumeScheme::EmpiricalHistogram {
                edges: self
                    .histogram_edges
                    .clone()
                    .ok_or_else(|| Error::Config("volume_scheme histogram requires histogram_edges".into()))?,
                masses: self
                    .histogram_masses
                    .clone()
                    .ok_or_else(|| Error::Config("volume_scheme histogram requires histogram_masses".into()))?,
            },
            SchemeName::FlatDirichlet => VolumeScheme::FlatDirichletScaled {
                total: need(self.dirichlet_total, "dirichlet_total", "flat_dirichlet")?,
            },
            SchemeName::Stable => VolumeScheme::SymmetricStable {
                alpha: need(self.stable_alpha, "stable_alpha", "stable")?,
                scale: need(self.stable_scale, "stable_scale", "stable")?,
            },
        };
        let config = SimConfig {
            p_n: self.p_n.clone(),
            sign_model: SignModel::new(self.gamma_eps)?,
            volume_scheme,
            y_ratio: self.y_ratio,
            noise_sd: self.noise_sd,
            seed: self.seed,
        };
        config.validate()?;
        if self.days == 0 {
            return Err(Error::Config("days must be >= 1".into()));
        }
        Ok((config, self.days))
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Runs `n_samples` draws of `draw` in fixed chunks on substreams of `stream`
/// and merges the chunk statistics in order.
fn chunked_mc<F>(stream: &RngStream, n_samples: usize, draw: F) -> McEstimate
where
    F: Fn(&mut RngStream, &mut Vec<f64>, &mut Vec<f64>) -> f64 + Sync,
{
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let parts: Vec<RunningStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.substream(c as u64);
            let mut buf = Vec::new();
            let mut scratch = Vec::new();
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut stats = RunningStats::new();
            for _ in 0..len {
                stats.push(draw(&mut rng, &mut buf, &mut scratch));
            }
            stats
        })
        .collect();
    let mut total = RunningStats::new();
    for part in &parts {
        total.merge(part);
    }
    McEstimate { mean: total.mean(), std_error: total.std_error(), samples: n_samples }
}

/// Signed net flow of the N − 1 metaorders executed alongside one with ε_k = +1.
#[inline]
fn others_flow(
    rng: &mut RngStream,
    n: usize,
    sign_model: &SignModel,
    sampler: &DaySampler<'_>,
    buf: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) -> f64 {
    let hidden = draw_conditioned_hidden(rng, sign_model);
    let others = n - 1;
    buf.resize(2 * others, 0.0);
    let (signs, mags) = buf.split_at_mut(others);
    fill_signs(rng, hidden, sign_model, signs);
    sampler.fill(rng, mags, scratch);
    signs.iter().zip(mags.iter()).map(|(s, m)| s * m).sum()
}

fn check_mc_args(n: usize, n_samples: usize, volume_scheme: &VolumeScheme) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!("n_samples must be >= {MIN_MC_SAMPLES}, got {n_samples}")));
    }
    volume_scheme.validate()
}

/// Monte Carlo estimate of I_N(φ)/Y = E[(φ + Σ_{i≠k} φ_i)^{•1/2} | ε_k = +1]
/// for a metaorder of fixed magnitude φ among N.
pub fn mc_impact(
    phi: f64,
    n: usize,
    sign_model: &SignModel,
    volume_scheme: &VolumeScheme,
    n_samples: usize,
    stream: &RngStream,
) -> Result<McEstimate> {
    if !(phi >= 0.0) || !phi.is_finite() {
        return Err(Error::domain(format!("phi must be >= 0, got {phi}")));
    }
    check_mc_args(n, n_samples, volume_scheme)?;
    if n == 1 {
        return Ok(McEstimate { mean: phi.sqrt(), std_error: 0.0, samples: n_samples });
    }
    let sampler = volume_scheme.for_day(n)?;
    Ok(chunked_mc(stream, n_samples, |rng, buf, scratch| {
        sign_power(phi + others_flow(rng, n, sign_model, &sampler, buf, scratch), 0.5)
    }))
}

/// Monte Carlo slope of I_N at φ = 0 from the symmetric difference
/// [(S + h)^{•1/2} − (S − h)^{•1/2}]/(2h) on common draws of the other flow S.
pub fn mc_small_phi_slope(
    n: usize,
    sign_model: &SignModel,
    volume_scheme: &VolumeScheme,
    h: f64,
    n_samples: usize,
    stream: &RngStream,
) -> Result<McEstimate> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::domain(format!("step h must be > 0, got {h}")));
    }
    if n < 2 {
        return Err(Error::domain("the small-phi slope needs n >= 2"));
    }
    check_mc_args(n, n_samples, volume_scheme)?;
    let sampler = volume_scheme.for_day(n)?;
    Ok(chunked_mc(stream, n_samples, |rng, buf, scratch| {
        let s = others_flow(rng, n, sign_model, &sampler, buf, scratch);
        (sign_power(s + h, 0.5) - sign_power(s - h, 0.5)) / (2.0 * h)
    }))
}

/// Individual impact averaged over p(N): Σ_N p(N) I_N(φ).
/// N uses substream N of `stream`; standard errors combine in quadrature.
pub fn mixture_impact(phi: f64, config: &SimConfig, n_samples: usize, stream: &RngStream) -> Result<McEstimate> {
    config.validate()?;
    let mut mean = 0.0;
    let mut var = 0.0;
    for (&n, &p) in &config.p_n {
        if p == 0.0 {
            continue;
        }
        let est = mc_impact(
            phi,
            n,
            &config.sign_model,
            &config.volume_scheme,
            n_samples,
            &stream.substream(n as u64),
        )?;
        mean += p * est.mean;
        var += (p * est.std_error).powi(2);
    }
    Ok(McEstimate { mean, std_error: var.sqrt(), samples: n_samples })
}

/// Co-execution model of one N: sign coupling and half-normal Σ_N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NModel {
    pub sign_model: SignModel,
    pub sigma: f64,
}

/// Monte Carlo impact averaged over observed metaorders: each draw picks one
/// of `members` (magnitude |φ|, N) uniformly and simulates its N − 1
/// co-executed metaorders with the sign coupling and Σ_N of that N.
pub fn matched_impact(
    members: &[(f64, usize)],
    models: &BTreeMap<usize, NModel>,
    n_samples: usize,
    stream: &RngStream,
) -> Result<McEstimate> {
    if members.is_empty() {
        return Err(Error::InsufficientData("no metaorders to match".into()));
    }
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!("n_samples must be >= {MIN_MC_SAMPLES}, got {n_samples}")));
    }
    let schemes: BTreeMap<usize, (SignModel, VolumeScheme)> = models
        .iter()
        .map(|(&n, m)| (n, (m.sign_model, VolumeScheme::HalfNormal(SigmaSpec::Constant(m.sigma)))))
        .collect();
    let mut samplers = BTreeMap::new();
    for &(phi, n) in members {
        if !(phi >= 0.0) || n == 0 {
            return Err(Error::domain(format!("bad member (|phi| = {phi}, N = {n})")));
        }
        if n > 1 && !samplers.contains_key(&n) {
            let (sign_model, scheme) = schemes
                .get(&n)
                .ok_or_else(|| Error::Config(format!("no co-execution model for N = {n}")))?;
            scheme.validate()?;
            samplers.insert(n, (*sign_model, scheme.for_day(n)?));
        }
    }
    Ok(chunked_mc(stream, n_samples, |rng, buf, scratch| {
        let (phi, n) = members[rng.random_range(0..members.len())];
        if n == 1 {
            return phi.sqrt();
        }
        let (sign_model, sampler) = &samplers[&n];
        sign_power(phi + others_flow(rng, n, sign_model, sampler, buf, scratch), 0.5)
    }))
}

fn draw_n<R: Rng + ?Sized>(rng: &mut R, cumulative: &[(usize, f64)]) -> usize {
    let u: f64 = rng.random();
    cumulative
        .iter()
        .find(|&&(_, c)| u < c)
        .or(cumulative.last())
        .map(|&(n, _)| n)
        .expect("p_n is not empty")
}

/// Synthetic market days: N from p(N), fair hidden factor, signs and
/// magnitudes from the config, and return Y·Φ^{•1/2} plus Gaussian noise.
///
/// Day `d` draws from substream `d` of `RngStream::new(seed, 0)`, so output
/// is independent of the thread count. Days whose gross volume Σ|φ_i|
/// exceeds 1 are redrawn.
pub fn generate_synthetic_market(config: &SimConfig, n_days: usize) -> Result<Vec<DayPanel>> {
    config.validate()?;
    if n_days == 0 {
        return Err(Error::Config("n_days must be >= 1".into()));
    }
    let mut acc = 0.0;
    let cumulative: Vec<(usize, f64)> = config
        .p_n
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&n, &p)| {
            acc += p;
            (n, acc)
        })
        .collect();
    let root = RngStream::new(config.seed, 0);
    let base = synthetic_base_date();
    let params = AnsatzParams::net_flow_sqrt(config.y_ratio)?;
    (0..n_days)
        .into_par_iter()
        .map(|d| {
            let mut rng = root.substream(d as u64);
            let n = draw_n(&mut rng, &cumulative);
            let sampler = config.volume_scheme.for_day(n)?;
            let mut mags = vec![0.0; n];
            let mut scratch = Vec::new();
            let mut attempt = 0;
            let phis = loop {
                let signs = sample_signs_unconditioned(&mut rng, n, &config.sign_model);
                sampler.fill(&mut rng, &mut mags, &mut scratch);
                if mags.iter().sum::<f64>() <= 1.0 {
                    break signs.iter().zip(&mags).map(|(s, m)| s * m).collect::<Vec<f64>>();
                }
                attempt += 1;
                if attempt == MAX_DAY_ATTEMPTS {
                    return Err(Error::Infeasible {
                        n,
                        reason: format!("{MAX_DAY_ATTEMPTS} draws all had total volume fraction above 1"),
                    });
                }
            };
            let noise: f64 = if config.noise_sd > 0.0 {
                config.noise_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            let ret = aggregate_impact(&phis, &params) + noise;
            let date = base
                .checked_add_days(Days::new(d as u64))
                .ok_or_else(|| Error::Config(format!("day index {d} overflows the calendar")))?;
            DayPanel::new(SYNTHETIC_SYMBOL, date, phis, ret)
        })
        .collect()
}

/// Panels whose N volumes are exchangeable zero-mean Gaussians with
/// E[φ²] = `second_moment` and pairwise correlation `c_phi`. Returns are
/// Φ^{•1/2}.
pub fn generate_exchangeable_gaussian_panels(
    n: usize,
    second_moment: f64,
    c_phi: f64,
    n_panels: usize,
    stream: &RngStream,
) -> Result<Vec<DayPanel>> {
    crate::gaussian::GaussianPanelModel::new(n, second_moment, c_phi)?;
    let sigma = second_moment.sqrt();
    let nf = n as f64;
    // Symmetric square root of (1 − C)I + C·11ᵀ.
    let diag = (1.0 - c_phi).sqrt();
    let common = ((1.0 - c_phi + nf * c_phi).sqrt() - diag) / nf;
    let base = synthetic_base_date();
    (0..n_panels)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream.substream(d as u64);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let total: f64 = z.iter().sum();
            let phis: Vec<f64> = z.iter().map(|zi| sigma * (diag * zi + common * total)).collect();
            if phis.iter().map(|x| x.abs()).sum::<f64>() > 1.0 {
                return Err(Error::Infeasible {
                    n,
                    reason: "Gaussian draw exceeds the daily volume; lower second_moment".into(),
                });
            }
            let date = base
                .checked_add_days(Days::new(d as u64))
                .ok_or_else(|| Error::Config(format!("panel index {d} overflows the calendar")))?;
            let net: f64 = phis.iter().sum();
            DayPanel::new(SYNTHETIC_SYMBOL, date, phis, sqrt_law(net, 1.0))
        })
        .collect()
}
