//! `coimpact` command-line front end.
//!
//! Data goes to standard output or `--out`; diagnostics go to standard
//! error. Exit status is 0 on success, 1 for invalid input or usage, 2 when
//! a numerical method fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveTime, TimeDelta};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coimpact::calibration::{
    default_alpha_grid, default_delta_grid, fit_alpha_delta, fit_gamma_eps, fit_gmm_at_n, fit_shifted_sqrt,
    fit_y_ratio, model_vs_empirical, panels_by_n, DEFAULT_PLATEAU_MIN_N,
};
use coimpact::domain::{apply_filters, build_panels, read_panels, read_records, write_panels, FilterConfig};
use coimpact::estimators::{
    binned_curve, herfindahl_by_n, metaorder_samples, net_flow_samples, p_n_histogram, sign_correlation,
    sigma_by_n, DEFAULT_MIN_COUNT, DEFAULT_MIN_PANELS,
};
use coimpact::gaussian::{
    correlated_gaussian_impact, iid_gaussian_impact, levy_crossover, levy_linear_slope, GaussianPanelModel,
};
use coimpact::sim::{generate_synthetic_market, mc_impact, SigmaSpec, SignModel, SimConfigFile, VolumeScheme};
use coimpact::specfun::{self_check, RngStream};
use coimpact::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const THREADS_ENV: &str = "COIMPACT_THREADS";

#[derive(Parser, Debug)]
#[command(name = "coimpact", version, about = "Co-impact of simultaneous metaorders: curves, simulation and calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter metaorder records and group them into day panels (panel CSV).
    Ingest(IngestArgs),
    /// Generate synthetic panels from a JSON config (panel CSV).
    Simulate(SimulateArgs),
    /// Monte Carlo impact curve I_N(φ) under the hidden-factor sign model (CSV phi,impact,stderr).
    ImpactMc(ImpactMcArgs),
    /// Closed-form impact curve on a log-spaced grid (CSV phi,impact).
    Curve(CurveArgs),
    /// Descriptive statistics of a panel CSV (JSON).
    Analyze(AnalyzeArgs),
    /// Fit the model to a panel CSV (JSON).
    Calibrate(CalibrateArgs),
    /// Self-test of the special functions against stored references (CSV).
    SpecfunCheck(OutArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutArgs {
    /// Write data here instead of standard output; a manifest is written to <out>.manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Metaorder CSV with header date,symbol,broker_id,sign,shares,start_time,end_time,day_volume,exec_volume,open,high,low,close.
    #[arg(long)]
    input: PathBuf,
    /// File with one allowed symbol per line (filter 1).
    #[arg(long)]
    whitelist: Option<PathBuf>,
    /// Metaorders must end strictly before this time, HH:MM:SS (filter 2).
    #[arg(long, default_value = "16:01:00")]
    latest_end: String,
    /// Metaorders must last strictly longer than this many seconds (filter 3).
    #[arg(long, default_value_t = 120)]
    min_duration_secs: i64,
    /// Participation rate must be strictly below this (filter 4).
    #[arg(long, default_value_t = 0.30)]
    max_participation: f64,
    /// Write the filter report as JSON here instead of standard error.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// JSON config. Keys: p_n (object N -> probability), gamma_eps, y_ratio, noise_sd, seed, days,
    /// and the volume keys: volume_scheme (half_normal | histogram | flat_dirichlet | stable),
    /// sigma, sigma_scaling (constant | inverse_n), sigma_table, histogram_edges, histogram_masses,
    /// dirichlet_total, stable_alpha, stable_scale. Unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed given in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct ImpactMcArgs {
    /// Number of simultaneous metaorders N.
    #[arg(long)]
    n: usize,
    /// Hidden-factor coupling γ_ε in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Half-normal volume scale Σ_N.
    #[arg(long)]
    sigma: f64,
    /// Monte Carlo samples per grid point.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    phi_min: f64,
    #[arg(long, default_value_t = 0.1)]
    phi_max: f64,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CurveModel {
    IidGaussian,
    CorrelatedGaussian,
    /// Lower envelope min(slope·φ, √φ) of the two stable-volume asymptotes.
    LevyAsymptote,
}

#[derive(Args, Debug, Serialize)]
struct CurveArgs {
    #[arg(long, value_enum)]
    model: CurveModel,
    #[arg(long)]
    n: usize,
    /// Σ_N; for correlated-gaussian E[φ²] = sigma².
    #[arg(long)]
    sigma: Option<f64>,
    /// Volume correlation C_φ (correlated-gaussian).
    #[arg(long, default_value_t = 0.0)]
    cphi: f64,
    /// Stable index (levy-asymptote).
    #[arg(long)]
    alpha: Option<f64>,
    /// Stable coefficient c in exp(-c|λ|^α) (levy-asymptote).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    phi_min: f64,
    #[arg(long, default_value_t = 0.1)]
    phi_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    /// Panel CSV.
    #[arg(long)]
    input: PathBuf,
    /// Bins of each impact curve.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Smallest bin population.
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: usize,
    /// Smallest number of panels for an N to be reported.
    #[arg(long, default_value_t = DEFAULT_MIN_PANELS)]
    min_panels: usize,
    /// Smallest N in the pooled γ_ε plateau.
    #[arg(long, default_value_t = DEFAULT_PLATEAU_MIN_N)]
    plateau_min_n: usize,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    /// Panel CSV.
    #[arg(long)]
    input: PathBuf,
    /// α grid as start:stop:step or a comma list (default 0.1:2.0:0.1).
    #[arg(long)]
    alpha_grid: Option<String>,
    /// δ grid as start:stop:step or a comma list (default 0.1:1.0:0.05).
    #[arg(long)]
    delta_grid: Option<String>,
    /// Split panels at this realized sign correlation; 1 keeps them together.
    #[arg(long, default_value_t = 0.05)]
    rho_threshold: f64,
    /// Monte Carlo samples per model-curve bin.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bins of the model-vs-data curves.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Smallest number of panels for an N to be fitted.
    #[arg(long, default_value_t = DEFAULT_MIN_PANELS)]
    min_panels: usize,
    /// Smallest N in the pooled γ_ε plateau.
    #[arg(long, default_value_t = DEFAULT_PLATEAU_MIN_N)]
    plateau_min_n: usize,
    #[command(flatten)]
    output: OutArgs,
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config: Value,
    inputs: Vec<InputDigest>,
    seed: Option<u64>,
    version: &'static str,
    threads: usize,
    timestamp: String,
}

/// Primary output plus what the manifest records about how it was made.
struct Run {
    data: Vec<u8>,
    inputs: Vec<InputDigest>,
    seed: Option<u64>,
    config: Value,
}

impl Run {
    fn new(data: Vec<u8>, config: Value) -> Self {
        Self { data, inputs: Vec::new(), seed: None, config }
    }
}

fn read_input(path: &Path, digests: &mut Vec<InputDigest>) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    digests.push(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
    Ok(bytes)
}

fn to_config(args: &impl Serialize) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min) || !max.is_finite() || points == 0 {
        return Err(Error::Config(format!(
            "grid needs 0 < phi-min <= phi-max and points >= 1, got [{min}, {max}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| match i {
            0 => min,
            i if i == points - 1 => max,
            i => (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp(),
        })
        .collect())
}

/// Parses `start:stop:step` or `a,b,c`.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Config(format!("bad grid {text:?}: {why}"));
    let number = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // Rounded so that 0.1 + 9·0.1 prints as 1.
            Ok((0..=count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [_] => text.split(',').map(number).collect(),
        _ => Err(bad("expected start:stop:step or a comma list")),
    }
}

/// Either a result or the reason it could not be computed.
#[derive(Serialize)]
#[serde(untagged)]
enum Outcome<T> {
    Value(T),
    Failed { error: String },
}

impl<T> From<Result<T>> for Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => Outcome::Failed { error: e.to_string() },
        }
    }
}

fn ingest(args: &IngestArgs) -> Result<Run> {
    let mut inputs = Vec::new();
    let bytes = read_input(&args.input, &mut inputs)?;
    let whitelist = match &args.whitelist {
        Some(path) => {
            let text = String::from_utf8(read_input(path, &mut inputs)?)
                .map_err(|_| Error::Config("whitelist is not UTF-8".into()))?;
            Some(text.lines().map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
        }
        None => None,
    };
    let config = FilterConfig {
        symbol_whitelist: whitelist,
        latest_end: NaiveTime::parse_from_str(&args.latest_end, "%H:%M:%S")
            .map_err(|e| Error::Config(format!("--latest-end: {e}")))?,
        min_duration: TimeDelta::seconds(args.min_duration_secs),
        max_participation: args.max_participation,
    };
    config.validate()?;
    let records = read_records(bytes.as_slice())?;
    if records.is_empty() {
        eprintln!("warning: {} contains no records", args.input.display());
    }
    let (kept, report) = apply_filters(&records, &config);
    if report.missing_exec_volume > 0 {
        eprintln!(
            "warning: {} records lack exec_volume and skipped the participation filter",
            report.missing_exec_volume
        );
    }
    let panels = build_panels(&kept)?;
    let report_json = json_bytes(&json!({ "filters": report, "panels": panels.len() }));
    match &args.report {
        Some(path) => write_file(path, &report_json)?,
        None => io::stderr().write_all(&report_json)?,
    }
    let mut data = Vec::new();
    write_panels(&mut data, &panels)?;
    Ok(Run { inputs, ..Run::new(data, to_config(args)) })
}

fn simulate(args: &SimulateArgs) -> Result<Run> {
    let mut inputs = Vec::new();
    let text = String::from_utf8(read_input(&args.config, &mut inputs)?)
        .map_err(|_| Error::Config("config is not UTF-8".into()))?;
    let mut file = SimConfigFile::from_json(&text)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let (config, days) = file.resolve()?;
    let panels = generate_synthetic_market(&config, days)?;
    let mut data = Vec::new();
    write_panels(&mut data, &panels)?;
    Ok(Run {
        inputs,
        seed: Some(config.seed),
        ..Run::new(data, serde_json::to_value(&file).unwrap_or(Value::Null))
    })
}

fn impact_mc(args: &ImpactMcArgs) -> Result<Run> {
    let model = SignModel::new(args.gamma)?;
    let scheme = VolumeScheme::HalfNormal(SigmaSpec::Constant(args.sigma));
    let root = RngStream::new(args.seed, 0);
    let mut data = b"phi,impact,stderr\n".to_vec();
    for (i, phi) in log_grid(args.phi_min, args.phi_max, args.points)?.into_iter().enumerate() {
        let est = mc_impact(phi, args.n, &model, &scheme, args.samples, &root.substream(i as u64))?;
        writeln!(data, "{phi},{},{}", est.mean, est.std_error)?;
    }
    Ok(Run { seed: Some(args.seed), ..Run::new(data, to_config(args)) })
}

fn curve(args: &CurveArgs) -> Result<Run> {
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Error::Config(format!("model {:?} requires --{flag}", args.model)))
    };
    let grid = log_grid(args.phi_min, args.phi_max, args.points)?;
    let values: Vec<f64> = match args.model {
        CurveModel::IidGaussian => {
            let sigma = need(args.sigma, "sigma")?;
            grid.iter().map(|&phi| iid_gaussian_impact(phi, args.n, sigma)).collect::<Result<_>>()?
        }
        CurveModel::CorrelatedGaussian => {
            let sigma = need(args.sigma, "sigma")?;
            let model = GaussianPanelModel::new(args.n, sigma * sigma, args.cphi)?;
            grid.iter().map(|&phi| correlated_gaussian_impact(phi, &model)).collect::<Result<_>>()?
        }
        CurveModel::LevyAsymptote => {
            let (alpha, c) = (need(args.alpha, "alpha")?, need(args.c, "c")?);
            let slope = levy_linear_slope(args.n, c, alpha)?;
            let crossover = levy_crossover(args.n, c, alpha)?;
            eprintln!("levy slope {slope}, crossover scale {crossover}");
            grid.iter().map(|&phi| (slope * phi).min(phi.sqrt())).collect()
        }
    };
    let mut data = b"phi,impact\n".to_vec();
    for (phi, value) in grid.iter().zip(values) {
        writeln!(data, "{phi},{value}")?;
    }
    Ok(Run::new(data, to_config(args)))
}

fn load_panels(path: &Path, inputs: &mut Vec<InputDigest>) -> Result<Vec<coimpact::domain::DayPanel>> {
    let bytes = read_input(path, inputs)?;
    read_panels(bytes.as_slice())
}

fn analyze(args: &AnalyzeArgs) -> Result<Run> {
    let mut inputs = Vec::new();
    let panels = load_panels(&args.input, &mut inputs)?;
    if panels.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no panels", args.input.display())));
    }
    let sign_correlation_by_n: BTreeMap<usize, Outcome<_>> = panels_by_n(&panels)
        .into_iter()
        .filter(|(n, group)| *n >= 2 && group.len() >= args.min_panels)
        .map(|(n, group)| (n, sign_correlation(&group).into()))
        .collect();
    let report = json!({
        "panels": panels.len(),
        "metaorders": panels.iter().map(|p| p.n).sum::<usize>(),
        "sign_correlation_by_n": sign_correlation_by_n,
        "gamma_eps": Outcome::from(fit_gamma_eps(&panels, args.min_panels, args.plateau_min_n)),
        "sigma_by_n": sigma_by_n(&panels, args.min_panels),
        "herfindahl_by_n": herfindahl_by_n(&panels, args.min_panels)?,
        "p_n": p_n_histogram(&panels),
        "impact_curve": {
            "global": Outcome::from(binned_curve(&net_flow_samples(&panels), args.bins, args.min_count)),
            "metaorder": Outcome::from(binned_curve(&metaorder_samples(&panels), args.bins, args.min_count)),
        },
    });
    Ok(Run { inputs, ..Run::new(json_bytes(&report), to_config(args)) })
}

fn calibrate(args: &CalibrateArgs) -> Result<Run> {
    let mut inputs = Vec::new();
    let panels = load_panels(&args.input, &mut inputs)?;
    let alpha_grid = args.alpha_grid.as_deref().map(parse_grid).transpose()?.unwrap_or_else(default_alpha_grid);
    let delta_grid = args.delta_grid.as_deref().map(parse_grid).transpose()?.unwrap_or_else(default_delta_grid);
    let grid_fit = fit_alpha_delta(&panels, &alpha_grid, &delta_grid)?;
    let y_ratio = fit_y_ratio(&panels, grid_fit.argmax.0, grid_fit.argmax.1)?;
    let gamma = fit_gamma_eps(&panels, args.min_panels, args.plateau_min_n)?;
    let gmm_by_n: BTreeMap<usize, Outcome<_>> = panels_by_n(&panels)
        .into_iter()
        .filter(|(n, group)| *n >= 2 && group.len() >= args.min_panels)
        .map(|(n, group)| (n, fit_gmm_at_n(&group).into()))
        .collect();
    let shifted_sqrt: Outcome<_> = binned_curve(&metaorder_samples(&panels), args.bins, DEFAULT_MIN_COUNT)
        .and_then(|c| fit_shifted_sqrt(&c))
        .into();
    let comparison = model_vs_empirical(
        &panels,
        args.rho_threshold,
        args.bins,
        args.samples,
        &RngStream::new(args.seed, 0),
    );
    let within = comparison.as_ref().ok().map(|c| c.fraction_within(3.0));
    let report = json!({
        "grid_fit": {
            "alpha_grid": alpha_grid,
            "delta_grid": delta_grid,
            "argmax": grid_fit.argmax,
            "r2_max": grid_fit.r2_max,
            "grid": grid_fit.grid,
        },
        "y_ratio": y_ratio,
        "gamma_by_n": gamma,
        "gmm_by_n": gmm_by_n,
        "shifted_sqrt": shifted_sqrt,
        "model_vs_empirical": Outcome::from(comparison),
        "bins_within_3_sigma": within,
    });
    Ok(Run { inputs, seed: Some(args.seed), ..Run::new(json_bytes(&report), to_config(args)) })
}

fn specfun_check(args: &OutArgs) -> Result<(Run, bool)> {
    let rows = self_check();
    let mut data = b"function,input,value,reference,relative_error,threshold,passed\n".to_vec();
    for r in &rows {
        writeln!(
            data,
            "{},{},{},{},{},{},{}",
            r.function,
            r.input,
            r.value,
            r.reference,
            r.relative_error,
            r.threshold,
            r.passed()
        )?;
    }
    Ok((Run::new(data, to_config(args)), rows.iter().all(|r| r.passed())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn emit(command: &'static str, run: Run, out: Option<&Path>) -> Result<()> {
    let manifest = RunManifest {
        command,
        config: run.config,
        inputs: run.inputs,
        seed: run.seed,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    let manifest = json_bytes(&manifest);
    match out {
        Some(path) => {
            write_file(path, &run.data)?;
            let mut name = path.as_os_str().to_owned();
            name.push(".manifest.json");
            write_file(Path::new(&name), &manifest)
        }
        None => {
            io::stdout().write_all(&run.data)?;
            io::stderr().write_all(&manifest)?;
            Ok(())
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a nonnegative integer, got {raw:?}")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    let mut ok = true;
    match &cli.command {
        Command::Ingest(a) => emit("ingest", ingest(a)?, a.output.out.as_deref())?,
        Command::Simulate(a) => emit("simulate", simulate(a)?, a.output.out.as_deref())?,
        Command::ImpactMc(a) => emit("impact-mc", impact_mc(a)?, a.output.out.as_deref())?,
        Command::Curve(a) => emit("curve", curve(a)?, a.output.out.as_deref())?,
        Command::Analyze(a) => emit("analyze", analyze(a)?, a.output.out.as_deref())?,
        Command::Calibrate(a) => emit("calibrate", calibrate(a)?, a.output.out.as_deref())?,
        Command::SpecfunCheck(a) => {
            let (run, passed) = specfun_check(a)?;
            emit("specfun-check", run, a.out.as_deref())?;
            ok = passed;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: self-check rows exceeded their thresholds");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
