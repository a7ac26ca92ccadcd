//! Seeded Monte Carlo checks: samplers against their population moments and
//! estimators against the parameters that generated the data.

mod common;

use coimpact::calibration::{fit_gamma_eps, fit_gmm_gaussian, fit_shifted_sqrt, fit_y_ratio, model_vs_empirical};
use coimpact::domain::DayPanel;
use coimpact::estimators::{
    binned_curve, net_flow_samples, powerlaw_tail_fit, sign_correlation_by_n, sigma_by_n, CurveBin, ImpactCurve,
};
use coimpact::gaussian::iid_gaussian_impact;
use coimpact::sim::{
    generate_exchangeable_gaussian_panels, generate_synthetic_market, mixture_impact, SigmaSpec, SignModel,
    SimConfig, VolumeScheme,
};
use coimpact::specfun::{
    sample_flat_dirichlet, sample_gaussian, sample_half_normal, sample_stable_symmetric, RngStream,
};
use common::{linear_fit, log_space};
use rand::Rng;

fn config(p_n: &[(usize, f64)], gamma_eps: f64, sigma: SigmaSpec, noise_sd: f64, seed: u64) -> SimConfig {
    SimConfig {
        p_n: p_n.iter().copied().collect(),
        sign_model: SignModel::new(gamma_eps).unwrap(),
        volume_scheme: VolumeScheme::HalfNormal(sigma),
        y_ratio: 1.0,
        noise_sd,
        seed,
    }
}

fn uniform(lo: usize, hi: usize) -> Vec<(usize, f64)> {
    let k = (hi - lo + 1) as f64;
    (lo..=hi).map(|n| (n, 1.0 / k)).collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn gaussian_sample_sd_is_within_chi_square_band() {
    let xs = sample_gaussian(&mut RngStream::new(1, 0), 0.0, 0.008, 1_000_000).unwrap();
    let (mean, sd) = mean_sd(&xs);
    assert!((sd / 0.008 - 1.0).abs() <= 3.0 / (2e6f64).sqrt());
    assert!(mean.abs() <= 3.0 * 0.008 / 1e3);
}

#[test]
fn half_normal_mean_is_sigma_sqrt_two_over_pi() {
    let xs = sample_half_normal(&mut RngStream::new(2, 0), 0.008, 1_000_000).unwrap();
    let (mean, sd) = mean_sd(&xs);
    let target = 0.008 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((target - 0.006383).abs() < 1e-6);
    assert!((mean - target).abs() <= 3.0 * sd / 1e3);
    assert!(xs.iter().all(|&x| x > 0.0));
}

#[test]
fn stable_sampler_scale_and_tail() {
    let mut stream = RngStream::new(3, 0);
    // α = 2 is Gaussian with variance 2c².
    let g = sample_stable_symmetric(&mut stream, 2.0, 0.5, 400_000).unwrap();
    let (_, sd) = mean_sd(&g);
    assert!((sd * sd / 0.5 - 1.0).abs() < 0.01);

    // α = 1, c = 1 is the standard Cauchy law: quartiles at ±1.
    let mut cauchy = sample_stable_symmetric(&mut stream, 1.0, 1.0, 400_000).unwrap();
    cauchy.sort_by(f64::total_cmp);
    let q = |p: f64| cauchy[(p * cauchy.len() as f64) as usize];
    assert!(q(0.5).abs() < 0.01);
    assert!((q(0.75) - 1.0).abs() < 0.02 && (q(0.25) + 1.0).abs() < 0.02);

    // α = 1.5: Hill estimate of the |x| tail index over the top 2000 of 10⁶.
    let mut tail: Vec<f64> = sample_stable_symmetric(&mut stream, 1.5, 1.0, 1_000_000)
        .unwrap()
        .into_iter()
        .map(f64::abs)
        .collect();
    tail.sort_by(|a, b| b.total_cmp(a));
    let k = 2000;
    let hill = (0..k).map(|i| (tail[i] / tail[k]).ln()).sum::<f64>() / k as f64;
    assert!((1.0 / hill - 1.5).abs() < 0.15, "tail index {}", 1.0 / hill);
}

#[test]
fn dirichlet_components_sum_to_one_with_known_variance() {
    let mut stream = RngStream::new(4, 0);
    assert_eq!(sample_flat_dirichlet(&mut stream, 1).unwrap(), vec![1.0]);
    let draws: Vec<Vec<f64>> = (0..200_000).map(|_| sample_flat_dirichlet(&mut stream, 4).unwrap()).collect();
    for d in &draws {
        assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(d.iter().all(|&x| x > 0.0));
    }
    let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let (mean, sd) = mean_sd(&first);
    assert!((mean - 0.25).abs() < 3.0 * sd / (2e5f64).sqrt());
    assert!((sd * sd - 0.0375).abs() < 0.0375 * 0.02);
}

#[test]
fn tail_fit_recovers_truncated_pareto_exponent() {
    let mut rng = RngStream::new(5, 0);
    let a: f64 = -0.83;
    let (lo, hi) = (1e-5f64, 1.0f64);
    let (l, h) = (lo.powf(a + 1.0), hi.powf(a + 1.0));
    let xs: Vec<f64> = (0..200_000)
        .map(|_| {
            let u: f64 = rng.random();
            (l + u * (h - l)).powf(1.0 / (a + 1.0))
        })
        .collect();
    let fit = powerlaw_tail_fit(&xs, 1e-4, 1e-1).unwrap();
    assert!((fit.exponent - a).abs() < 0.02, "exponent {}", fit.exponent);
}

#[test]
fn fair_mixture_averages_sqrt_and_pair_curve() {
    let cfg = config(&[(1, 0.5), (2, 0.5)], 0.0, SigmaSpec::Constant(0.008), 0.0, 0);
    let stream = RngStream::new(6, 0);
    for phi in [1e-4, 2e-3, 0.02, 0.2] {
        let est = mixture_impact(phi, &cfg, 200_000, &stream).unwrap();
        let target = 0.5 * phi.sqrt() + 0.5 * iid_gaussian_impact(phi, 2, 0.008).unwrap();
        assert!((est.mean - target).abs() <= 3.0 * est.std_error, "phi {phi}: {} vs {target}", est.mean);
    }
}

#[test]
fn sign_correlation_recovers_gamma_squared() {
    let panels = generate_synthetic_market(&config(&uniform(2, 6), 0.3, SigmaSpec::Constant(0.01), 1.0, 7), 100_000)
        .unwrap();
    for (n, est) in sign_correlation_by_n(&panels, 2).unwrap() {
        assert!((est.c_eps - 0.09).abs() <= 3.0 * est.std_error, "N = {n}: {} +/- {}", est.c_eps, est.std_error);
    }
    let pooled = fit_gamma_eps(&panels, 2, 2).unwrap().plateau.unwrap();
    assert!((pooled.gamma - 0.3).abs() <= 0.015, "gamma {}", pooled.gamma);
}

#[test]
fn sigma_by_n_recovers_constant_and_inverse_n_schemes() {
    let constant =
        generate_synthetic_market(&config(&uniform(1, 8), 0.0, SigmaSpec::Constant(0.008), 0.0, 8), 40_000).unwrap();
    for (n, est) in sigma_by_n(&constant, 2) {
        assert!((est.sigma / 0.008 - 1.0).abs() < 0.03, "N = {n}: {}", est.sigma);
    }

    let ns = [2usize, 4, 8, 16, 32, 64];
    let p: Vec<(usize, f64)> = ns.iter().map(|&n| (n, 1.0 / ns.len() as f64)).collect();
    let inverse = generate_synthetic_market(&config(&p, 0.0, SigmaSpec::InverseN(0.05), 0.0, 9), 30_000).unwrap();
    let estimates = sigma_by_n(&inverse, 2);
    let x: Vec<f64> = estimates.keys().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = estimates.values().map(|e| e.sigma.ln()).collect();
    let (_, slope, _) = linear_fit(&x, &y);
    assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn y_ratio_is_exact_without_noise_and_unbiased_with_it() {
    let mut cfg = config(&uniform(1, 5), 0.2, SigmaSpec::Constant(0.02), 0.0, 10);
    cfg.y_ratio = 0.7;
    let clean = generate_synthetic_market(&cfg, 5_000).unwrap();
    let fit = fit_y_ratio(&clean, 1.0, 0.5).unwrap();
    assert!((fit.y_ratio - 0.7).abs() <= 1e-12);

    let noisy = generate_synthetic_market(&config(&uniform(2, 10), 0.3, SigmaSpec::Constant(0.05), 2.0, 11), 100_000)
        .unwrap();
    let fit = fit_y_ratio(&noisy, 1.0, 0.5).unwrap();
    assert!((fit.y_ratio - 1.0).abs() <= 3.0 * fit.std_error, "Y {} +/- {}", fit.y_ratio, fit.std_error);
}

#[test]
fn gmm_recovers_volume_correlation() {
    let panels = generate_exchangeable_gaussian_panels(5, 6.4e-5, 0.1, 100_000, &RngStream::new(12, 0)).unwrap();
    let fit = fit_gmm_gaussian(&panels, 2).unwrap()[&5];
    assert!((fit.c_phi - 0.1).abs() <= 3.0 * fit.c_phi_std_error, "C {} +/- {}", fit.c_phi, fit.c_phi_std_error);
    assert!((fit.second_moment / 6.4e-5 - 1.0).abs() < 0.02);
    assert!(fit.round_trip_error < 1e-12);

    let independent = generate_exchangeable_gaussian_panels(5, 6.4e-5, 0.0, 100_000, &RngStream::new(13, 0)).unwrap();
    let fit = fit_gmm_gaussian(&independent, 2).unwrap()[&5];
    assert!(fit.b.abs() < 0.05 * fit.a, "A {} B {}", fit.a, fit.b);
}

#[test]
fn shifted_sqrt_fits_a_simulated_mixture_curve() {
    let cfg = config(&[(2, 0.3), (5, 0.4), (20, 0.3)], 0.3, SigmaSpec::Constant(0.008), 0.0, 0);
    let stream = RngStream::new(14, 0);
    let bins: Vec<CurveBin> = log_space(1e-4, 0.3, 25)
        .into_iter()
        .map(|phi| {
            let est = mixture_impact(phi, &cfg, 50_000, &stream).unwrap();
            CurveBin { phi_center: phi, mean_impact: est.mean, std_error: est.std_error, count: 50_000 }
        })
        .collect();
    let fit = fit_shifted_sqrt(&ImpactCurve { bins }).unwrap();
    // Far beyond every crossover the mixture tends to √φ.
    let far = mixture_impact(10.0, &cfg, 50_000, &stream).unwrap().mean / 10f64.sqrt();
    assert!(fit.b > 0.0);
    assert!((fit.a / far - 1.0).abs() < 0.1, "A {} vs {far}", fit.a);
}

#[test]
fn model_reproduces_its_own_panels() {
    let p = [(1, 0.2), (2, 0.2), (5, 0.2), (25, 0.2), (40, 0.2)];
    let panels = generate_synthetic_market(&config(&p, 0.3, SigmaSpec::Constant(0.008), 0.3, 15), 40_000).unwrap();
    let split = model_vs_empirical(&panels, 0.05, 8, 4_000, &RngStream::new(16, 0)).unwrap();
    assert_eq!(split.subsamples.len(), 2);
    assert!(split.fraction_within(3.0) >= 0.95, "{}", split.fraction_within(3.0));

    let whole = model_vs_empirical(&panels, 1.0, 8, 4_000, &RngStream::new(16, 0)).unwrap();
    assert_eq!(whole.subsamples.len(), 1);
    let multi: usize = panels.iter().filter(|p| p.n >= 2).count();
    assert_eq!(whole.subsamples[0].panels, multi);
    assert!(whole.fraction_within(3.0) >= 0.95);
}

#[test]
fn fair_signs_show_a_selection_intercept_in_the_high_rho_part() {
    // Conditioning on ρ > threshold selects aligned days even when γ = 0;
    // the matched simulation uses the part's own γ̂_N and must follow.
    let p = [(2, 0.3), (5, 0.4), (25, 0.3)];
    let panels = generate_synthetic_market(&config(&p, 0.0, SigmaSpec::Constant(0.008), 0.3, 17), 40_000).unwrap();
    let split = model_vs_empirical(&panels, 0.05, 6, 4_000, &RngStream::new(18, 0)).unwrap();
    let high = &split.subsamples[0];
    assert!(high.gamma_by_n.values().all(|&g| g > 0.2));
    assert!(high.bins[0].empirical > 0.0 && high.bins[0].model > 0.0);
    let within = high.bins.iter().filter(|b| b.z.abs() <= 3.0).count();
    assert!(within as f64 >= 0.95 * high.bins.len() as f64);
}

#[test]
fn low_rho_part_carries_a_negative_selection_bias() {
    // |ρ| ≤ threshold forces a near-zero net sign count, so given ε_k = +1
    // the others lean to −1. No hidden factor with γ ≥ 0 produces that, and
    // the empirical curve sits below the simulated one.
    let p = [(2, 0.3), (5, 0.4), (25, 0.3)];
    let panels = generate_synthetic_market(&config(&p, 0.0, SigmaSpec::Constant(0.008), 0.3, 17), 40_000).unwrap();
    let split = model_vs_empirical(&panels, 0.05, 6, 4_000, &RngStream::new(18, 0)).unwrap();
    let low = &split.subsamples[1];
    assert_eq!(low.gamma_by_n.keys().copied().collect::<Vec<_>>(), vec![25]);
    let mean_z = low.bins.iter().map(|b| b.z).sum::<f64>() / low.bins.len() as f64;
    assert!(mean_z < -1.0, "mean z {mean_z}");
}

#[test]
fn global_curve_follows_sqrt_of_net_flow() {
    let panels: Vec<DayPanel> =
        generate_synthetic_market(&config(&uniform(1, 6), 0.0, SigmaSpec::Constant(0.01), 0.0, 19), 20_000).unwrap();
    let curve = binned_curve(&net_flow_samples(&panels), 10, 50).unwrap();
    for bin in &curve.bins {
        // Noise-free returns are exactly Φ^{•1/2}; only the widest, first bin
        // shows a visible Jensen gap between mean √ and √ of the centre.
        let tolerance = if bin.phi_center < 1e-3 { 0.15 } else { 0.01 };
        assert!((bin.mean_impact / bin.phi_center.sqrt() - 1.0).abs() < tolerance, "{bin:?}");
    }
}
