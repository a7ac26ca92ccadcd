//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code, clippy::excessive_precision)]

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the Kronrod
// weights and the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod: starts from `panels` equal pieces and
/// keeps bisecting the piece with the largest error estimate until the
/// summed estimate is below `rel_tol` times the integral.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let width = (b - a) / panels as f64;
    let mut pieces: Vec<(f64, f64, f64, f64)> = (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == panels { b } else { a + width * (i + 1) as f64 };
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    for _ in 0..20_000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if error <= rel_tol * total.abs() {
            break;
        }
        let worst = (0..pieces.len()).max_by(|&i, &j| pieces[i].3.total_cmp(&pieces[j].3)).unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (x, y) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(&f, x, y);
            pieces.push((x, y, v, e));
        }
    }
    pieces.iter().map(|p| p.2).sum()
}

/// E[(m + Z)^{•1/2}] for Z ~ N(0, sd²) by quadrature.
///
/// Folding the density about 0 turns the integrand into two positive terms,
/// √(m+s) + √(m−s) on [0, m] and 2m/(√(s+m) + √(s−m)) beyond, so small m
/// does not cancel. The square-root endpoints at s = m are removed with
/// s = m ∓ t².
pub fn gaussian_sqrt_expectation(m: f64, sd: f64) -> f64 {
    if m < 0.0 {
        return -gaussian_sqrt_expectation(-m, sd);
    }
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let pdf = move |s: f64| norm * (-0.5 * (s / sd) * (s / sd)).exp();
    let reach = 40.0 * sd;
    let below = integrate(
        |v| 2.0 * v * ((2.0 * m - v * v).max(0.0).sqrt() + v) * pdf(m - v * v),
        (m - reach).max(0.0).sqrt(),
        m.sqrt(),
        32,
        1e-13,
    );
    let above = if m < reach {
        integrate(
            |u| 4.0 * m * u / ((2.0 * m + u * u).sqrt() + u) * pdf(m + u * u),
            0.0,
            (reach - m).sqrt(),
            32,
            1e-13,
        )
    } else {
        0.0
    };
    below + above
}

/// I_N(φ)/Y for N i.i.d. N(0, Σ²) metaorders, by quadrature.
pub fn gaussian_impact_quadrature(phi: f64, n: usize, sigma: f64) -> f64 {
    gaussian_sqrt_expectation(phi, sigma * ((n - 1) as f64).sqrt())
}

/// `count` points from `lo` to `hi` evenly spaced in log.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Ordinary least squares y = a + b x. Returns (a, b, r²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope, sxy * sxy / (sxx * syy))
}
