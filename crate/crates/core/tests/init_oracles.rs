mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use common::{rel_err, simpson, simpson_panels};
use rand::Rng;
use splinelens_core::init::{
    bessel_k0, beta_marginal, breakpoint_samples, cantelli_bound, cauchy_cdf, joint_density,
    ks_statistic, mu_conditional, mu_marginal, roughness_moments, sample_net,
    uniform_breakpoint_init, GaussianInitSpec, InitSpec, Preset, UniformInitSpec,
    DEFAULT_SIGMA_B,
};

const SCIPY_K0: [(f64, f64); 12] = [
    (1e-6, 13.93144207362641),
    (1e-3, 7.0236888005623825),
    (0.1, 2.4270690247020164),
    (0.5, 0.9244190712276656),
    (1.0, 0.42102443824070823),
    (2.0, 0.1138938727495334),
    (5.0, 0.0036910983340425942),
    (10.0, 1.778006231616765e-05),
    (50.0, 3.410167749789495e-23),
    (100.0, 4.6566282291759025e-45),
    (300.0, 3.723694854889142e-132),
    (700.0, 4.6697764316853765e-306),
];

fn gaussian(sb: f64, sw: f64, sv: f64) -> InitSpec {
    GaussianInitSpec::new(sb, sw, sv).unwrap().into()
}

fn uniform(ab: f64, aw: f64, av: f64) -> InitSpec {
    UniformInitSpec::new(ab, aw, av).unwrap().into()
}

/// `∫∫ g(β, μ) dβ dμ` over `|β| ≤ 10⁴` and all `μ`, via `β = tan θ`,
/// `μ = tan φ`. Breakpoint tails decay like `β⁻²`, so the excluded mass is
/// below `10⁻⁴` for every spec used here.
fn plane_integral(g: &dyn Fn(f64, f64) -> f64, tol: f64) -> f64 {
    let lim = FRAC_PI_2 - 1e-9;
    let beta_lim = 1e4f64.atan();
    let outer = |th: f64| {
        let (beta, jb) = (th.tan(), 1.0 / th.cos().powi(2));
        let inner = |ph: f64| g(beta, ph.tan()) / ph.cos().powi(2);
        // The μ-profile is a kink at 0 for both families.
        jb * simpson_panels(&inner, &[-lim, 0.0, lim], tol)
    };
    simpson_panels(&outer, &[-beta_lim, 0.0, beta_lim], tol)
}

/// K0 from `∫₀^∞ exp(−x√(β²+1))/√(β²+1) dβ`, splitting at 1 and mapping the tail with `β = eᵘ`.
fn k0_oracle(x: f64) -> f64 {
    let f = |b: f64| {
        let r = (b * b + 1.0).sqrt();
        (-x * r).exp() / r
    };
    let head = simpson(&f, 0.0, 1.0, 1e-15);
    let tail = simpson(&|u: f64| f(u.exp()) * u.exp(), 0.0, (800.0 / x).ln().max(1.0), 1e-15);
    head + tail
}

#[test]
fn k0_matches_scipy_reference() {
    for (x, want) in SCIPY_K0 {
        let got = bessel_k0(x).unwrap();
        assert!((got - want).abs() < 1e-10, "K0({x}) = {got}, want {want}");
        assert!(rel_err(got, want, 1e-320) < 1e-12, "K0({x}) relative");
    }
}

#[test]
fn k0_matches_integral_representation() {
    for x in [0.05, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let want = k0_oracle(x);
        assert!((bessel_k0(x).unwrap() - want).abs() < 1e-11, "x = {x}");
    }
    assert!((k0_oracle(1.0) - 0.42102443824).abs() < 1e-10);
}

#[test]
fn k0_decreasing_and_asymptotic() {
    let grid: Vec<f64> = (0..400).map(|i| 1e-6 * 1.05f64.powi(i)).filter(|&x| x <= 700.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&x| bessel_k0(x).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn joint_density_normalizes() {
    for spec in [gaussian(1.0, 1.0, 1.0), gaussian(0.5, 2.0, 0.3), uniform(1.0, 1.0, 1.0), uniform(2.0, 0.5, 3.0)] {
        let total = plane_integral(&|b, m| joint_density(&spec, b, m), 1e-7);
        assert!((total - 1.0).abs() < 1e-3, "{spec:?}: {total}");
    }
}

#[test]
fn windowed_joint_mass_is_cauchy_mass() {
    // Mass in [−50, 50]² equals the breakpoint mass in [−50, 50] up to the
    // (negligible) delta-slope tail.
    let spec = gaussian(1.0, 1.0, 1.0);
    let inner = |b: f64| simpson_panels(&|m: f64| joint_density(&spec, b, m), &[-50.0, 0.0, 50.0], 1e-9);
    let window = simpson_panels(&inner, &[-50.0, 0.0, 50.0], 1e-8);
    let cauchy = cauchy_cdf(50.0, 1.0) - cauchy_cdf(-50.0, 1.0);
    assert!((window - cauchy).abs() < 1e-4, "{window} vs {cauchy}");
    assert!((1.0 - window) > 1e-3);
}

#[test]
fn marginals_normalize() {
    let lim = FRAC_PI_2 - 1e-12;
    for spec in [gaussian(1.0, 1.0, 1.0), gaussian(0.7, 1.3, 0.4), uniform(1.0, 1.0, 1.0), uniform(2.0, 0.5, 3.0)] {
        let beta_total = simpson_panels(
            &|t: f64| beta_marginal(&spec, t.tan()) / t.cos().powi(2),
            &[-lim, -0.5, 0.0, 0.5, lim],
            1e-10,
        );
        assert!((beta_total - 1.0).abs() < 1e-4, "{spec:?} β: {beta_total}");

        // Log pole at 0: substitute μ = ±e^{−u}… via μ = u² on each side.
        let mu_half = simpson(
            &|u: f64| {
                if u == 0.0 {
                    0.0
                } else {
                    let m = (u / (1.0 - u)).powi(2);
                    mu_marginal(&spec, m).unwrap() * 2.0 * u / (1.0 - u).powi(3)
                }
            },
            0.0,
            1.0 - 1e-9,
            1e-10,
        );
        assert!((2.0 * mu_half - 1.0).abs() < 1e-4, "{spec:?} μ: {}", 2.0 * mu_half);
    }
}

#[test]
fn conditional_times_marginal_is_joint() {
    let mut r = common::rng(5);
    for spec in [gaussian(1.0, 1.0, 1.0), gaussian(0.3, 1.7, 2.2), uniform(1.0, 2.0, 0.5), uniform(3.0, 0.4, 1.1)] {
        for _ in 0..100 {
            let b: f64 = r.random_range(-10.0..10.0);
            let m: f64 = r.random_range(-1.0..1.0);
            let joint = joint_density(&spec, b, m);
            let prod = mu_conditional(&spec, m, b) * beta_marginal(&spec, b);
            assert!(rel_err(joint, prod, 1e-300) < 1e-10, "{spec:?} at ({b}, {m})");
            assert_eq!(joint, joint_density(&spec, -b, m));
            assert_eq!(joint, joint_density(&spec, b, -m));
        }
    }
}

#[test]
fn gaussian_weight_sample_std() {
    let spec = gaussian(1.0, 1.7, 0.5);
    let net = sample_net(&spec, 100_000, 21).unwrap();
    let n = net.w.len() as f64;
    let mean = net.w.iter().sum::<f64>() / n;
    let sd = (net.w.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / 1.7 - 1.0).abs() < 0.02);
}

#[test]
fn breakpoints_are_cauchy() {
    let spec = gaussian(1.0, 1.0, 1.0);
    let (betas, _) = breakpoint_samples(&sample_net(&spec, 100_000, 1).unwrap());
    assert!(ks_statistic(&betas, |b| cauchy_cdf(b, 1.0)) < 0.01);
    let spec = gaussian(2.0, 0.5, 1.0);
    let (betas, _) = breakpoint_samples(&sample_net(&spec, 100_000, 2).unwrap());
    assert!(ks_statistic(&betas, |b| cauchy_cdf(b, 4.0)) < 0.01);
}

#[test]
fn delta_slope_histogram_matches_k0_density() {
    let spec = gaussian(1.0, 1.0, 1.0);
    let mut mus = Vec::with_capacity(1_000_000);
    for seed in 0..10 {
        mus.extend(breakpoint_samples(&sample_net(&spec, 100_000, 100 + seed).unwrap()).1);
    }
    let (lo, hi, bins) = (-6.0, 6.0, 240);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &m in &mus {
        if m < lo || m >= hi {
            outside += 1;
        } else {
            counts[((m - lo) / width) as usize] += 1;
        }
    }
    // Signed mass between 0 and t, with μ = u² taming the log pole.
    let from_zero = |t: f64| {
        let half = |u: f64| if u == 0.0 { 0.0 } else { mu_marginal(&spec, u * u).unwrap() * 2.0 * u };
        t.signum() * simpson(&half, 0.0, t.abs().sqrt(), 1e-13)
    };
    let n = mus.len() as f64;
    let mut l1 = outside as f64 / n;
    for (k, &c) in counts.iter().enumerate() {
        let (a, b) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
        let mass = from_zero(b) - from_zero(a);
        l1 += (c as f64 / n - mass).abs();
    }
    assert!(l1 < 0.02, "L1 = {l1}");
}

#[test]
fn uniform_breakpoint_init_is_uniform() {
    let mut betas = Vec::new();
    for seed in 0..100 {
        betas.extend(breakpoint_samples(&uniform_breakpoint_init(1000, (-1.0, 2.0), seed, 0.01).unwrap()).0);
    }
    assert!(ks_statistic(&betas, |b| ((b + 1.0) / 3.0).clamp(0.0, 1.0)) < 0.01);
}

#[test]
fn he_roughness_mean_and_tails() {
    let h = 64;
    let spec = GaussianInitSpec::he(h, DEFAULT_SIGMA_B).unwrap();
    let (mean, var) = roughness_moments(&spec, h);
    assert!((mean - 4.0).abs() < 1e-12 && (var - 128.0 / h as f64).abs() < 1e-12);
    let draws: Vec<f64> = (0..10_000)
        .map(|s| {
            let (_, mus) = breakpoint_samples(&sample_net(&spec.into(), h, s).unwrap());
            mus.iter().map(|m| m * m).sum()
        })
        .collect();
    let n = draws.len() as f64;
    let m = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((m - 4.0).abs() < 3.0 * sd / n.sqrt());
    for lambda in [1.0, 2.0, 4.0] {
        let tail = draws.iter().filter(|&&d| d - 4.0 >= lambda).count() as f64 / n;
        assert!(tail <= cantelli_bound(Preset::He, h, lambda));
    }
}

#[test]
fn roughness_mean_equals_density_expectation() {
    let spec = GaussianInitSpec::new(0.8, 1.2, 0.9).unwrap();
    let (mean, _) = roughness_moments(&spec, 1);
    let second = plane_integral(&|b, m| m * m * joint_density(&spec.into(), b, m), 1e-8);
    assert!(rel_err(second, mean, 1e-300) < 1e-3, "{second} vs {mean}");
    let _ = PI;
}
