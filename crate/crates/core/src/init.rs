//! Initialization samplers and the function-space densities they induce on
//! breakpoints and delta-slopes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetParams;

/// Name of the generator behind every seeded sampler, for run manifests.
pub const RNG_NAME: &str = "ChaCha8Rng";

/// Bias scale used by the He/Glorot presets when none is given.
pub const DEFAULT_SIGMA_B: f64 = 1.0;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    He,
    Glorot,
}

/// Independent zero-mean Gaussians; the σ are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInitSpec {
    pub sigma_b: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
}

impl GaussianInitSpec {
    pub fn new(sigma_b: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        for s in [sigma_b, sigma_w, sigma_v] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("scale must be positive, got {s}")));
            }
        }
        Ok(GaussianInitSpec {
            sigma_b,
            sigma_w,
            sigma_v,
        })
    }

    /// `σ_w = √2`, `σ_v = √(2/H)`.
    pub fn he(h: usize, sigma_b: f64) -> Result<Self> {
        Self::new(sigma_b, 2f64.sqrt(), (2.0 / h as f64).sqrt())
    }

    /// `σ_w = σ_v = √(2/(H+1))`.
    pub fn glorot(h: usize, sigma_b: f64) -> Result<Self> {
        let s = (2.0 / (h as f64 + 1.0)).sqrt();
        Self::new(sigma_b, s, s)
    }

    pub fn preset(preset: Preset, h: usize, sigma_b: f64) -> Result<Self> {
        match preset {
            Preset::He => Self::he(h, sigma_b),
            Preset::Glorot => Self::glorot(h, sigma_b),
        }
    }
}

/// Independent `U[−a, a]` draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformInitSpec {
    pub a_b: f64,
    pub a_w: f64,
    pub a_v: f64,
}

impl UniformInitSpec {
    pub fn new(a_b: f64, a_w: f64, a_v: f64) -> Result<Self> {
        for a in [a_b, a_w, a_v] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidInput(format!("half-width must be positive, got {a}")));
            }
        }
        Ok(UniformInitSpec { a_b, a_w, a_v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitSpec {
    Gaussian(GaussianInitSpec),
    Uniform(UniformInitSpec),
}

impl From<GaussianInitSpec> for InitSpec {
    fn from(s: GaussianInitSpec) -> Self {
        InitSpec::Gaussian(s)
    }
}

impl From<UniformInitSpec> for InitSpec {
    fn from(s: UniformInitSpec) -> Self {
        InitSpec::Uniform(s)
    }
}

/// Breakpoints on a uniform grid over `[lo, hi]`, zero output weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatInitSpec {
    pub lo: f64,
    pub hi: f64,
    pub h: usize,
}

impl FlatInitSpec {
    pub fn new(lo: f64, hi: f64, h: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidWindow { lo, hi });
        }
        if h == 0 {
            return Err(Error::InvalidInput("H must be at least 1".into()));
        }
        Ok(FlatInitSpec { lo, hi, h })
    }
}

/// I.i.d. draws of `(b_i, w_i, v_i)` per neuron, `b0 = 0`.
pub fn sample_net(spec: &InitSpec, h: usize, seed: u64) -> Result<NetParams> {
    if h == 0 {
        return Err(Error::InvalidInput("H must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut net = NetParams::zeros(h);
    match *spec {
        InitSpec::Gaussian(g) => {
            let db = normal(g.sigma_b);
            let dw = normal(g.sigma_w);
            let dv = normal(g.sigma_v);
            for i in 0..h {
                net.b[i] = db.sample(&mut rng);
                net.w[i] = dw.sample(&mut rng);
                net.v[i] = dv.sample(&mut rng);
            }
        }
        InitSpec::Uniform(u) => {
            let db = symmetric_uniform(u.a_b);
            let dw = symmetric_uniform(u.a_w);
            let dv = symmetric_uniform(u.a_v);
            for i in 0..h {
                net.b[i] = db.sample(&mut rng);
                net.w[i] = dw.sample(&mut rng);
                net.v[i] = dv.sample(&mut rng);
            }
        }
    }
    Ok(net)
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated positive scale")
}

fn symmetric_uniform(a: f64) -> Uniform<f64> {
    Uniform::new_inclusive(-a, a).expect("validated positive half-width")
}

/// The `h`-point uniform grid on `[lo, hi]`; a single point sits at the midpoint.
pub fn uniform_grid(lo: f64, hi: f64, h: usize) -> Vec<f64> {
    if h == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..h)
        .map(|i| lo + (hi - lo) * i as f64 / (h - 1) as f64)
        .collect()
}

/// Zero function whose breakpoints tile `[lo, hi]` with random orientations.
pub fn flat_init(spec: &FlatInitSpec, seed: u64) -> Result<NetParams> {
    let spec = FlatInitSpec::new(spec.lo, spec.hi, spec.h)?;
    let mut rng = rng_from_seed(seed);
    let mut net = NetParams::zeros(spec.h);
    for (i, beta) in uniform_grid(spec.lo, spec.hi, spec.h).into_iter().enumerate() {
        let w = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        net.w[i] = w;
        net.b[i] = -beta * w;
    }
    Ok(net)
}

/// He-scale delta-slopes (plus `N(0, noise_sd²)` jitter) with breakpoints
/// drawn uniformly over `range`. Orientation and `|w|` come from the He draw.
pub fn uniform_breakpoint_init(
    h: usize,
    range: (f64, f64),
    seed: u64,
    noise_sd: f64,
) -> Result<NetParams> {
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidWindow { lo, hi });
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    let he = InitSpec::Gaussian(GaussianInitSpec::he(h, DEFAULT_SIGMA_B)?);
    let base = sample_net(&he, h, seed)?;
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let place = Uniform::new_inclusive(lo, hi).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let jitter = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut net = NetParams::zeros(h);
    for i in 0..h {
        let mut w = base.w[i];
        if w == 0.0 {
            w = f64::MIN_POSITIVE.sqrt();
        }
        let mu = w * base.v[i] + jitter.sample(&mut rng);
        let beta = place.sample(&mut rng);
        net.w[i] = w;
        net.v[i] = mu / w;
        net.b[i] = -beta * w;
    }
    Ok(net)
}

/// Density of `(β, μ)` induced by the initialization.
pub fn joint_density(spec: &InitSpec, beta: f64, mu: f64) -> f64 {
    match *spec {
        InitSpec::Gaussian(g) => {
            let r = g.sigma_b.hypot(g.sigma_w * beta);
            (-mu.abs() * r / (g.sigma_b * g.sigma_v * g.sigma_w)).exp() / (2.0 * PI * g.sigma_v * r)
        }
        InitSpec::Uniform(u) => {
            let m = uniform_w_cap(&u, beta);
            let slack = m - mu.abs() / u.a_v;
            if slack <= 0.0 {
                0.0
            } else {
                slack / (4.0 * u.a_b * u.a_w * u.a_v)
            }
        }
    }
}

/// Largest `|w|` consistent with breakpoint `β`: `min(a_b/|β|, a_w)`.
fn uniform_w_cap(u: &UniformInitSpec, beta: f64) -> f64 {
    if beta == 0.0 {
        u.a_w
    } else {
        (u.a_b / beta.abs()).min(u.a_w)
    }
}

/// Breakpoint density: Cauchy(0, σ_b/σ_w) for Gaussian init.
pub fn beta_marginal(spec: &InitSpec, beta: f64) -> f64 {
    match *spec {
        InitSpec::Gaussian(g) => cauchy_pdf(beta, g.sigma_b / g.sigma_w),
        InitSpec::Uniform(u) => {
            let m = uniform_w_cap(&u, beta);
            m * m / (4.0 * u.a_b * u.a_w)
        }
    }
}

/// Breakpoint CDF, the integral of [`beta_marginal`].
pub fn beta_cdf(spec: &InitSpec, beta: f64) -> f64 {
    match *spec {
        InitSpec::Gaussian(g) => cauchy_cdf(beta, g.sigma_b / g.sigma_w),
        InitSpec::Uniform(u) => {
            // Flat core on |β| ≤ a_b/a_w holding half the mass, 1/β² tails.
            let c = u.a_b / u.a_w;
            if beta <= -c {
                c / (4.0 * -beta)
            } else if beta < c {
                0.25 + (beta + c) / (4.0 * c)
            } else {
                1.0 - c / (4.0 * beta)
            }
        }
    }
}

/// Delta-slope density. Both families diverge logarithmically at `μ = 0`.
pub fn mu_marginal(spec: &InitSpec, mu: f64) -> Result<f64> {
    if mu == 0.0 {
        return Err(Error::Divergent(0.0));
    }
    match *spec {
        InitSpec::Gaussian(g) => {
            let s = g.sigma_v * g.sigma_w;
            Ok(bessel_k0(mu.abs() / s)? / (PI * s))
        }
        InitSpec::Uniform(u) => {
            let top = u.a_w * u.a_v;
            if mu.abs() >= top {
                Ok(0.0)
            } else {
                Ok((top / mu.abs()).ln() / (2.0 * top))
            }
        }
    }
}

/// Density of `μ` given `β`: Laplace for Gaussian init, symmetric
/// triangular with half-width `a_v·min(a_b/|β|, a_w)` for Uniform init.
pub fn mu_conditional(spec: &InitSpec, mu: f64, beta: f64) -> f64 {
    match *spec {
        InitSpec::Gaussian(g) => {
            let scale = g.sigma_b * g.sigma_v * g.sigma_w / g.sigma_b.hypot(g.sigma_w * beta);
            (-mu.abs() / scale).exp() / (2.0 * scale)
        }
        InitSpec::Uniform(u) => {
            let c = u.a_v * uniform_w_cap(&u, beta);
            let d = c - mu.abs();
            if d <= 0.0 {
                0.0
            } else {
                d / (c * c)
            }
        }
    }
}

pub fn cauchy_pdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    1.0 / (PI * scale * (1.0 + z * z))
}

pub fn cauchy_cdf(x: f64, scale: f64) -> f64 {
    0.5 + (x / scale).atan() / PI
}

/// Modified Bessel function of the second kind, order zero.
pub fn bessel_k0(x: f64) -> Result<f64> {
    Ok((-x).exp() * bessel_k0_scaled(x)?)
}

/// `eˣ·K0(x)`, evaluated by the trapezoid rule on
/// `∫₀^∞ exp(−x(cosh t − 1)) dt`, which converges geometrically in the step.
/// The peak narrows like `1/√x`, so the step shrinks with it.
pub fn bessel_k0_scaled(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::DomainError(x));
    }
    let step = (0.5 / x.sqrt()).min(0.05);
    // exp(−60) is far below the 1e−10 target relative to the t = 0 term.
    const CUTOFF: f64 = 60.0;
    let mut sum = 0.5;
    let mut k = 1usize;
    loop {
        let t = k as f64 * step;
        let sh = (0.5 * t).sinh();
        let arg = 2.0 * x * sh * sh;
        if arg > CUTOFF {
            break;
        }
        sum += (-arg).exp();
        k += 1;
    }
    Ok(sum * step)
}

/// Mean and variance of the initial roughness `Σ μ_i²`.
pub fn roughness_moments(spec: &GaussianInitSpec, h: usize) -> (f64, f64) {
    let s2 = (spec.sigma_v * spec.sigma_w).powi(2);
    let h = h as f64;
    (h * s2, 8.0 * h * s2 * s2)
}

/// One-sided Chebyshev (Cantelli) bound on `P[ρ0 − E ρ0 ≥ λ]`.
/// Negative `λ` gives the trivial bound 1.
pub fn cantelli_bound(preset: Preset, h: usize, lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let hf = h as f64;
    let ratio = match preset {
        Preset::He => lambda * lambda * hf / 128.0,
        Preset::Glorot => lambda * lambda * (hf + 1.0).powi(4) / (128.0 * hf),
    };
    (1.0 / (1.0 + ratio)).clamp(0.0, 1.0)
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Breakpoints and delta-slopes of a sampled net, skipping `w = 0`.
pub fn breakpoint_samples(net: &NetParams) -> (Vec<f64>, Vec<f64>) {
    let mut betas = Vec::with_capacity(net.width());
    let mut mus = Vec::with_capacity(net.width());
    for i in 0..net.width() {
        if net.w[i] != 0.0 {
            betas.push(-net.b[i] / net.w[i]);
            mus.push(net.v[i] * net.w[i]);
        }
    }
    (betas, mus)
}
