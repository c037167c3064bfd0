//! Pooled breakpoint and delta-slope histograms at initialization against
//! the analytic densities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::init::{
    beta_cdf, breakpoint_samples, ks_statistic, mu_marginal, sample_net, GaussianInitSpec, InitSpec, Preset,
    UniformInitSpec,
};

use crate::config::{check, check_seeds, ExperimentConfig};
use crate::error::LabResult;
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityInit {
    He { sigma_b: f64 },
    Glorot { sigma_b: f64 },
    Gaussian { sigma_b: f64, sigma_w: f64, sigma_v: f64 },
    Uniform { a_b: f64, a_w: f64, a_v: f64 },
}

impl DensityInit {
    pub fn spec(self, h: usize) -> splinelens_core::Result<InitSpec> {
        Ok(match self {
            DensityInit::He { sigma_b } => GaussianInitSpec::preset(Preset::He, h, sigma_b)?.into(),
            DensityInit::Glorot { sigma_b } => GaussianInitSpec::preset(Preset::Glorot, h, sigma_b)?.into(),
            DensityInit::Gaussian { sigma_b, sigma_w, sigma_v } => GaussianInitSpec::new(sigma_b, sigma_w, sigma_v)?.into(),
            DensityInit::Uniform { a_b, a_w, a_v } => UniformInitSpec::new(a_b, a_w, a_v)?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitDensityConfig {
    pub init: DensityInit,
    pub h: usize,
    /// Pooled neuron draws per seed, rounded up to whole networks.
    pub draws: usize,
    pub beta_range: (f64, f64),
    pub beta_bins: usize,
    pub mu_range: (f64, f64),
    pub mu_bins: usize,
    pub seeds: Vec<u64>,
}

impl Default for InitDensityConfig {
    fn default() -> Self {
        InitDensityConfig {
            init: DensityInit::He { sigma_b: 1.0 },
            h: 64,
            draws: 100_000,
            beta_range: (-5.0, 5.0),
            beta_bins: 100,
            mu_range: (-1.5, 1.5),
            mu_bins: 60,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig for InitDensityConfig {
    fn validate(&self) -> Result<(), String> {
        check(self.h >= 1, || "h must be at least 1".into())?;
        check(self.draws >= 1, || "draws must be at least 1".into())?;
        self.init.spec(self.h).map_err(|e| format!("init: {e}"))?;
        for (name, (lo, hi), bins) in [("beta", self.beta_range, self.beta_bins), ("mu", self.mu_range, self.mu_bins)] {
            check(lo.is_finite() && hi.is_finite() && lo < hi, || format!("{name}_range must be increasing"))?;
            check(bins >= 1, || format!("{name}_bins must be at least 1"))?;
        }
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Samples outside the binned range.
    pub outside: usize,
    /// Analytic probability of each bin.
    pub mass: Vec<f64>,
}

impl Histogram {
    fn build(samples: &[f64], (lo, hi): (f64, f64), bins: usize, mass: impl Fn(f64, f64) -> f64) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        let mut outside = 0;
        for &s in samples {
            if s < lo || s >= hi {
                outside += 1;
            } else {
                counts[(((s - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let mass = edges.windows(2).map(|e| mass(e[0], e[1])).collect();
        Histogram { edges, counts, outside, mass }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.outside
    }

    /// L1 distance between the empirical and analytic bin probabilities,
    /// with everything outside the range as one more bin.
    pub fn l1(&self) -> f64 {
        let n = self.total() as f64;
        let inside: f64 = self.mass.iter().sum();
        let binned: f64 = self.counts.iter().zip(&self.mass).map(|(&c, &m)| (c as f64 / n - m).abs()).sum();
        binned + (self.outside as f64 / n - (1.0 - inside)).abs()
    }

    pub fn table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &["bin_lo", "bin_hi", "count", "analytic_density"]);
        for (k, e) in self.edges.windows(2).enumerate() {
            t.push(vec![cell(e[0]), cell(e[1]), cell(self.counts[k]), cell(self.mass[k] / (e[1] - e[0]))]);
        }
        t
    }

    fn plot(&self, name: &str, title: &str, x: &str) -> Plot {
        let n = self.total() as f64;
        let mids = self.edges.windows(2).map(|e| (0.5 * (e[0] + e[1]), e[1] - e[0]));
        let emp = mids.clone().zip(&self.counts).map(|((m, w), &c)| (m, c as f64 / (n * w))).collect();
        let ana = mids.zip(&self.mass).map(|((m, w), &p)| (m, p / w)).collect();
        Plot::new(name, title, x, "density")
            .with(Series::dots("sampled", emp))
            .with(Series::line("analytic", ana))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitDensityResult {
    pub spec: InitSpec,
    pub draws: usize,
    /// Neurons with `w = 0`, which have no breakpoint.
    pub skipped: usize,
    pub ks_beta: f64,
    pub beta: Histogram,
    pub mu: Histogram,
}

impl InitDensityResult {
    pub fn l1_mu(&self) -> f64 {
        self.mu.l1()
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut summary = Table::new("init_density_summary", &["draws", "skipped", "ks_beta", "l1_beta", "l1_mu"]);
        summary.push(vec![
            cell(self.draws),
            cell(self.skipped),
            cell(self.ks_beta),
            cell(self.beta.l1()),
            cell(self.l1_mu()),
        ]);
        vec![self.beta.table("init_density_beta"), self.mu.table("init_density_mu"), summary]
    }

    pub fn plots(&self) -> Vec<Plot> {
        vec![
            self.beta.plot("init_density_beta", "breakpoint density", "beta"),
            self.mu.plot("init_density_mu", "delta-slope density", "mu"),
        ]
    }
}

/// Probability of `[a, b]` under the delta-slope density. Integrates in
/// `u = √|μ|`, which removes the logarithmic pole at zero.
pub fn mu_mass(spec: &InitSpec, a: f64, b: f64) -> f64 {
    if a < 0.0 && b > 0.0 {
        return mu_mass(spec, a, 0.0) + mu_mass(spec, 0.0, b);
    }
    let (lo, hi) = if b <= 0.0 { (-b, -a) } else { (a, b) };
    let f = |u: f64| if u == 0.0 { 0.0 } else { 2.0 * u * mu_marginal(spec, u * u).unwrap_or(0.0) };
    simpson(f, lo.sqrt(), hi.sqrt(), 64)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / (2 * panels) as f64;
    let mut sum = f(a) + f(b);
    for k in 1..2 * panels {
        sum += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

pub fn run(cfg: &InitDensityConfig) -> LabResult<InitDensityResult> {
    let spec = cfg.init.spec(cfg.h)?;
    let nets = cfg.draws.div_ceil(cfg.h) as u64;
    let jobs: Vec<(u64, u64)> = cfg.seeds.iter().flat_map(|&s| (0..nets).map(move |k| (s, k))).collect();
    let samples = jobs
        .par_iter()
        .map(|&(s, k)| Ok(breakpoint_samples(&sample_net(&spec, cfg.h, sub_seed(s, k))?)))
        .collect::<LabResult<Vec<_>>>()?;
    let (mut betas, mut mus) = (Vec::new(), Vec::new());
    for (b, m) in samples {
        betas.extend(b);
        mus.extend(m);
    }
    let draws = jobs.len() * cfg.h;
    let ks_beta = ks_statistic(&betas, |b| beta_cdf(&spec, b));
    let beta = Histogram::build(&betas, cfg.beta_range, cfg.beta_bins, |a, b| beta_cdf(&spec, b) - beta_cdf(&spec, a));
    let mu = Histogram::build(&mus, cfg.mu_range, cfg.mu_bins, |a, b| mu_mass(&spec, a, b));
    Ok(InitDensityResult { spec, draws, skipped: draws - betas.len(), ks_beta, beta, mu })
}
