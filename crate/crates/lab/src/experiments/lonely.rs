//! Fraction of datapoints alone in their piece of the breakpoint partition,
//! at initialization, across overparametrization ratios.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::init::{rng_from_seed, sample_net, uniform_breakpoint_init, GaussianInitSpec, InitSpec};
use splinelens_core::spline::{nn_to_bdso, partition_data};
use splinelens_core::Dataset;

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::LabResult;
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LonelyConfig {
    pub n: usize,
    /// Inputs drawn uniformly on `[x_lo, x_hi]`.
    pub x_lo: f64,
    pub x_hi: f64,
    /// Overparametrization ratios `H / N`.
    pub ratios: Vec<usize>,
    pub sigma_b: f64,
    /// Random draws (dataset and network) per ratio and init.
    pub trials: usize,
    pub seeds: Vec<u64>,
}

impl Default for LonelyConfig {
    fn default() -> Self {
        LonelyConfig {
            n: 10,
            x_lo: -2.0,
            x_hi: 2.0,
            ratios: vec![1, 3, 10, 30, 100, 300],
            sigma_b: 1.0,
            trials: 200,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig for LonelyConfig {
    fn validate(&self) -> Result<(), String> {
        check(self.n >= 2, || "n must be at least 2".into())?;
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        check(!self.ratios.is_empty() && self.ratios.iter().all(|&r| r >= 1), || {
            "ratios must be positive integers".into()
        })?;
        check_positive("sigma_b", self.sigma_b)?;
        check(self.trials >= 1, || "trials must be at least 1".into())?;
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LonelyInit {
    He,
    UniformBreakpoints,
}

impl LonelyInit {
    pub fn name(self) -> &'static str {
        match self {
            LonelyInit::He => "he",
            LonelyInit::UniformBreakpoints => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LonelyPoint {
    pub seed: u64,
    pub init: LonelyInit,
    pub ratio: usize,
    pub h: usize,
    /// Mean percentage of lonely datapoints over the trials.
    pub lonely_pct: f64,
    /// Share of trials whose whole partition is lonely, in percent.
    pub all_lonely_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LonelyResult {
    pub points: Vec<LonelyPoint>,
}

fn trial(cfg: &LonelyConfig, init: LonelyInit, h: usize, seed: u64, k: u64) -> LabResult<(f64, bool)> {
    let base = sub_seed(sub_seed(seed, h as u64), k);
    let mut rng = rng_from_seed(sub_seed(base, 0));
    let xs: Vec<f64> = (0..cfg.n).map(|_| rng.random_range(cfg.x_lo..=cfg.x_hi)).collect();
    let data = Dataset::new(xs, vec![0.0; cfg.n]).expect("finite samples");
    let net = match init {
        LonelyInit::He => {
            let spec: InitSpec = GaussianInitSpec::he(h, cfg.sigma_b)?.into();
            sample_net(&spec, h, sub_seed(base, 1))?
        }
        LonelyInit::UniformBreakpoints => uniform_breakpoint_init(h, data.x_range(), sub_seed(base, 1), 0.0)?,
    };
    let report = partition_data(&nn_to_bdso(&net).0, &data);
    Ok((report.lonely_fraction(), report.all_lonely))
}

pub fn run(cfg: &LonelyConfig) -> LabResult<LonelyResult> {
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for init in [LonelyInit::He, LonelyInit::UniformBreakpoints] {
            for &ratio in &cfg.ratios {
                jobs.push((seed, init, ratio));
            }
        }
    }
    let points = jobs
        .par_iter()
        .map(|&(seed, init, ratio)| {
            let h = ratio * cfg.n;
            let (mut lonely, mut all) = (0.0, 0usize);
            for k in 0..cfg.trials as u64 {
                let (frac, whole) = trial(cfg, init, h, seed, k)?;
                lonely += frac;
                all += whole as usize;
            }
            let t = cfg.trials as f64;
            Ok(LonelyPoint {
                seed,
                init,
                ratio,
                h,
                lonely_pct: 100.0 * lonely / t,
                all_lonely_pct: 100.0 * all as f64 / t,
            })
        })
        .collect::<LabResult<Vec<_>>>()?;
    Ok(LonelyResult { points })
}

impl LonelyResult {
    /// `(ratio, lonely %)` for one init, averaged over seeds, in ratio order.
    pub fn curve(&self, init: LonelyInit) -> Vec<(f64, f64)> {
        let mut ratios: Vec<usize> = self.points.iter().filter(|p| p.init == init).map(|p| p.ratio).collect();
        ratios.sort_unstable();
        ratios.dedup();
        ratios
            .into_iter()
            .map(|r| {
                let vals: Vec<f64> = self
                    .points
                    .iter()
                    .filter(|p| p.init == init && p.ratio == r)
                    .map(|p| p.lonely_pct)
                    .collect();
                (r as f64, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("lonely_sweep", &["seed", "init", "ratio", "H", "lonely_pct", "all_lonely_pct"]);
        for p in &self.points {
            t.push(vec![
                cell(p.seed),
                cell(p.init.name()),
                cell(p.ratio),
                cell(p.h),
                cell(p.lonely_pct),
                cell(p.all_lonely_pct),
            ]);
        }
        vec![t]
    }

    pub fn plots(&self) -> Vec<Plot> {
        let log = |c: Vec<(f64, f64)>| c.into_iter().map(|(r, p)| (r.log10(), p)).collect();
        vec![Plot::new("lonely_sweep", "lonely datapoints at init", "log10(H/N)", "lonely %")
            .with(Series::line("he", log(self.curve(LonelyInit::He))))
            .with(Series::line("uniform", log(self.curve(LonelyInit::UniformBreakpoints))))]
    }
}
