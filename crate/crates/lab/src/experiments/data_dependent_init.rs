//! Standard initialization against breakpoints spread uniformly over the
//! data range, on dense data from smooth targets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use rand_distr::{Distribution, Normal};
use splinelens_core::init::{rng_from_seed, sample_net, uniform_breakpoint_init};
use splinelens_core::net::{forward, loss};
use splinelens_core::spline::cpwl_to_nn_exact;
use splinelens_core::{Dataset, NetParams, PwlParams};

use super::StandardInit;
use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::fit::{fit, mean_sd, FitOptions, Optimizer};
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;
use crate::targets::{grid, TargetFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataDependentConfig {
    pub targets: Vec<TargetFunction>,
    pub h: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Training inputs every `data_step`; test inputs at the midpoints.
    pub data_step: f64,
    pub standard_init: StandardInit,
    pub uniform_mode: UniformMode,
    /// Jitter sd on the uniform-breakpoint init: on knot values when
    /// re-knotting, on delta-slopes when resampling.
    pub noise_sd: f64,
    pub optimizer: Optimizer,
    /// Step size on the loss `½ Σ (f(x) − y)²`; Adam ignores the scale.
    pub lr: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
}

impl Default for DataDependentConfig {
    fn default() -> Self {
        DataDependentConfig {
            targets: vec![TargetFunction::Sine, TargetFunction::Quadratic],
            h: 21,
            x_lo: -2.0,
            x_hi: 2.0,
            data_step: 0.01,
            standard_init: StandardInit::Default,
            uniform_mode: UniformMode::Reknot,
            noise_sd: 0.01,
            optimizer: Optimizer::ADAM,
            lr: 5e-5,
            epochs: 10_000,
            seeds: (0..5).collect(),
        }
    }
}

impl ExperimentConfig for DataDependentConfig {
    fn validate(&self) -> Result<(), String> {
        check(!self.targets.is_empty(), || "targets must not be empty".into())?;
        check(self.h >= 1, || "h must be at least 1".into())?;
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        check_positive("data_step", self.data_step)?;
        check(self.data_step < self.x_hi - self.x_lo, || "data_step must be below the range".into())?;
        check(self.noise_sd >= 0.0 && self.noise_sd.is_finite(), || "noise_sd must be nonnegative".into())?;
        check_positive("lr", self.lr)?;
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformMode {
    /// Interpolate the standard net at `H − 1` uniform knots, so the
    /// starting function on the data range barely changes.
    Reknot,
    /// Keep a He draw's delta-slopes and move its breakpoints.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakpointInit {
    Standard,
    Uniform,
}

impl BreakpointInit {
    pub fn name(self) -> &'static str {
        match self {
            BreakpointInit::Standard => "standard",
            BreakpointInit::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataDependentRun {
    pub target: TargetFunction,
    pub init: BreakpointInit,
    pub seed: u64,
    pub train_mse: f64,
    pub test_sse: f64,
    pub test_mse: f64,
    #[serde(skip)]
    pub net: NetParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataDependentResult {
    pub runs: Vec<DataDependentRun>,
}

impl DataDependentConfig {
    pub fn train_data(&self, target: TargetFunction) -> Dataset {
        let xs = grid(self.x_lo, self.x_hi, self.data_step);
        let ys = xs.iter().map(|&x| target.eval(x)).collect();
        Dataset::new(xs, ys).expect("finite grid")
    }

    pub fn test_xs(&self) -> Vec<f64> {
        let half = 0.5 * self.data_step;
        grid(self.x_lo + half, self.x_hi - half, self.data_step)
    }

    pub fn initial_net(&self, init: BreakpointInit, range: (f64, f64), seed: u64) -> LabResult<NetParams> {
        let s = sub_seed(seed, 1);
        let standard = sample_net(&self.standard_init.spec(self.h)?, self.h, s)?;
        Ok(match (init, self.uniform_mode) {
            (BreakpointInit::Standard, _) => standard,
            (BreakpointInit::Uniform, UniformMode::Resample) => uniform_breakpoint_init(self.h, range, s, self.noise_sd)?,
            (BreakpointInit::Uniform, UniformMode::Reknot) => reknot(&standard, range, sub_seed(seed, 2), self.noise_sd)?,
        })
    }
}

/// Net whose breakpoints are an anchor just left of `range` plus `H − 1`
/// uniform draws inside it, interpolating `net` (plus `N(0, noise_sd²)`)
/// at those knots and at both ends of the range.
pub fn reknot(net: &NetParams, (lo, hi): (f64, f64), seed: u64, noise_sd: f64) -> LabResult<NetParams> {
    let h = net.width();
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| LabError::Config(e.to_string()))?;
    let mut xs: Vec<f64> = (1..h).map(|_| rng.random_range(lo..=hi)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.insert(0, lo);
    xs.push(hi);
    xs.dedup();
    let ys: Vec<f64> = xs.iter().map(|&x| forward(net, x) + noise.sample(&mut rng)).collect();
    let slopes: Vec<f64> = (0..xs.len() - 1).map(|j| (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])).collect();
    let intercepts = slopes.iter().enumerate().map(|(j, m)| ys[j] - m * xs[j]).collect();
    let pwl = PwlParams::new(xs[1..xs.len() - 1].to_vec(), slopes, intercepts)?;
    let anchor = lo - 0.5 * (hi - lo) / h as f64;
    Ok(cpwl_to_nn_exact(&pwl, anchor)?)
}

pub fn run_one(cfg: &DataDependentConfig, target: TargetFunction, init: BreakpointInit, seed: u64) -> LabResult<DataDependentRun> {
    let data = cfg.train_data(target);
    let net = cfg.initial_net(init, data.x_range(), seed)?;
    let opts = FitOptions { optimizer: cfg.optimizer, lr: cfg.lr, max_epochs: cfg.epochs, stop_grad_norm: 0.0, stop_mse: 0.0 };
    let out = fit(&net, &data, &opts)?;
    let test = cfg.test_xs();
    let test_sse: f64 = test.iter().map(|&x| (forward(&out.net, x) - target.eval(x)).powi(2)).sum();
    Ok(DataDependentRun {
        target,
        init,
        seed,
        train_mse: 2.0 * loss(&out.net, &data) / data.len() as f64,
        test_sse,
        test_mse: test_sse / test.len() as f64,
        net: out.net,
    })
}

pub fn run(cfg: &DataDependentConfig) -> LabResult<DataDependentResult> {
    let mut jobs = Vec::new();
    for &t in &cfg.targets {
        for init in [BreakpointInit::Standard, BreakpointInit::Uniform] {
            for &s in &cfg.seeds {
                jobs.push((t, init, s));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(t, i, s)| run_one(cfg, t, i, s))
        .collect::<LabResult<Vec<_>>>()?;
    Ok(DataDependentResult { runs })
}

impl DataDependentResult {
    pub fn mean(&self, target: TargetFunction, init: BreakpointInit, f: impl Fn(&DataDependentRun) -> f64) -> (f64, f64) {
        let vals: Vec<f64> = self.runs.iter().filter(|r| r.target == target && r.init == init).map(f).collect();
        mean_sd(&vals)
    }

    pub fn tables(&self, cfg: &DataDependentConfig) -> Vec<Table> {
        let mut runs = Table::new("data_dependent_runs", &["target", "init", "seed", "train_mse", "test_sse", "test_mse"]);
        for r in &self.runs {
            runs.push(vec![
                cell(r.target.name()),
                cell(r.init.name()),
                cell(r.seed),
                cell(r.train_mse),
                cell(r.test_sse),
                cell(r.test_mse),
            ]);
        }
        let mut summary = Table::new(
            "data_dependent_init",
            &["target", "init", "test_sse_mean", "test_sse_sd", "test_mse_mean", "test_mse_sd", "runs"],
        );
        for &t in &cfg.targets {
            for init in [BreakpointInit::Standard, BreakpointInit::Uniform] {
                let sse = self.mean(t, init, |r| r.test_sse);
                let mse = self.mean(t, init, |r| r.test_mse);
                let n = self.runs.iter().filter(|r| r.target == t && r.init == init).count();
                summary.push(vec![cell(t.name()), cell(init.name()), cell(sse.0), cell(sse.1), cell(mse.0), cell(mse.1), cell(n)]);
            }
        }
        vec![summary, runs]
    }

    /// Fits of both inits for the first seed of every target.
    pub fn plots(&self, cfg: &DataDependentConfig) -> Vec<Plot> {
        let xs = cfg.test_xs();
        let seed = cfg.seeds[0];
        cfg.targets
            .iter()
            .map(|&t| {
                let mut plot = Plot::new(&format!("data_dependent_{}", t.name()), t.name(), "x", "f(x)")
                    .with(Series::line("target", xs.iter().map(|&x| (x, t.eval(x))).collect()));
                for r in self.runs.iter().filter(|r| r.target == t && r.seed == seed) {
                    plot = plot.with(Series::line(r.init.name(), xs.iter().map(|&x| (x, forward(&r.net, x))).collect()));
                }
                plot
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reknot_keeps_the_function_on_the_range() {
        let cfg = DataDependentConfig { noise_sd: 0.0, ..Default::default() };
        let std = cfg.initial_net(BreakpointInit::Standard, (-2.0, 2.0), 3).unwrap();
        let uni = cfg.initial_net(BreakpointInit::Uniform, (-2.0, 2.0), 3).unwrap();
        assert_eq!(uni.width(), std.width());
        let (bdso, _) = splinelens_core::spline::nn_to_bdso(&uni);
        assert!(bdso.breakpoints().iter().skip(1).all(|b| (-2.0..=2.0).contains(b)));
        for x in [-2.0, 2.0] {
            assert!((forward(&uni, x) - forward(&std, x)).abs() < 1e-12);
        }
    }
}
