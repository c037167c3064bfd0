//! Standard versus "spiky" initialization: a random many-knot CPWL function
//! written exactly into the network before training.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::init::{rng_from_seed, sample_net};
use splinelens_core::net::{forward, loss, unit_input_weights};
use splinelens_core::spline::{cpwl_to_nn_exact, nn_to_bdso, roughness, PwlParams};
use splinelens_core::{Dataset, NetParams};

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::LabResult;
use crate::fit::{fit, mean_sd, FitOptions, Optimizer};
use crate::output::{cell, Plot, Series, Table};
use crate::experiments::StandardInit;
use crate::sub_seed;
use crate::targets::{grid, TargetFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikyConfig {
    pub targets: Vec<TargetFunction>,
    pub h: usize,
    /// Training points drawn uniformly on `[x_lo, x_hi]`.
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Interior knots of the random CPWL function.
    pub knots: usize,
    pub y_half_range: f64,
    pub standard_init: StandardInit,
    /// Step size on the loss `½ Σ (f(x) − y)²`.
    pub lr: f64,
    /// The spiky network trains with `lr / spiky_lr_divisor`.
    pub spiky_lr_divisor: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub grid_step: f64,
}

impl Default for SpikyConfig {
    fn default() -> Self {
        SpikyConfig {
            targets: vec![
                TargetFunction::Sine,
                TargetFunction::Arctan,
                TargetFunction::Sawtooth,
                TargetFunction::Cubic,
                TargetFunction::Quadratic,
                TargetFunction::Exp,
            ],
            h: 21,
            n: 20,
            x_lo: -2.0,
            x_hi: 2.0,
            knots: 20,
            y_half_range: 2.0,
            standard_init: StandardInit::Default,
            lr: 1e-5,
            spiky_lr_divisor: 5.0,
            epochs: 20_000,
            seeds: (0..5).collect(),
            grid_step: 0.01,
        }
    }
}

impl ExperimentConfig for SpikyConfig {
    fn validate(&self) -> Result<(), String> {
        check(!self.targets.is_empty(), || "targets must not be empty".into())?;
        check(self.h >= 1, || "h must be at least 1".into())?;
        check(self.n >= 1, || "n must be at least 1".into())?;
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        check(self.knots >= 1, || "knots must be at least 1".into())?;
        check_positive("y_half_range", self.y_half_range)?;
        check_positive("lr", self.lr)?;
        check_positive("spiky_lr_divisor", self.spiky_lr_divisor)?;
        check_positive("grid_step", self.grid_step)?;
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
pub enum InitKind {
    Standard,
    Spiky,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Standard => "standard",
            InitKind::Spiky => "spiky",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikyRun {
    pub target: TargetFunction,
    pub init: InitKind,
    pub seed: u64,
    pub width: usize,
    pub train_sse: f64,
    pub train_mse: f64,
    pub test_sse: f64,
    pub test_mse: f64,
    /// Test error of the untrained network.
    pub init_test_sse: f64,
    pub init_test_mse: f64,
    pub init_roughness: f64,
    pub final_roughness: f64,
    #[serde(skip)]
    pub net: NetParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikyResult {
    pub runs: Vec<SpikyRun>,
}

impl SpikyConfig {
    pub fn dataset(&self, target: TargetFunction, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(sub_seed(seed, 0));
        let xs: Vec<f64> = (0..self.n).map(|_| rng.random_range(self.x_lo..=self.x_hi)).collect();
        let ys = xs.iter().map(|&x| target.eval(x)).collect();
        Dataset::new(xs, ys).expect("finite samples")
    }

    /// Random CPWL function with `knots` evenly spaced interior breakpoints and
    /// uniform random values at the knots and both interval ends.
    pub fn random_cpwl(&self, seed: u64) -> PwlParams {
        let mut rng = rng_from_seed(sub_seed(seed, 2));
        let step = (self.x_hi - self.x_lo) / (self.knots + 1) as f64;
        let xs: Vec<f64> = (0..self.knots + 2).map(|j| self.x_lo + j as f64 * step).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|_| rng.random_range(-self.y_half_range..=self.y_half_range))
            .collect();
        let slopes: Vec<f64> = (0..xs.len() - 1).map(|j| (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])).collect();
        let intercepts = slopes.iter().enumerate().map(|(j, m)| ys[j] - m * xs[j]).collect();
        PwlParams::new(xs[1..xs.len() - 1].to_vec(), slopes, intercepts).expect("interpolant is continuous")
    }

    pub fn initial_net(&self, init: InitKind, seed: u64) -> LabResult<NetParams> {
        match init {
            InitKind::Standard => {
                Ok(sample_net(&self.standard_init.spec(self.h)?, self.h, sub_seed(seed, 1))?)
            }
            InitKind::Spiky => {
                let anchor = self.x_lo - 0.5 * (self.x_hi - self.x_lo) / (self.knots + 1) as f64;
                Ok(unit_input_weights(&cpwl_to_nn_exact(&self.random_cpwl(seed), anchor)?))
            }
        }
    }
}

fn grid_errors(net: &NetParams, target: TargetFunction, xs: &[f64]) -> (f64, f64) {
    let sse: f64 = xs.iter().map(|&x| (forward(net, x) - target.eval(x)).powi(2)).sum();
    (sse, sse / xs.len() as f64)
}

pub fn run_one(cfg: &SpikyConfig, target: TargetFunction, init: InitKind, seed: u64) -> LabResult<SpikyRun> {
    let data = cfg.dataset(target, seed);
    let net = cfg.initial_net(init, seed)?;
    let lr = match init {
        InitKind::Standard => cfg.lr,
        InitKind::Spiky => cfg.lr / cfg.spiky_lr_divisor,
    };
    let opts = FitOptions { optimizer: Optimizer::Gd, lr, max_epochs: cfg.epochs, stop_grad_norm: 0.0, stop_mse: 0.0 };
    let out = fit(&net, &data, &opts)?;
    let test = grid(cfg.x_lo, cfg.x_hi, cfg.grid_step);
    let (init_test_sse, init_test_mse) = grid_errors(&net, target, &test);
    let (test_sse, test_mse) = grid_errors(&out.net, target, &test);
    let train_sse = 2.0 * loss(&out.net, &data);
    Ok(SpikyRun {
        target,
        init,
        seed,
        width: net.width(),
        train_sse,
        train_mse: train_sse / data.len() as f64,
        test_sse,
        test_mse,
        init_test_sse,
        init_test_mse,
        init_roughness: roughness(&nn_to_bdso(&net).0),
        final_roughness: roughness(&nn_to_bdso(&out.net).0),
        net: out.net,
    })
}

pub fn run(cfg: &SpikyConfig) -> LabResult<SpikyResult> {
    let mut jobs = Vec::new();
    for &t in &cfg.targets {
        for init in [InitKind::Standard, InitKind::Spiky] {
            for &s in &cfg.seeds {
                jobs.push((t, init, s));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(t, i, s)| run_one(cfg, t, i, s))
        .collect::<LabResult<Vec<_>>>()?;
    Ok(SpikyResult { runs })
}

impl SpikyResult {
    pub fn group(&self, target: TargetFunction, init: InitKind) -> Vec<&SpikyRun> {
        self.runs.iter().filter(|r| r.target == target && r.init == init).collect()
    }

    pub fn mean(&self, target: TargetFunction, init: InitKind, f: impl Fn(&SpikyRun) -> f64) -> (f64, f64) {
        mean_sd(&self.group(target, init).into_iter().map(f).collect::<Vec<_>>())
    }

    pub fn tables(&self, cfg: &SpikyConfig) -> Vec<Table> {
        let mut runs = Table::new(
            "spiky_runs",
            &[
                "target", "init", "seed", "width", "train_sse", "train_mse", "test_sse", "test_mse", "init_test_sse",
                "init_test_mse", "init_roughness", "final_roughness",
            ],
        );
        for r in &self.runs {
            runs.push(vec![
                cell(r.target.name()),
                cell(r.init.name()),
                cell(r.seed),
                cell(r.width),
                cell(r.train_sse),
                cell(r.train_mse),
                cell(r.test_sse),
                cell(r.test_mse),
                cell(r.init_test_sse),
                cell(r.init_test_mse),
                cell(r.init_roughness),
                cell(r.final_roughness),
            ]);
        }
        let mut summary = Table::new(
            "spiky",
            &[
                "target", "init", "train_sse_mean", "train_sse_sd", "test_sse_mean", "test_sse_sd", "test_mse_mean",
                "test_mse_sd", "init_test_sse_mean", "runs",
            ],
        );
        for &t in &cfg.targets {
            for init in [InitKind::Standard, InitKind::Spiky] {
                let train = self.mean(t, init, |r| r.train_sse);
                let test = self.mean(t, init, |r| r.test_sse);
                let test_mse = self.mean(t, init, |r| r.test_mse);
                let init_test = self.mean(t, init, |r| r.init_test_sse);
                summary.push(vec![
                    cell(t.name()),
                    cell(init.name()),
                    cell(train.0),
                    cell(train.1),
                    cell(test.0),
                    cell(test.1),
                    cell(test_mse.0),
                    cell(test_mse.1),
                    cell(init_test.0),
                    cell(self.group(t, init).len()),
                ]);
            }
        }
        vec![summary, runs]
    }

    /// Trained fits of both inits for the first seed of every target.
    pub fn plots(&self, cfg: &SpikyConfig) -> Vec<Plot> {
        let xs = grid(cfg.x_lo, cfg.x_hi, cfg.grid_step);
        let seed = cfg.seeds[0];
        cfg.targets
            .iter()
            .map(|&t| {
                let data = cfg.dataset(t, seed);
                let mut plot = Plot::new(&format!("spiky_{}", t.name()), t.name(), "x", "f(x)")
                    .with(Series::line("target", xs.iter().map(|&x| (x, t.eval(x))).collect()))
                    .with(Series::dots("train", data.xs().iter().copied().zip(data.ys().iter().copied()).collect()));
                for r in self.runs.iter().filter(|r| r.target == t && r.seed == seed) {
                    plot = plot.with(Series::line(r.init.name(), xs.iter().map(|&x| (x, forward(&r.net, x))).collect()));
                }
                plot
            })
            .collect()
    }
}
