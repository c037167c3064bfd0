//! Flat-init networks trained at several init scales α, compared with the
//! linear interpolant and the natural cubic spline of the data.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::baselines::{compare_curves, linear_interpolant, natural_cubic_interpolant, CurveMetrics};
use splinelens_core::init::{flat_init, rng_from_seed, FlatInitSpec};
use splinelens_core::net::{forward, scale_neurons};
use splinelens_core::spline::eval_pwl;
use splinelens_core::{Dataset, NetParams};

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::fit::{fit, mean_sd, variance, FitOptions, Optimizer};
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;
use crate::targets::grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSweepConfig {
    pub h: usize,
    /// Evenly spaced datapoints on `[x_lo, x_hi]`.
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Extra datapoints outside the interval that pin the boundary slopes.
    pub pins: Vec<f64>,
    /// Targets are drawn from `U[−y_half_range, y_half_range]`.
    pub y_half_range: f64,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub grid_step: f64,
    pub optimizer: Optimizer,
    /// Step size for `α ≤ 1`.
    pub lr: f64,
    /// The step size is divided by this for `α > 1`.
    pub large_alpha_lr_divisor: f64,
    pub max_epochs: usize,
    /// Converged when the training MSE is below `mse_factor · var(y)`.
    pub mse_factor: f64,
    /// Treat a non-converged run as a failure (exit code 2).
    pub require_convergence: bool,
}

impl Default for AlphaSweepConfig {
    fn default() -> Self {
        AlphaSweepConfig {
            h: 1000,
            n: 21,
            x_lo: -2.0,
            x_hi: 2.0,
            pins: vec![-3.0, 3.0],
            y_half_range: 2.0,
            alphas: vec![0.1, 1.0, 3.0, 10.0, 100.0],
            seeds: (0..5).collect(),
            grid_step: 0.01,
            optimizer: Optimizer::ADAM,
            lr: 3e-5,
            large_alpha_lr_divisor: 5.0,
            max_epochs: 50_000,
            mse_factor: 1e-4,
            require_convergence: false,
        }
    }
}

impl ExperimentConfig for AlphaSweepConfig {
    fn validate(&self) -> Result<(), String> {
        check(self.h >= 1, || "h must be at least 1".into())?;
        check(self.n >= 2, || "n must be at least 2".into())?;
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        check(!self.alphas.is_empty(), || "alphas must not be empty".into())?;
        for &a in &self.alphas {
            check_positive("alpha", a)?;
        }
        for &p in &self.pins {
            check(p < self.x_lo || p > self.x_hi, || format!("pin {p} lies inside the data interval"))?;
        }
        check_positive("y_half_range", self.y_half_range)?;
        check_positive("grid_step", self.grid_step)?;
        check_positive("lr", self.lr)?;
        check_positive("large_alpha_lr_divisor", self.large_alpha_lr_divisor)?;
        check_positive("mse_factor", self.mse_factor)?;
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

impl AlphaSweepConfig {
    pub fn dataset(&self, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(sub_seed(seed, 0));
        let mut xs = grid(self.x_lo, self.x_hi, (self.x_hi - self.x_lo) / (self.n - 1) as f64);
        xs.truncate(self.n);
        xs.extend(&self.pins);
        let ys = xs
            .iter()
            .map(|_| rng.random_range(-self.y_half_range..=self.y_half_range))
            .collect();
        Dataset::new(xs, ys).expect("validated grid and pins")
    }

    /// Flat initialization tiling the data range, rescaled by `alpha`.
    pub fn initial_net(&self, data: &Dataset, alpha: f64, seed: u64) -> LabResult<NetParams> {
        let (lo, hi) = data.x_range();
        let flat = flat_init(&FlatInitSpec::new(lo, hi, self.h)?, sub_seed(seed, 1))?;
        Ok(scale_neurons(&flat, alpha)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRun {
    pub alpha: f64,
    pub seed: u64,
    pub vs_linear: CurveMetrics,
    pub vs_cubic: CurveMetrics,
    pub train_mse: f64,
    pub lr: f64,
    pub epochs: usize,
    pub converged: bool,
    #[serde(skip)]
    pub net: NetParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub mae_linear: (f64, f64),
    pub rmse_linear: (f64, f64),
    pub mae_cubic: (f64, f64),
    pub rmse_cubic: (f64, f64),
    pub converged: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweepResult {
    pub runs: Vec<AlphaRun>,
    pub summary: Vec<AlphaSummary>,
}

pub fn run_one(cfg: &AlphaSweepConfig, alpha: f64, seed: u64) -> LabResult<AlphaRun> {
    let data = cfg.dataset(seed);
    let net = cfg.initial_net(&data, alpha, seed)?;
    let lr = if alpha > 1.0 { cfg.lr / cfg.large_alpha_lr_divisor } else { cfg.lr };
    let threshold = cfg.mse_factor * variance(data.ys());
    let opts = FitOptions { optimizer: cfg.optimizer, lr, max_epochs: cfg.max_epochs, stop_grad_norm: 0.0, stop_mse: threshold };
    let out = fit(&net, &data, &opts)?;
    let lin = linear_interpolant(&data)?;
    let cubic = natural_cubic_interpolant(&data)?;
    let f = |x: f64| forward(&out.net, x);
    let vs_linear = compare_curves(f, |x| eval_pwl(&lin, x), cfg.x_lo, cfg.x_hi, cfg.grid_step)?;
    let vs_cubic = compare_curves(f, |x| cubic.eval(x), cfg.x_lo, cfg.x_hi, cfg.grid_step)?;
    Ok(AlphaRun {
        alpha,
        seed,
        vs_linear,
        vs_cubic,
        train_mse: out.train_mse,
        lr,
        epochs: out.epochs,
        converged: out.train_mse < threshold,
        net: out.net,
    })
}

pub fn run(cfg: &AlphaSweepConfig) -> LabResult<AlphaSweepResult> {
    let jobs: Vec<(f64, u64)> = cfg
        .alphas
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(a, s)| run_one(cfg, a, s))
        .collect::<LabResult<Vec<_>>>()?;
    let summary = cfg
        .alphas
        .iter()
        .map(|&alpha| {
            let group: Vec<&AlphaRun> = runs.iter().filter(|r| r.alpha == alpha).collect();
            let stat = |f: &dyn Fn(&AlphaRun) -> f64| mean_sd(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            AlphaSummary {
                alpha,
                mae_linear: stat(&|r| r.vs_linear.mae),
                rmse_linear: stat(&|r| r.vs_linear.rmse),
                mae_cubic: stat(&|r| r.vs_cubic.mae),
                rmse_cubic: stat(&|r| r.vs_cubic.rmse),
                converged: group.iter().filter(|r| r.converged).count(),
                runs: group.len(),
            }
        })
        .collect();
    Ok(AlphaSweepResult { runs, summary })
}

impl AlphaSweepResult {
    pub fn nonconverged(&self) -> usize {
        self.runs.iter().filter(|r| !r.converged).count()
    }

    pub fn summary_for(&self, alpha: f64) -> Option<&AlphaSummary> {
        self.summary.iter().find(|s| s.alpha == alpha)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut runs = Table::new(
            "alpha_sweep_runs",
            &[
                "alpha", "seed", "mae_linear", "rmse_linear", "mae_cubic", "rmse_cubic", "train_mse", "lr", "epochs",
                "converged",
            ],
        );
        for r in &self.runs {
            runs.push(vec![
                cell(r.alpha),
                cell(r.seed),
                cell(r.vs_linear.mae),
                cell(r.vs_linear.rmse),
                cell(r.vs_cubic.mae),
                cell(r.vs_cubic.rmse),
                cell(r.train_mse),
                cell(r.lr),
                cell(r.epochs),
                cell(r.converged),
            ]);
        }
        let mut summary = Table::new(
            "alpha_sweep",
            &[
                "alpha", "mae_linear_mean", "mae_linear_sd", "rmse_linear_mean", "rmse_linear_sd", "mae_cubic_mean",
                "mae_cubic_sd", "rmse_cubic_mean", "rmse_cubic_sd", "converged", "runs",
            ],
        );
        for s in &self.summary {
            summary.push(vec![
                cell(s.alpha),
                cell(s.mae_linear.0),
                cell(s.mae_linear.1),
                cell(s.rmse_linear.0),
                cell(s.rmse_linear.1),
                cell(s.mae_cubic.0),
                cell(s.mae_cubic.1),
                cell(s.rmse_cubic.0),
                cell(s.rmse_cubic.1),
                cell(s.converged),
                cell(s.runs),
            ]);
        }
        vec![summary, runs]
    }

    /// One plot per seed: every α's fit against both interpolants.
    pub fn plots(&self, cfg: &AlphaSweepConfig) -> Vec<Plot> {
        let xs = grid(cfg.x_lo, cfg.x_hi, cfg.grid_step);
        let mut plots = Vec::new();
        for &seed in &cfg.seeds {
            let data = cfg.dataset(seed);
            let (Ok(lin), Ok(cubic)) = (linear_interpolant(&data), natural_cubic_interpolant(&data)) else {
                continue;
            };
            let mut plot = Plot::new(&format!("alpha_sweep_seed{seed}"), &format!("seed {seed}"), "x", "f(x)")
                .with(Series::dots("data", data.xs().iter().copied().zip(data.ys().iter().copied()).collect()))
                .with(Series::line("linear", xs.iter().map(|&x| (x, eval_pwl(&lin, x))).collect()))
                .with(Series::line("cubic", xs.iter().map(|&x| (x, cubic.eval(x))).collect()));
            for r in self.runs.iter().filter(|r| r.seed == seed) {
                plot = plot.with(Series::line(
                    &format!("alpha={}", r.alpha),
                    xs.iter().map(|&x| (x, forward(&r.net, x))).collect(),
                ));
            }
            plots.push(plot);
        }
        plots
    }
}

pub fn check_convergence(cfg: &AlphaSweepConfig, res: &AlphaSweepResult) -> LabResult<()> {
    let count = res.nonconverged();
    if cfg.require_convergence && count > 0 {
        return Err(LabError::NonConverged { count });
    }
    Ok(())
}
