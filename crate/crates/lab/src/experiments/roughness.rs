//! Roughness left in the data gap after training, across width and initial
//! weight scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::init::{sample_net, GaussianInitSpec, InitSpec, UniformInitSpec, DEFAULT_SIGMA_B};
use splinelens_core::net::forward;
use splinelens_core::spline::{nn_to_bdso, roughness_window};
use splinelens_core::{Dataset, NetParams};

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::LabResult;
use crate::fit::{fit, mean_sd, FitOptions, Optimizer, StepSize};
use crate::output::{cell, Plot, Series, Table};
use crate::stats::spearman;
use crate::sub_seed;
use crate::targets::{grid, TargetFunction, GAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoughnessConfig {
    pub targets: Vec<TargetFunction>,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Spacing of the training inputs outside the gap.
    pub data_step: f64,
    pub widths: Vec<usize>,
    pub family: WeightFamily,
    /// `σ_w` used in the width sweep.
    pub sigma_w: f64,
    pub sigma_ws: Vec<f64>,
    /// Width used in the `σ_w` sweep.
    pub width: usize,
    pub optimizer: Optimizer,
    pub lr: StepSize,
    pub max_epochs: usize,
    pub stop_mse: f64,
    pub seeds: Vec<u64>,
}

impl Default for RoughnessConfig {
    fn default() -> Self {
        RoughnessConfig {
            targets: vec![TargetFunction::SmoothGap, TargetFunction::SharpGap],
            x_lo: -2.0,
            x_hi: 2.0,
            data_step: 0.1,
            widths: vec![10, 20, 40, 80, 160],
            family: WeightFamily::Uniform,
            sigma_w: 1.0 / 3f64.sqrt(),
            sigma_ws: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            width: 40,
            optimizer: Optimizer::Gd,
            lr: StepSize::GaussNewton { fraction: 0.5 },
            max_epochs: 100_000,
            stop_mse: 1e-6,
            seeds: (0..4).collect(),
        }
    }
}

impl ExperimentConfig for RoughnessConfig {
    fn validate(&self) -> Result<(), String> {
        check(!self.targets.is_empty(), || "targets must not be empty".into())?;
        check(self.x_lo < GAP.0 && self.x_hi > GAP.1, || "data interval must contain the gap".into())?;
        check_positive("data_step", self.data_step)?;
        check(self.widths.iter().all(|&h| h >= 1), || "widths must be positive".into())?;
        check(self.width >= 1, || "width must be positive".into())?;
        check_positive("sigma_w", self.sigma_w)?;
        for &s in &self.sigma_ws {
            check_positive("sigma_ws entry", s)?;
        }
        self.lr.validate()?;
        check(self.stop_mse >= 0.0, || "stop_mse must be nonnegative".into())?;
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

/// Initial weight law with input-weight standard deviation `σ_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    /// `b ~ U[−1, 1]`, `w ~ U[−√3 σ_w, √3 σ_w]`, `v ~ U[−1/√H, 1/√H]`; the
    /// common framework default at `σ_w = 1/√3`.
    Uniform,
    /// `b ~ N(0, 1)`, `w ~ N(0, σ_w²)`, `v ~ N(0, 2/H)`.
    Gaussian,
}

impl WeightFamily {
    pub fn spec(self, h: usize, sigma_w: f64) -> splinelens_core::Result<InitSpec> {
        let h = h as f64;
        Ok(match self {
            WeightFamily::Uniform => UniformInitSpec::new(1.0, 3f64.sqrt() * sigma_w, 1.0 / h.sqrt())?.into(),
            WeightFamily::Gaussian => GaussianInitSpec::new(DEFAULT_SIGMA_B, sigma_w, (2.0 / h).sqrt())?.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Width,
    SigmaW,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Width => "width",
            Sweep::SigmaW => "sigma_w",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoughnessRun {
    pub target: TargetFunction,
    pub sweep: Sweep,
    pub h: usize,
    pub sigma_w: f64,
    pub seed: u64,
    pub roughness: f64,
    pub train_mse: f64,
    pub epochs: usize,
    #[serde(skip)]
    pub net: NetParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    pub target: TargetFunction,
    pub sweep: Sweep,
    /// `(swept value, mean gap roughness)` in sweep order.
    pub means: Vec<(f64, f64)>,
    /// Spearman correlation of the swept value with the mean roughness.
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessResult {
    pub runs: Vec<RoughnessRun>,
    pub trends: Vec<TrendSummary>,
}

impl RoughnessConfig {
    pub fn dataset(&self, target: TargetFunction) -> Dataset {
        let xs: Vec<f64> = grid(self.x_lo, self.x_hi, self.data_step)
            .into_iter()
            .filter(|&x| !target.has_gap() || x <= GAP.0 || x >= GAP.1)
            .collect();
        let ys = xs.iter().map(|&x| target.eval(x)).collect();
        Dataset::new(xs, ys).expect("finite grid")
    }
}

pub fn run_one(
    cfg: &RoughnessConfig,
    target: TargetFunction,
    sweep: Sweep,
    h: usize,
    sigma_w: f64,
    seed: u64,
) -> LabResult<RoughnessRun> {
    let data = cfg.dataset(target);
    let spec = cfg.family.spec(h, sigma_w)?;
    let net = sample_net(&spec, h, sub_seed(seed, 1))?;
    let opts = FitOptions {
        optimizer: cfg.optimizer,
        lr: cfg.lr.resolve(&net, &data),
        max_epochs: cfg.max_epochs,
        stop_grad_norm: 0.0,
        stop_mse: cfg.stop_mse,
    };
    let out = fit(&net, &data, &opts)?;
    let roughness = roughness_window(&nn_to_bdso(&out.net).0, GAP.0, GAP.1)?;
    Ok(RoughnessRun {
        target,
        sweep,
        h,
        sigma_w,
        seed,
        roughness,
        train_mse: out.train_mse,
        epochs: out.epochs,
        net: out.net,
    })
}

pub fn run(cfg: &RoughnessConfig) -> LabResult<RoughnessResult> {
    let mut jobs = Vec::new();
    for &t in &cfg.targets {
        for &h in &cfg.widths {
            for &s in &cfg.seeds {
                jobs.push((t, Sweep::Width, h, cfg.sigma_w, s));
            }
        }
        for &sw in &cfg.sigma_ws {
            for &s in &cfg.seeds {
                jobs.push((t, Sweep::SigmaW, cfg.width, sw, s));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(t, sweep, h, sw, s)| run_one(cfg, t, sweep, h, sw, s))
        .collect::<LabResult<Vec<_>>>()?;
    let mut trends = Vec::new();
    for &t in &cfg.targets {
        let widths: Vec<f64> = cfg.widths.iter().map(|&h| h as f64).collect();
        for (sweep, values) in [(Sweep::Width, widths), (Sweep::SigmaW, cfg.sigma_ws.clone())] {
            let means: Vec<(f64, f64)> = values
                .iter()
                .map(|&value| {
                    let group: Vec<f64> = runs
                        .iter()
                        .filter(|r| r.target == t && r.sweep == sweep)
                        .filter(|r| match sweep {
                            Sweep::Width => r.h as f64 == value,
                            Sweep::SigmaW => r.sigma_w == value,
                        })
                        .map(|r| r.roughness)
                        .collect();
                    (value, mean_sd(&group).0)
                })
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = means.iter().copied().unzip();
            trends.push(TrendSummary { target: t, sweep, means, spearman: spearman(&xs, &ys) });
        }
    }
    Ok(RoughnessResult { runs, trends })
}

impl RoughnessResult {
    pub fn trend(&self, target: TargetFunction, sweep: Sweep) -> Option<&TrendSummary> {
        self.trends.iter().find(|t| t.target == target && t.sweep == sweep)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut runs = Table::new(
            "roughness_sweep",
            &["target", "sweep", "H", "sigma_w", "seed", "roughness", "train_mse", "epochs"],
        );
        for r in &self.runs {
            runs.push(vec![
                cell(r.target.name()),
                cell(r.sweep.name()),
                cell(r.h),
                cell(r.sigma_w),
                cell(r.seed),
                cell(r.roughness),
                cell(r.train_mse),
                cell(r.epochs),
            ]);
        }
        let mut trends = Table::new("roughness_trends", &["target", "sweep", "value", "mean_roughness", "spearman"]);
        for t in &self.trends {
            for &(value, mean) in &t.means {
                trends.push(vec![cell(t.target.name()), cell(t.sweep.name()), cell(value), cell(mean), cell(t.spearman)]);
            }
        }
        vec![runs, trends]
    }

    pub fn plots(&self, cfg: &RoughnessConfig) -> Vec<Plot> {
        let mut plots: Vec<Plot> = [Sweep::Width, Sweep::SigmaW]
            .into_iter()
            .map(|sweep| {
                let mut plot = Plot::new(
                    &format!("roughness_vs_{}", sweep.name()),
                    "gap roughness",
                    sweep.name(),
                    "mean roughness",
                );
                for t in self.trends.iter().filter(|t| t.sweep == sweep) {
                    plot = plot.with(Series::line(t.target.name(), t.means.clone()));
                }
                plot
            })
            .collect();
        let xs = grid(cfg.x_lo, cfg.x_hi, 0.01);
        for &t in &cfg.targets {
            let data = cfg.dataset(t);
            let mut plot = Plot::new(&format!("roughness_fits_{}", t.name()), t.name(), "x", "f(x)")
                .with(Series::dots("train", data.xs().iter().copied().zip(data.ys().iter().copied()).collect()));
            for r in self.runs.iter().filter(|r| r.target == t && r.sweep == Sweep::Width && r.seed == cfg.seeds[0]) {
                plot = plot.with(Series::line(&format!("H={}", r.h), xs.iter().map(|&x| (x, forward(&r.net, x))).collect()));
            }
            plots.push(plot);
        }
        plots
    }
}
