//! Training SSE against the number of linear pieces: exact dynamic
//! programming, greedy merging, and gradient descent on a shallow network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::baselines::{dp_segreg, greedy_merge};
use splinelens_core::init::sample_net;
use splinelens_core::net::loss;
use splinelens_core::Dataset;

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::LabResult;
use crate::experiments::StandardInit;
use crate::fit::{fit, FitOptions, Optimizer, StepSize};
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;
use crate::targets::{grid, TargetFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegregConfig {
    pub target: TargetFunction,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: usize,
    /// Piece budgets; the network gets `k − 1` hidden units.
    pub pieces: Vec<usize>,
    pub init: StandardInit,
    pub optimizer: Optimizer,
    pub lr: StepSize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
}

impl Default for SegregConfig {
    fn default() -> Self {
        SegregConfig {
            target: TargetFunction::Quadratic,
            x_lo: -2.0,
            x_hi: 2.0,
            n: 101,
            pieces: vec![2, 4, 8, 16, 32, 64, 101],
            init: StandardInit::HE,
            optimizer: Optimizer::Gd,
            lr: StepSize::GaussNewton { fraction: 0.5 },
            epochs: 50_000,
            seeds: (0..3).collect(),
        }
    }
}

impl ExperimentConfig for SegregConfig {
    fn validate(&self) -> Result<(), String> {
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        check(self.n >= 2, || "n must be at least 2".into())?;
        check(!self.pieces.is_empty(), || "pieces must not be empty".into())?;
        for &k in &self.pieces {
            check(k >= 2 && k <= self.n, || format!("piece budget {k} outside [2, n]"))?;
        }
        if let StandardInit::He { sigma_b } = self.init {
            check_positive("sigma_b", sigma_b)?;
        }
        self.lr.validate()?;
        check_seeds(&self.seeds)
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }

    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegregRow {
    pub k: usize,
    pub dp_sse: f64,
    pub gm_sse: f64,
    /// Final training SSE per seed, in seed order.
    pub gd_sse: Vec<f64>,
}

impl SegregRow {
    pub fn gd_best(&self) -> f64 {
        self.gd_sse.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn gd_mean(&self) -> f64 {
        self.gd_sse.iter().sum::<f64>() / self.gd_sse.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegregResult {
    pub rows: Vec<SegregRow>,
}

impl SegregConfig {
    pub fn dataset(&self) -> Dataset {
        let step = (self.x_hi - self.x_lo) / (self.n - 1) as f64;
        let mut xs = grid(self.x_lo, self.x_hi, step);
        xs.truncate(self.n);
        let ys = xs.iter().map(|&x| self.target.eval(x)).collect();
        Dataset::new(xs, ys).expect("finite grid")
    }
}

pub fn run(cfg: &SegregConfig) -> LabResult<SegregResult> {
    let data = cfg.dataset();
    let rows = cfg
        .pieces
        .par_iter()
        .map(|&k| {
            let dp = dp_segreg(&data, k)?;
            let gm = greedy_merge(&data, k)?;
            let h = k - 1;
            let spec = cfg.init.spec(h)?;
            let gd_sse = cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let net = sample_net(&spec, h, sub_seed(seed, k as u64))?;
                    let opts = FitOptions {
                        optimizer: cfg.optimizer,
                        lr: cfg.lr.resolve(&net, &data),
                        max_epochs: cfg.epochs,
                        stop_grad_norm: 0.0,
                        stop_mse: 0.0,
                    };
                    let out = fit(&net, &data, &opts)?;
                    Ok(2.0 * loss(&out.net, &data))
                })
                .collect::<LabResult<Vec<f64>>>()?;
            Ok(SegregRow { k, dp_sse: dp.sse, gm_sse: gm.sse, gd_sse })
        })
        .collect::<LabResult<Vec<_>>>()?;
    Ok(SegregResult { rows })
}

impl SegregResult {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("segreg_bench", &["k", "dp_sse", "gm_sse", "gd_sse_best", "gd_sse_mean"]);
        let mut per_seed = Table::new("segreg_gd_runs", &["k", "run", "gd_sse"]);
        for r in &self.rows {
            t.push(vec![cell(r.k), cell(r.dp_sse), cell(r.gm_sse), cell(r.gd_best()), cell(r.gd_mean())]);
            for (i, sse) in r.gd_sse.iter().enumerate() {
                per_seed.push(vec![cell(r.k), cell(i), cell(sse)]);
            }
        }
        vec![t, per_seed]
    }

    pub fn plots(&self) -> Vec<Plot> {
        // Zero SSE has no logarithm; it is floored for display.
        let pts = |f: &dyn Fn(&SegregRow) -> f64| -> Vec<(f64, f64)> {
            self.rows.iter().map(|r| ((r.k as f64).log10(), f(r).max(1e-16).log10())).collect()
        };
        vec![Plot::new("segreg_bench", "training SSE vs pieces", "log10(k)", "log10(SSE)")
            .with(Series::line("dp", pts(&|r| r.dp_sse)))
            .with(Series::line("gm", pts(&|r| r.gm_sse)))
            .with(Series::line("gd (best)", pts(&|r| r.gd_best())))]
    }
}
