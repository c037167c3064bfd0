//! Hessian spectrum, zero-eigenvalue fraction and degeneracy census at
//! trained minima.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splinelens_core::geometry::{degeneracy_report, hessian_report, DegeneracyReport, HessianReport, ZERO_EIG_TOL};
use splinelens_core::baselines::{build_features, min_norm_interpolant};
use splinelens_core::init::{rng_from_seed, uniform_breakpoint_init};
use splinelens_core::spline::{nn_to_bdso, partition_data};
use splinelens_core::{Dataset, Error, NetParams};

use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::fit::{fit, FitOptions, Optimizer, StepSize};
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianConfig {
    pub h: usize,
    /// Evenly spaced inputs on `[x_lo, x_hi]`, targets `U[−1, 1]`.
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub lr: StepSize,
    pub max_epochs: usize,
    /// Converged once the gradient norm is below this.
    pub grad_tol: f64,
    /// Eigenvalues below `rel_tol · max|λ|` count as zero.
    pub rel_tol: f64,
    pub seeds: Vec<u64>,
    /// Solve for the least-norm delta-slopes at the initial breakpoints
    /// before descending. Without it, descent pulls breakpoints onto
    /// datapoints where the Hessian is undefined.
    pub outer_solve: bool,
}

impl Default for HessianConfig {
    fn default() -> Self {
        HessianConfig {
            h: 64,
            n: 8,
            x_lo: -2.0,
            x_hi: 2.0,
            lr: StepSize::GaussNewton { fraction: 0.5 },
            max_epochs: 1_000_000,
            grad_tol: 1e-9,
            rel_tol: ZERO_EIG_TOL,
            seeds: (0..5).collect(),
            outer_solve: true,
        }
    }
}

impl ExperimentConfig for HessianConfig {
    fn validate(&self) -> Result<(), String> {
        check(self.h >= 1, || "h must be at least 1".into())?;
        check(self.n >= 2, || "n must be at least 2".into())?;
        check(self.x_lo < self.x_hi, || "x_lo must be below x_hi".into())?;
        self.lr.validate()?;
        check_positive("grad_tol", self.grad_tol)?;
        check_positive("rel_tol", self.rel_tol)?;
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
pub enum HessianOutcome {
    Ok { report: HessianReport, census: DegeneracyReport },
    /// A breakpoint sits on a datapoint, where the loss is not twice
    /// differentiable.
    BoundaryBreakpoint { neuron: usize, point: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianRun {
    pub seed: u64,
    pub epochs: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub lonely: bool,
    pub outcome: HessianOutcome,
    #[serde(skip)]
    pub net: NetParams,
}

impl HessianRun {
    pub fn report(&self) -> Option<&HessianReport> {
        match &self.outcome {
            HessianOutcome::Ok { report, .. } => Some(report),
            HessianOutcome::BoundaryBreakpoint { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianResult {
    pub runs: Vec<HessianRun>,
}

impl HessianConfig {
    pub fn dataset(&self, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(sub_seed(seed, 0));
        let step = (self.x_hi - self.x_lo) / (self.n - 1) as f64;
        let xs: Vec<f64> = (0..self.n).map(|i| self.x_lo + i as f64 * step).collect();
        let ys = xs.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
        Dataset::new(xs, ys).expect("finite grid")
    }
}

pub fn run_one(cfg: &HessianConfig, seed: u64) -> LabResult<HessianRun> {
    let data = cfg.dataset(seed);
    let mut net = uniform_breakpoint_init(cfg.h, data.x_range(), sub_seed(seed, 1), 0.0)?;
    if cfg.outer_solve {
        net = solve_outer(&net, &data)?;
    }
    let opts = FitOptions {
        optimizer: Optimizer::Gd,
        lr: cfg.lr.resolve(&net, &data),
        max_epochs: cfg.max_epochs,
        stop_grad_norm: cfg.grad_tol,
        stop_mse: 0.0,
    };
    let out = fit(&net, &data, &opts)?;
    let lonely = partition_data(&nn_to_bdso(&out.net).0, &data).all_lonely;
    let outcome = match hessian_report(&out.net, &data, cfg.rel_tol) {
        Ok(report) => HessianOutcome::Ok { report, census: degeneracy_report(&out.net, &data) },
        Err(Error::BoundaryBreakpoint { neuron, point }) => HessianOutcome::BoundaryBreakpoint { neuron, point },
        Err(e) => return Err(LabError::from(e)),
    };
    Ok(HessianRun {
        seed,
        epochs: out.epochs,
        grad_norm: out.grad_norm,
        converged: out.grad_norm < cfg.grad_tol,
        lonely,
        outcome,
        net: out.net,
    })
}

/// Keeps breakpoints and orientations, sets `b0 = 0` and the least-norm
/// delta-slopes interpolating the data.
pub fn solve_outer(net: &NetParams, data: &Dataset) -> LabResult<NetParams> {
    let (bdso, fold) = nn_to_bdso(net);
    if fold.folded > 0 {
        return Err(LabError::Runtime("outer solve needs nonzero input weights".into()));
    }
    let mu = min_norm_interpolant(&build_features(data, &bdso), data.ys())?;
    let mut out = net.clone();
    out.b0 = 0.0;
    for (i, m) in mu.into_iter().enumerate() {
        out.v[i] = if out.w[i] != 0.0 { m / out.w[i] } else { 0.0 };
    }
    Ok(out)
}

pub fn run(cfg: &HessianConfig) -> LabResult<HessianResult> {
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| run_one(cfg, s))
        .collect::<LabResult<Vec<_>>>()?;
    Ok(HessianResult { runs })
}

impl HessianResult {
    pub fn nonconverged(&self) -> usize {
        self.runs.iter().filter(|r| !r.converged).count()
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut summary = Table::new(
            "hessian_report",
            &[
                "seed", "epochs", "grad_norm", "converged", "lonely", "status", "params", "zero_count", "zero_fraction",
                "bound", "bound_tight", "min_eig", "max_eig", "census_cases",
            ],
        );
        let mut spectrum = Table::new("hessian_spectrum", &["seed", "index", "eigenvalue"]);
        let mut census_t = Table::new("hessian_census", &["seed", "case", "neurons"]);
        for r in &self.runs {
            let base = vec![cell(r.seed), cell(r.epochs), cell(r.grad_norm), cell(r.converged), cell(r.lonely)];
            match &r.outcome {
                HessianOutcome::Ok { report, census } => {
                    let ev = &report.eigenvalues;
                    let mut cases: Vec<u8> = census.conditions.iter().map(|d| d.case).collect();
                    cases.dedup();
                    let mut row = base;
                    row.extend([
                        cell("ok"),
                        cell(ev.len()),
                        cell(report.zero_count),
                        cell(report.zero_fraction),
                        cell(report.theoretical_bound),
                        cell(report.tight_bound),
                        cell(ev.first().copied().unwrap_or(f64::NAN)),
                        cell(ev.last().copied().unwrap_or(f64::NAN)),
                        cell(cases.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")),
                    ]);
                    summary.push(row);
                    for (i, e) in ev.iter().enumerate() {
                        spectrum.push(vec![cell(r.seed), cell(i), cell(e)]);
                    }
                    for d in &census.conditions {
                        let ids: Vec<String> = d.neurons.iter().map(|n| n.to_string()).collect();
                        census_t.push(vec![cell(r.seed), cell(d.case), cell(ids.join(" "))]);
                    }
                }
                HessianOutcome::BoundaryBreakpoint { neuron, point } => {
                    let mut row = base;
                    row.push(cell(format!("boundary breakpoint: neuron {neuron} at point {point}")));
                    row.extend(std::iter::repeat_n(String::new(), 8));
                    summary.push(row);
                }
            }
        }
        vec![summary, spectrum, census_t]
    }

    pub fn plots(&self) -> Vec<Plot> {
        let mut plot = Plot::new("hessian_spectrum", "Hessian spectrum", "index", "log10(|eigenvalue| + 1e-16)");
        for r in &self.runs {
            if let Some(rep) = r.report() {
                let pts = rep
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (i as f64, (e.abs() + 1e-16).log10()))
                    .collect();
                plot = plot.with(Series::dots(&format!("seed {}", r.seed), pts));
            }
        }
        vec![plot]
    }
}
