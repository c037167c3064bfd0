//! Gradient-flow snapshots in spline coordinates, with breakpoint cluster
//! events and the knot classification log.

use rand::Rng;
use serde::{Deserialize, Serialize};
use splinelens_core::dynamics::{detect_clusters, integrate_flow, knot_event_log, ClusterEvent, KnotLog, Scheme, Trajectory};
use splinelens_core::init::{rng_from_seed, sample_net};
use splinelens_core::net::predict;
use splinelens_core::{Dataset, NetParams};

use super::StandardInit;
use crate::config::{check, check_positive, check_seeds, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::output::{cell, Plot, Series, Table};
use crate::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowProblem {
    /// One breakpoint at 0.3 pulled onto the datapoint at 0.
    Attractor,
    /// One breakpoint at 0.3 pushed away from the datapoint at 0.
    Repulsor,
    /// Random inputs on `[−2, 2]`, targets `U[−1, 1]`, random init.
    Random { h: usize, n: usize, init: StandardInit },
}

impl FlowProblem {
    pub fn build(self, seed: u64) -> LabResult<(NetParams, Dataset)> {
        let hinge = || NetParams::new(0.0, vec![1.0], vec![-0.3], vec![1.0]);
        let xs = vec![-1.0, 0.0, 1.0];
        Ok(match self {
            FlowProblem::Attractor => (hinge()?, Dataset::new(xs, vec![0.0, -2.0, 2.0])?),
            FlowProblem::Repulsor => (hinge()?, Dataset::new(xs, vec![0.0, 1.0, 0.5])?),
            FlowProblem::Random { h, n, init } => {
                let mut rng = rng_from_seed(sub_seed(seed, 0));
                let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
                xs.sort_by(f64::total_cmp);
                let ys = xs.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
                let net = sample_net(&init.spec(h)?, h, sub_seed(seed, 1))?;
                (net, Dataset::new(xs, ys)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GfFramesConfig {
    pub problem: FlowProblem,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded frames.
    pub record_every: usize,
    /// Breakpoints closer than this form a cluster.
    pub cluster_eps: f64,
    /// Recorded frames between SVG snapshots.
    pub plot_every: usize,
    pub seeds: Vec<u64>,
}

impl Default for GfFramesConfig {
    fn default() -> Self {
        GfFramesConfig {
            problem: FlowProblem::Random { h: 12, n: 8, init: StandardInit::Default },
            scheme: Scheme::Rk4,
            dt: 1e-3,
            t_end: 20.0,
            record_every: 100,
            cluster_eps: 0.02,
            plot_every: 20,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig for GfFramesConfig {
    fn validate(&self) -> Result<(), String> {
        if let FlowProblem::Random { h, n, .. } = self.problem {
            check(h >= 1, || "problem.h must be at least 1".into())?;
            check(n >= 2, || "problem.n must be at least 2".into())?;
        }
        check_positive("dt", self.dt)?;
        check_positive("t_end", self.t_end)?;
        check(self.record_every >= 1, || "record_every must be at least 1".into())?;
        check(self.cluster_eps >= 0.0, || "cluster_eps must be nonnegative".into())?;
        check(self.plot_every >= 1, || "plot_every must be at least 1".into())?;
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
pub struct FlowRun {
    pub seed: u64,
    pub data: Dataset,
    pub traj: Trajectory,
    pub clusters: Vec<ClusterEvent>,
    pub knots: KnotLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfFramesResult {
    pub runs: Vec<FlowRun>,
    pub plot_every: usize,
}

pub fn run_one(cfg: &GfFramesConfig, seed: u64) -> LabResult<FlowRun> {
    let (net, data) = cfg.problem.build(seed)?;
    let traj = integrate_flow(&net, &data, cfg.dt, cfg.t_end, cfg.scheme, cfg.record_every)?;
    if !traj.last().net.is_finite() {
        return Err(LabError::Runtime(format!("flow diverged for seed {seed}")));
    }
    let clusters = detect_clusters(&traj, &data, cfg.cluster_eps)?;
    let knots = knot_event_log(&traj, &data);
    Ok(FlowRun { seed, data, traj, clusters, knots })
}

pub fn run(cfg: &GfFramesConfig) -> LabResult<GfFramesResult> {
    // Trajectories can be long; seeds run one after another.
    let runs = cfg.seeds.iter().map(|&s| run_one(cfg, s)).collect::<LabResult<Vec<_>>>()?;
    Ok(GfFramesResult { runs, plot_every: cfg.plot_every })
}

fn join(xs: impl Iterator<Item = f64>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl FlowRun {
    /// `|β − x_n|` of every logged entry for the pair, in frame order.
    pub fn logged_distances(&self, neuron: usize, point: usize) -> Vec<f64> {
        let x = self.data.xs()[point];
        self.knots
            .entries
            .iter()
            .filter(|e| e.i == neuron && e.n == point)
            .map(|e| (e.beta - x).abs())
            .collect()
    }
}

impl GfFramesResult {
    pub fn tables(&self) -> Vec<Table> {
        let mut frames = Table::new("gf_frames", &["seed", "frame", "t", "loss", "beta", "mu"]);
        let mut clusters = Table::new("gf_clusters", &["seed", "frame", "event", "members", "nearest_datapoint", "distance"]);
        let mut log = Table::new("gf_knot_log", &["seed", "frame", "t", "neuron", "datapoint", "beta", "kind"]);
        let mut trans = Table::new("gf_knot_transitions", &["seed", "frame", "neuron", "datapoint", "from", "to", "label"]);
        let kind = |k: &dyn std::fmt::Debug| format!("{k:?}");
        for r in &self.runs {
            for (f, fr) in r.traj.frames.iter().enumerate() {
                frames.push(vec![
                    cell(r.seed),
                    cell(f),
                    cell(fr.t),
                    cell(fr.loss),
                    join(fr.bdso.neurons.iter().map(|k| k.beta)),
                    join(fr.bdso.neurons.iter().map(|k| k.mu)),
                ]);
            }
            for e in &r.clusters {
                let members: Vec<String> = e.members.iter().map(|m| m.to_string()).collect();
                clusters.push(vec![
                    cell(r.seed),
                    cell(e.frame),
                    kind(&e.kind).to_lowercase(),
                    members.join(" "),
                    cell(e.nearest_datapoint),
                    cell(e.distance),
                ]);
            }
            for e in &r.knots.entries {
                log.push(vec![cell(r.seed), cell(e.frame), cell(e.t), cell(e.i), cell(e.n), cell(e.beta), kind(&e.kind)]);
            }
            for t in &r.knots.transitions {
                trans.push(vec![
                    cell(r.seed),
                    cell(t.frame),
                    cell(t.i),
                    cell(t.n),
                    kind(&t.from),
                    kind(&t.to),
                    t.label.clone(),
                ]);
            }
        }
        vec![frames, clusters, log, trans]
    }

    pub fn plots(&self) -> Vec<Plot> {
        let mut out = Vec::new();
        for r in &self.runs {
            let (lo, hi) = r.data.x_range();
            let pad = 0.25 * (hi - lo);
            let grid: Vec<f64> = (0..=200).map(|k| lo - pad + (hi - lo + 2.0 * pad) * k as f64 / 200.0).collect();
            let pts: Vec<(f64, f64)> = r.data.xs().iter().copied().zip(r.data.ys().iter().copied()).collect();
            let last = r.traj.frames.len() - 1;
            for (f, fr) in r.traj.frames.iter().enumerate() {
                if f % self.plot_every != 0 && f != last {
                    continue;
                }
                let curve = grid.iter().copied().zip(predict(&fr.net, &grid)).collect();
                let knots = fr.bdso.neurons.iter().map(|k| (k.beta, fr.bdso.eval(k.beta))).collect();
                out.push(
                    Plot::new(&format!("gf_frame_s{}_{f:05}", r.seed), &format!("t = {:.4}", fr.t), "x", "f(x)")
                        .with(Series::dots("data", pts.clone()))
                        .with(Series::line("network", curve))
                        .with(Series::dots("breakpoints", knots)),
                );
            }
            let loss = r.traj.frames.iter().map(|fr| (fr.t, (fr.loss.max(1e-300)).log10())).collect();
            out.push(Plot::new(&format!("gf_loss_s{}", r.seed), "loss", "t", "log10(loss)").with(Series::line("loss", loss)));
        }
        out
    }
}
