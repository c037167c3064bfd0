//! Gradient flow in network coordinates, observed through the spline view.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_knot, KnotKind};
use crate::net::{descend, frame, loss_and_gradient, residuals, scale_neurons, Dataset, NetParams};
use crate::spline::BdsoParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub net: NetParams,
    pub bdso: BdsoParams,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scheme: String,
    pub dt: f64,
    pub seed: Option<u64>,
    pub steps: usize,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectories hold at least one frame")
    }

    pub fn losses(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.loss).collect()
    }
}

/// Per-neuron residual correlations `⟨ê_i, 1⟩` and `⟨ê_i, x⟩` over the
/// neuron's active data.
fn neuron_correlations(net: &NetParams, data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let e = residuals(net, data);
    let h = net.width();
    let mut e1 = vec![0.0; h];
    let mut ex = vec![0.0; h];
    for i in 0..h {
        for (&x, &en) in data.xs().iter().zip(&e) {
            if net.w[i] * x + net.b[i] > 0.0 {
                e1[i] += en;
                ex[i] += en * x;
            }
        }
    }
    (e1, ex)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineVelocities {
    pub beta_dot: Vec<f64>,
    pub mu_dot: Vec<f64>,
    /// Neurons with `w = 0`, whose breakpoint (and `β̇`, reported as 0) is undefined.
    pub undefined: Vec<usize>,
}

/// Time derivatives of breakpoints and delta-slopes under `θ̇ = −∇ℓ`:
/// `β̇ = −(v/w)[⟨ê,1⟩ + β⟨ê,x⟩]`, `μ̇ = (w² + v²)⟨ê,x⟩ + w b⟨ê,1⟩`.
pub fn spline_velocities(net: &NetParams, data: &Dataset) -> SplineVelocities {
    let (e1, ex) = neuron_correlations(net, data);
    let h = net.width();
    let mut out = SplineVelocities {
        beta_dot: vec![0.0; h],
        mu_dot: vec![0.0; h],
        undefined: Vec::new(),
    };
    for i in 0..h {
        let (w, b, v) = (net.w[i], net.b[i], net.v[i]);
        out.mu_dot[i] = (w * w + v * v) * ex[i] + w * b * e1[i];
        if w == 0.0 {
            out.undefined.push(i);
        } else {
            let beta = -b / w;
            out.beta_dot[i] = -(v / w) * (e1[i] + beta * ex[i]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScalingReport {
    pub alpha: f64,
    pub beta_dot: Vec<f64>,
    pub beta_dot_scaled: Vec<f64>,
    /// `w²⟨ê,x⟩ + w b⟨ê,1⟩`, the part of `μ̇` that grows as `α²`.
    pub a: Vec<f64>,
    /// `v²⟨ê,x⟩`, the part that shrinks as `α⁻²`.
    pub b: Vec<f64>,
    pub mu_dot_scaled: Vec<f64>,
    /// Largest relative deviation from `β̇_scaled = β̇/α²`.
    pub beta_rel_err: f64,
    /// Largest relative deviation from `μ̇_scaled = α²A + α⁻²B`.
    pub mu_rel_err: f64,
}

fn rel_err(got: f64, want: f64) -> f64 {
    let d = (got - want).abs();
    if d == 0.0 {
        0.0
    } else {
        d / got.abs().max(want.abs())
    }
}

/// Compares velocities before and after `scale_neurons(net, α)`.
pub fn alpha_scaling_law(net: &NetParams, data: &Dataset, alpha: f64) -> Result<AlphaScalingReport> {
    if let Some(i) = net.w.iter().position(|&w| w == 0.0) {
        return Err(Error::ZeroInputWeight(i));
    }
    let scaled = scale_neurons(net, alpha)?;
    let base = spline_velocities(net, data);
    let after = spline_velocities(&scaled, data);
    let (e1, ex) = neuron_correlations(net, data);
    let h = net.width();
    let a: Vec<f64> = (0..h)
        .map(|i| net.w[i] * net.w[i] * ex[i] + net.w[i] * net.b[i] * e1[i])
        .collect();
    let b: Vec<f64> = (0..h).map(|i| net.v[i] * net.v[i] * ex[i]).collect();
    let a2 = alpha * alpha;
    let beta_rel_err = (0..h)
        .map(|i| rel_err(after.beta_dot[i], base.beta_dot[i] / a2))
        .fold(0.0, f64::max);
    let mu_rel_err = (0..h)
        .map(|i| rel_err(after.mu_dot[i], a2 * a[i] + b[i] / a2))
        .fold(0.0, f64::max);
    Ok(AlphaScalingReport {
        alpha,
        beta_dot: base.beta_dot,
        beta_dot_scaled: after.beta_dot,
        a,
        b,
        mu_dot_scaled: after.mu_dot,
        beta_rel_err,
        mu_rel_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

fn rk4_step(net: &NetParams, data: &Dataset, dt: f64) -> Result<NetParams> {
    let field = |theta: &[f64]| -> Result<Vec<f64>> {
        let n = NetParams::from_vec(theta)?;
        Ok(loss_and_gradient(&n, data).1.to_vec().into_iter().map(|g| -g).collect())
    };
    let y = net.to_vec();
    let offset = |k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = field(&y)?;
    let k2 = field(&offset(&k1, 0.5 * dt))?;
    let k3 = field(&offset(&k2, 0.5 * dt))?;
    let k4 = field(&offset(&k3, dt))?;
    let next: Vec<f64> = (0..y.len())
        .map(|j| y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect();
    NetParams::from_vec(&next)
}

/// Fixed-step integration of `θ̇ = −∇ℓ` up to `t_end`. A last step that
/// would overshoot is shortened; one within rounding of `dt` is left alone.
pub fn integrate_flow(
    net: &NetParams,
    data: &Dataset,
    dt: f64,
    t_end: f64,
    scheme: Scheme,
    record_every: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("need dt > 0 and t_end > 0, got {dt}, {t_end}")));
    }
    if record_every == 0 {
        return Err(Error::InvalidInput("record_every must be positive".into()));
    }
    net.validate()?;
    let steps = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut cur = net.clone();
    let (mut l, mut g) = loss_and_gradient(&cur, data);
    let mut frames = vec![frame(0.0, &cur, l)];
    for k in 1..=steps {
        let mut h = dt;
        if k == steps {
            let rest = t_end - (steps - 1) as f64 * dt;
            if (rest - dt).abs() > 1e-9 * dt {
                h = rest;
            }
        }
        match scheme {
            Scheme::Euler => descend(&mut cur, &g, h),
            Scheme::Rk4 => cur = rk4_step(&cur, data, h)?,
        }
        (l, g) = loss_and_gradient(&cur, data);
        let t = if k == steps { t_end } else { k as f64 * dt };
        if !l.is_finite() || !cur.is_finite() {
            return Err(Error::NonFiniteState { t });
        }
        if k % record_every == 0 || k == steps {
            frames.push(frame(t, &cur, l));
        }
    }
    Ok(Trajectory {
        frames,
        meta: TrajectoryMeta {
            scheme: scheme.name().into(),
            dt,
            seed: None,
            steps,
            final_grad_norm: g.norm(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterEventKind {
    Form,
    Shift,
    Split,
    Smear,
    Dissolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub frame: usize,
    pub kind: ClusterEventKind,
    /// Breakpoint (spline-neuron) indices in the cluster.
    pub members: Vec<usize>,
    pub nearest_datapoint: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Cluster {
    members: BTreeSet<usize>,
    lo: f64,
    hi: f64,
    nearest: usize,
    distance: f64,
}

fn nearest_point(xs: &[f64], c: f64) -> (usize, f64) {
    let j = xs.partition_point(|&x| x < c);
    let mut best = (0, f64::INFINITY);
    for k in [j.saturating_sub(1), j.min(xs.len() - 1)] {
        let d = (xs[k] - c).abs();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Groups of at least two breakpoints chained by gaps of at most `eps`.
fn clusters_of(bdso: &BdsoParams, xs: &[f64], eps: f64) -> Vec<Cluster> {
    let mut pts: Vec<(f64, usize)> = bdso
        .neurons
        .iter()
        .enumerate()
        .map(|(i, k)| (k.beta, i))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..=pts.len() {
        if j == pts.len() || pts[j].0 - pts[j - 1].0 > eps {
            if j - start >= 2 {
                let group = &pts[start..j];
                let centre = group.iter().map(|p| p.0).sum::<f64>() / group.len() as f64;
                let (nearest, distance) = nearest_point(xs, centre);
                out.push(Cluster {
                    members: group.iter().map(|p| p.1).collect(),
                    lo: group[0].0,
                    hi: group[group.len() - 1].0,
                    nearest,
                    distance,
                });
            }
            start = j;
        }
    }
    out
}

fn event(frame: usize, kind: ClusterEventKind, c: &Cluster) -> ClusterEvent {
    ClusterEvent {
        frame,
        kind,
        members: c.members.iter().copied().collect(),
        nearest_datapoint: c.nearest,
        distance: c.distance,
    }
}

/// Tracks breakpoint clusters between consecutive frames and reports
/// membership changes. Clusters are matched by shared members.
pub fn detect_clusters(traj: &Trajectory, data: &Dataset, eps: f64) -> Result<Vec<ClusterEvent>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("cluster radius must be nonnegative, got {eps}")));
    }
    let xs = data.xs();
    let mut events = Vec::new();
    let mut prev: Vec<Cluster> = Vec::new();
    for (f, fr) in traj.frames.iter().enumerate() {
        let cur = clusters_of(&fr.bdso, xs, eps);
        for p in &prev {
            let hits: Vec<&Cluster> = cur
                .iter()
                .filter(|c| !c.members.is_disjoint(&p.members))
                .collect();
            match hits.len() {
                0 => events.push(event(f, ClusterEventKind::Dissolve, p)),
                1 => {}
                _ => events.push(event(f, ClusterEventKind::Split, p)),
            }
        }
        for c in &cur {
            let parents: Vec<&Cluster> = prev
                .iter()
                .filter(|p| !p.members.is_disjoint(&c.members))
                .collect();
            match parents.as_slice() {
                [] => events.push(event(f, ClusterEventKind::Form, c)),
                [p] => {
                    let siblings = cur
                        .iter()
                        .filter(|o| !o.members.is_disjoint(&p.members))
                        .count();
                    if siblings > 1 {
                        continue;
                    }
                    if c.hi - c.lo > 3.0 * eps && p.hi - p.lo <= 3.0 * eps {
                        events.push(event(f, ClusterEventKind::Smear, c));
                    } else if c.members != p.members || c.nearest != p.nearest {
                        events.push(event(f, ClusterEventKind::Shift, c));
                    }
                }
                _ => events.push(event(f, ClusterEventKind::Shift, c)),
            }
        }
        prev = cur;
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotEntry {
    pub frame: usize,
    pub t: f64,
    /// Spline-neuron index.
    pub i: usize,
    /// Datapoint index.
    pub n: usize,
    pub beta: f64,
    pub kind: KnotKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotTransition {
    pub frame: usize,
    pub i: usize,
    pub n: usize,
    pub from: KnotKind,
    pub to: KnotKind,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnotLog {
    pub entries: Vec<KnotEntry>,
    pub transitions: Vec<KnotTransition>,
}

fn transition_label(from: KnotKind, to: KnotKind) -> &'static str {
    match (from, to) {
        (KnotKind::TypeIIIAttractor, KnotKind::TypeIIRepulsor) => "splitting",
        (KnotKind::TypeIIIAttractor, KnotKind::TypeIPassover) => "moving past",
        (_, KnotKind::TypeIIIAttractor) => "captured",
        (KnotKind::TypeIIRepulsor, _) => "released",
        _ => "changed",
    }
}

/// Classifies every breakpoint against its interior neighbouring
/// datapoints at each frame and flags type changes.
pub fn knot_event_log(traj: &Trajectory, data: &Dataset) -> KnotLog {
    let xs = data.xs();
    let mut log = KnotLog::default();
    let mut last: std::collections::HashMap<(usize, usize), (usize, KnotKind)> =
        std::collections::HashMap::new();
    for (f, fr) in traj.frames.iter().enumerate() {
        for (i, knot) in fr.bdso.neurons.iter().enumerate() {
            let j = xs.partition_point(|&x| x < knot.beta);
            for n in [j.wrapping_sub(1), j] {
                if n == 0 || n == usize::MAX || n + 1 >= xs.len() {
                    continue;
                }
                let Ok(class) = classify_knot(&fr.bdso, i, n, data) else {
                    continue;
                };
                log.entries.push(KnotEntry {
                    frame: f,
                    t: fr.t,
                    i,
                    n,
                    beta: knot.beta,
                    kind: class.kind,
                });
                if let Some(&(pf, prev)) = last.get(&(i, n)) {
                    if pf + 1 == f && prev != class.kind {
                        log.transitions.push(KnotTransition {
                            frame: f,
                            i,
                            n,
                            from: prev,
                            to: class.kind,
                            label: transition_label(prev, class.kind).into(),
                        });
                    }
                }
                last.insert((i, n), (f, class.kind));
            }
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{predict, train_gd, TrainConfig};

    fn data() -> Dataset {
        Dataset::new(vec![-1.5, -0.4, 0.3, 1.1, 1.9], vec![0.4, -0.2, 0.7, 0.1, -0.5]).unwrap()
    }

    fn net() -> NetParams {
        NetParams::new(0.1, vec![1.2, -0.8, 0.6], vec![0.3, 0.5, -0.2], vec![0.9, -0.7, 1.1]).unwrap()
    }

    #[test]
    fn interpolating_net_is_still() {
        let n = net();
        let xs = data().xs().to_vec();
        let d = Dataset::new(xs.clone(), predict(&n, &xs)).unwrap();
        let v = spline_velocities(&n, &d);
        assert!(v.beta_dot.iter().chain(&v.mu_dot).all(|&x| x == 0.0));
    }

    #[test]
    fn zero_output_weights_freeze_breakpoints() {
        let mut n = net();
        n.v = vec![0.0; 3];
        let v = spline_velocities(&n, &data());
        assert!(v.beta_dot.iter().all(|&b| b == 0.0));
        let rep = alpha_scaling_law(&n, &data(), 3.0).unwrap();
        for i in 0..3 {
            assert!(rel_err(rep.mu_dot_scaled[i], 9.0 * v.mu_dot[i]) < 1e-12);
        }
    }

    #[test]
    fn alpha_one_is_identity() {
        let rep = alpha_scaling_law(&net(), &data(), 1.0).unwrap();
        assert_eq!(rep.beta_dot, rep.beta_dot_scaled);
        assert_eq!(rep.beta_rel_err, 0.0);
        let rep = alpha_scaling_law(&net(), &data(), 10.0).unwrap();
        assert!(rep.beta_rel_err < 1e-10 && rep.mu_rel_err < 1e-10);
        let mut dead = net();
        dead.w[1] = 0.0;
        assert_eq!(alpha_scaling_law(&dead, &data(), 2.0), Err(Error::ZeroInputWeight(1)));
    }

    #[test]
    fn euler_matches_gd() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 7,
            stop_grad_norm: 0.0,
            record_every: 1,
        };
        let (gd, _) = train_gd(&net(), &data(), &cfg).unwrap();
        let flow = integrate_flow(&net(), &data(), 0.01, 0.07, Scheme::Euler, 1).unwrap();
        assert_eq!(flow.last().net, gd);
        assert_eq!(flow.frames.len(), 8);
        assert_eq!(flow.last().t, 0.07);
    }

    #[test]
    fn flow_descends() {
        let traj = integrate_flow(&net(), &data(), 1e-3, 2.0, Scheme::Rk4, 50).unwrap();
        assert!(traj.frames.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(traj.frames.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn static_clusters_only_form() {
        let n = NetParams::new(0.0, vec![1.0, 1.0, 1.0], vec![0.0, -0.001, -1.0], vec![0.0; 3]).unwrap();
        let d = Dataset::new(vec![-1.0, 0.0, 1.0], vec![0.0; 3]).unwrap();
        let traj = integrate_flow(&n, &d, 0.1, 1.0, Scheme::Euler, 1).unwrap();
        let ev = detect_clusters(&traj, &d, 0.01).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, ClusterEventKind::Form);
        assert_eq!(ev[0].members, vec![0, 1]);
        assert_eq!(ev[0].nearest_datapoint, 1);
        assert!(detect_clusters(&traj, &d, 0.0).unwrap().is_empty());
        assert!(knot_event_log(&traj, &d).transitions.is_empty());
    }
}
