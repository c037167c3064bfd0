//! The raw shallow network `f(x) = b0 + Σ v_i (w_i x + b_i)_+`.
//!
//! Parameter vectors use the fixed layout `[w_1..w_H | v_1..v_H | b_1..b_H | b0]`
//! everywhere a flat vector is needed (gradients, Hessians, flow states).

use serde::{Deserialize, Serialize};

use crate::dynamics::{Frame, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::spline::nn_to_bdso;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub b0: f64,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
}

impl NetParams {
    pub fn new(b0: f64, w: Vec<f64>, b: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let net = NetParams { b0, w, b, v };
        net.validate()?;
        Ok(net)
    }

    /// A net with `h` neurons and every parameter zero.
    pub fn zeros(h: usize) -> Self {
        NetParams {
            b0: 0.0,
            w: vec![0.0; h],
            b: vec![0.0; h],
            v: vec![0.0; h],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.w.len();
        if h == 0 {
            return Err(Error::InvalidInput("network needs at least one neuron".into()));
        }
        if self.b.len() != h || self.v.len() != h {
            return Err(Error::InvalidInput(format!(
                "parameter lengths differ: w={}, b={}, v={}",
                h,
                self.b.len(),
                self.v.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::InvalidInput("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.b0.is_finite()
            && self.w.iter().chain(&self.b).chain(&self.v).all(|p| p.is_finite())
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    pub fn num_params(&self) -> usize {
        3 * self.width() + 1
    }

    /// Flatten into `[w | v | b | b0]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.b);
        out.push(self.b0);
        out
    }

    pub fn from_vec(theta: &[f64]) -> Result<Self> {
        if theta.is_empty() || (theta.len() - 1) % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "flat parameter vector of length {} is not 3H+1",
                theta.len()
            )));
        }
        let h = (theta.len() - 1) / 3;
        Ok(NetParams {
            w: theta[..h].to_vec(),
            v: theta[h..2 * h].to_vec(),
            b: theta[2 * h..3 * h].to_vec(),
            b0: theta[3 * h],
        })
    }
}

/// Training pairs kept sorted ascending by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, sorting the pairs by `x` (stable for ties).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput(format!(
                "x and y lengths differ ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite datapoint".into()));
        }
        let mut pairs: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = pairs.into_iter().unzip();
        Ok(Dataset { xs, ys })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        )
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn has_duplicate_x(&self) -> Option<f64> {
        self.xs.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetGradient {
    pub d_b0: f64,
    pub d_w: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_v: Vec<f64>,
}

impl NetGradient {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.d_w.len() + 1);
        out.extend_from_slice(&self.d_w);
        out.extend_from_slice(&self.d_v);
        out.extend_from_slice(&self.d_b);
        out.push(self.d_b0);
        out
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .d_w
            .iter()
            .chain(&self.d_v)
            .chain(&self.d_b)
            .map(|g| g * g)
            .sum::<f64>()
            + self.d_b0 * self.d_b0;
        sq.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop early once the gradient 2-norm drops below this value.
    pub stop_grad_norm: f64,
    /// Record a trajectory frame every this many steps (the final state is always recorded).
    pub record_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be positive".into()));
        }
        if !(self.stop_grad_norm >= 0.0) {
            return Err(Error::InvalidInput("stop_grad_norm must be nonnegative".into()));
        }
        Ok(())
    }
}

#[inline]
fn neuron_out(w: f64, b: f64, v: f64, x: f64) -> f64 {
    let pre = w * x + b;
    if pre > 0.0 {
        v * pre
    } else {
        0.0
    }
}

pub fn forward(net: &NetParams, x: f64) -> f64 {
    let mut acc = net.b0;
    for i in 0..net.width() {
        acc += neuron_out(net.w[i], net.b[i], net.v[i], x);
    }
    acc
}

/// Network outputs at every `x`; bitwise equal to calling [`forward`] per point.
pub fn predict(net: &NetParams, xs: &[f64]) -> Vec<f64> {
    let mut out = vec![net.b0; xs.len()];
    for i in 0..net.width() {
        let (w, b, v) = (net.w[i], net.b[i], net.v[i]);
        for (acc, &x) in out.iter_mut().zip(xs) {
            *acc += neuron_out(w, b, v, x);
        }
    }
    out
}

/// Residuals `y_n - f(x_n)`.
pub fn residuals(net: &NetParams, data: &Dataset) -> Vec<f64> {
    predict(net, data.xs())
        .into_iter()
        .zip(data.ys())
        .map(|(f, y)| y - f)
        .collect()
}

/// Squared loss `½ Σ (f(x_n) − y_n)²`.
pub fn loss(net: &NetParams, data: &Dataset) -> f64 {
    0.5 * residuals(net, data).iter().map(|e| e * e).sum::<f64>()
}

/// Mean squared error, `2·loss/N`.
pub fn mse(net: &NetParams, data: &Dataset) -> f64 {
    2.0 * loss(net, data) / data.len() as f64
}

/// `H×N` matrix with entry `(i, n)` true iff `w_i x_n + b_i > 0`.
pub fn activation_patterns(net: &NetParams, data: &Dataset) -> Vec<Vec<bool>> {
    (0..net.width())
        .map(|i| {
            data.xs()
                .iter()
                .map(|&x| net.w[i] * x + net.b[i] > 0.0)
                .collect()
        })
        .collect()
}

/// Loss and its gradient from a single pass over the data.
pub fn loss_and_gradient(net: &NetParams, data: &Dataset) -> (f64, NetGradient) {
    let xs = data.xs();
    let e = residuals(net, data);
    let h = net.width();
    let mut g = NetGradient {
        d_b0: -e.iter().sum::<f64>(),
        d_w: vec![0.0; h],
        d_b: vec![0.0; h],
        d_v: vec![0.0; h],
    };
    for i in 0..h {
        let (w, b, v) = (net.w[i], net.b[i], net.v[i]);
        let mut e1 = 0.0;
        let mut ex = 0.0;
        for (&x, &en) in xs.iter().zip(&e) {
            if w * x + b > 0.0 {
                e1 += en;
                ex += en * x;
            }
        }
        g.d_w[i] = -v * ex;
        g.d_b[i] = -v * e1;
        g.d_v[i] = -(w * ex + b * e1);
    }
    let l = 0.5 * e.iter().map(|r| r * r).sum::<f64>();
    (l, g)
}

pub fn gradient(net: &NetParams, data: &Dataset) -> NetGradient {
    loss_and_gradient(net, data).1
}

/// Function-preserving rescaling `w ↦ αw, b ↦ αb, v ↦ v/α` of every neuron.
pub fn scale_neurons(net: &NetParams, alpha: f64) -> Result<NetParams> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidScale(alpha));
    }
    Ok(NetParams {
        b0: net.b0,
        w: net.w.iter().map(|w| alpha * w).collect(),
        b: net.b.iter().map(|b| alpha * b).collect(),
        v: net.v.iter().map(|v| v / alpha).collect(),
    })
}

/// Per-neuron function-preserving rescaling to `|w_i| = 1`; neurons with
/// `w_i = 0` are left alone.
pub fn unit_input_weights(net: &NetParams) -> NetParams {
    let mut out = net.clone();
    for i in 0..out.width() {
        let a = out.w[i].abs();
        if a > 0.0 {
            out.w[i] /= a;
            out.b[i] /= a;
            out.v[i] *= a;
        }
    }
    out
}

/// One explicit step `θ ← θ − lr·∇ℓ`.
pub(crate) fn descend(net: &mut NetParams, g: &NetGradient, lr: f64) {
    for i in 0..net.width() {
        net.w[i] -= lr * g.d_w[i];
        net.v[i] -= lr * g.d_v[i];
        net.b[i] -= lr * g.d_b[i];
    }
    net.b0 -= lr * g.d_b0;
}

pub(crate) fn frame(t: f64, net: &NetParams, loss: f64) -> Frame {
    Frame {
        t,
        net: net.clone(),
        bdso: nn_to_bdso(net).0,
        loss,
    }
}

/// Full-batch gradient descent. Frame times are `step · learning_rate`.
pub fn train_gd(
    net: &NetParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(NetParams, Trajectory)> {
    cfg.validate()?;
    net.validate()?;
    let mut cur = net.clone();
    let mut frames = Vec::new();
    let mut step = 0usize;
    let mut last_recorded = None;
    let (mut l, mut g) = loss_and_gradient(&cur, data);
    loop {
        if !l.is_finite() || !cur.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        if step % cfg.record_every == 0 {
            frames.push(frame(step as f64 * cfg.learning_rate, &cur, l));
            last_recorded = Some(step);
        }
        if step >= cfg.epochs || g.norm() < cfg.stop_grad_norm {
            break;
        }
        descend(&mut cur, &g, cfg.learning_rate);
        step += 1;
        (l, g) = loss_and_gradient(&cur, data);
    }
    if last_recorded != Some(step) {
        frames.push(frame(step as f64 * cfg.learning_rate, &cur, l));
    }
    let traj = Trajectory {
        frames,
        meta: TrajectoryMeta {
            scheme: "gd".into(),
            dt: cfg.learning_rate,
            seed: None,
            steps: step,
            final_grad_norm: g.norm(),
        },
    };
    Ok((cur, traj))
}
