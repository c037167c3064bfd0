//! Breakpoint / delta-slope / orientation coordinates and the canonical
//! piecewise-linear form, plus the transforms between them and the raw net.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, NetParams};

/// Side of its breakpoint on which a neuron is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Active for `x > β` (`w > 0`).
    Right,
    /// Active for `x < β` (`w < 0`).
    Left,
}

impl Orientation {
    pub fn of_weight(w: f64) -> Self {
        if w > 0.0 {
            Orientation::Right
        } else {
            Orientation::Left
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Orientation::Right => 1.0,
            Orientation::Left => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s >= 0.0 {
            Orientation::Right
        } else {
            Orientation::Left
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub beta: f64,
    pub mu: f64,
    pub s: Orientation,
}

impl Knot {
    pub fn new(beta: f64, mu: f64, s: Orientation) -> Self {
        Knot { beta, mu, s }
    }

    /// One-sided hinge `(x − β)_s`.
    #[inline]
    pub fn hinge(&self, x: f64) -> f64 {
        hinge(x, self.beta, self.s)
    }

    pub fn is_active(&self, x: f64) -> bool {
        match self.s {
            Orientation::Right => x > self.beta,
            Orientation::Left => x < self.beta,
        }
    }
}

/// `(x − β)` on the active side of the breakpoint, zero elsewhere.
#[inline]
pub fn hinge(x: f64, beta: f64, s: Orientation) -> f64 {
    let d = x - beta;
    match s {
        Orientation::Right if d > 0.0 => d,
        Orientation::Left if d < 0.0 => d,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdsoParams {
    pub b0: f64,
    pub neurons: Vec<Knot>,
}

impl BdsoParams {
    pub fn new(b0: f64, neurons: Vec<Knot>) -> Result<Self> {
        if !b0.is_finite() || neurons.iter().any(|k| !(k.beta.is_finite() && k.mu.is_finite())) {
            return Err(Error::InvalidInput("non-finite spline parameter".into()));
        }
        Ok(BdsoParams { b0, neurons })
    }

    pub fn width(&self) -> usize {
        self.neurons.len()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.neurons.iter().map(|k| k.beta).collect()
    }

    pub fn delta_slopes(&self) -> Vec<f64> {
        self.neurons.iter().map(|k| k.mu).collect()
    }

    /// Direct evaluation `b0 + Σ μ_i (x − β_i)_{s_i}`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.b0;
        for k in &self.neurons {
            acc += k.mu * k.hinge(x);
        }
        acc
    }
}

/// Neurons with zero input weight dropped by [`nn_to_bdso`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folded: usize,
    /// Constant added to `b0` by the dropped neurons.
    pub constant: f64,
}

/// Converts raw weights to spline coordinates. Neurons with `w = 0` are
/// constant functions; their value `v·max(0, b)` is folded into `b0`.
pub fn nn_to_bdso(net: &NetParams) -> (BdsoParams, FoldReport) {
    let mut b0 = net.b0;
    let mut report = FoldReport::default();
    let mut neurons = Vec::with_capacity(net.width());
    for i in 0..net.width() {
        let (w, b, v) = (net.w[i], net.b[i], net.v[i]);
        if w == 0.0 {
            let c = v * b.max(0.0);
            b0 += c;
            report.folded += 1;
            report.constant += c;
        } else {
            neurons.push(Knot::new(-b / w, v * w, Orientation::of_weight(w)));
        }
    }
    (BdsoParams { b0, neurons }, report)
}

/// Inverse transform under the balanced convention `|w| = |v| = √|μ|`.
pub fn bdso_to_nn(bdso: &BdsoParams) -> NetParams {
    let h = bdso.width();
    let mut net = NetParams {
        b0: bdso.b0,
        w: Vec::with_capacity(h),
        b: Vec::with_capacity(h),
        v: Vec::with_capacity(h),
    };
    for k in &bdso.neurons {
        let s = k.s.sign();
        let (w, v) = if k.mu == 0.0 {
            (s, 0.0)
        } else {
            let r = k.mu.abs().sqrt();
            (s * r, k.mu.signum() * s * r)
        };
        net.w.push(w);
        net.v.push(v);
        net.b.push(-k.beta * w);
    }
    net
}

/// Canonical piecewise-linear form. Piece `p` covers `[knots[p-1], knots[p])`
/// with sentinels `±∞` and has value `slopes[p]·x + intercepts[p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlParams {
    pub knots: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl PwlParams {
    pub fn new(knots: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let pwl = PwlParams {
            knots,
            slopes,
            intercepts,
        };
        pwl.validate()?;
        Ok(pwl)
    }

    pub fn num_pieces(&self) -> usize {
        self.slopes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slopes.len() != self.knots.len() + 1 || self.intercepts.len() != self.slopes.len()
        {
            return Err(Error::InvalidInput("PWL needs K knots and K+1 pieces".into()));
        }
        if self.knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("PWL knots must be strictly increasing".into()));
        }
        if let Some(gap) = self.max_continuity_gap() {
            let scale = self.value_scale();
            if gap > 1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "PWL discontinuous: jump {gap:e} at scale {scale:e}"
                )));
            }
        }
        Ok(())
    }

    /// Largest jump between adjacent pieces over all knots.
    pub fn max_continuity_gap(&self) -> Option<f64> {
        self.knots
            .iter()
            .enumerate()
            .map(|(p, &k)| {
                let left = self.slopes[p] * k + self.intercepts[p];
                let right = self.slopes[p + 1] * k + self.intercepts[p + 1];
                (left - right).abs()
            })
            .reduce(f64::max)
    }

    fn value_scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for (p, &k) in self.knots.iter().enumerate() {
            s = s
                .max((self.slopes[p] * k).abs())
                .max(self.intercepts[p].abs())
                .max(self.intercepts[p + 1].abs());
        }
        s
    }

    /// Index of the piece containing `x` (half-open on the right).
    pub fn piece_index(&self, x: f64) -> usize {
        self.knots.partition_point(|&k| k <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.piece_index(x);
        self.slopes[p] * x + self.intercepts[p]
    }
}

pub fn eval_pwl(pwl: &PwlParams, x: f64) -> f64 {
    pwl.eval(x)
}

/// Collapses the spline form into sorted knots with per-piece slope and
/// intercept. Coincident breakpoints merge into one knot.
pub fn bdso_to_pwl(bdso: &BdsoParams) -> PwlParams {
    let mut order: Vec<&Knot> = bdso.neurons.iter().collect();
    order.sort_by(|a, b| a.beta.total_cmp(&b.beta));

    let mut knots: Vec<f64> = Vec::new();
    for k in &order {
        if knots.last() != Some(&k.beta) {
            knots.push(k.beta);
        }
    }

    // Piece p is active for right-facing neurons with β ≤ knots[p-1] and
    // left-facing neurons with β ≥ knots[p].
    let mut left_mu: f64 = 0.0;
    let mut left_mubeta: f64 = 0.0;
    for k in order.iter().filter(|k| k.s == Orientation::Left) {
        left_mu += k.mu;
        left_mubeta += k.mu * k.beta;
    }
    let mut right_mu = 0.0;
    let mut right_mubeta = 0.0;

    let mut slopes = Vec::with_capacity(knots.len() + 1);
    let mut intercepts = Vec::with_capacity(knots.len() + 1);
    slopes.push(left_mu);
    intercepts.push(bdso.b0 - left_mubeta);
    let mut j = 0;
    for &kappa in &knots {
        while j < order.len() && order[j].beta == kappa {
            let k = order[j];
            match k.s {
                Orientation::Right => {
                    right_mu += k.mu;
                    right_mubeta += k.mu * k.beta;
                }
                Orientation::Left => {
                    left_mu -= k.mu;
                    left_mubeta -= k.mu * k.beta;
                }
            }
            j += 1;
        }
        slopes.push(right_mu + left_mu);
        intercepts.push(bdso.b0 - right_mubeta - left_mubeta);
    }
    PwlParams {
        knots,
        slopes,
        intercepts,
    }
}

/// Roughness `Σ μ_i²`, the discrete analogue of `∫ f''²`.
pub fn roughness(bdso: &BdsoParams) -> f64 {
    bdso.neurons.iter().map(|k| k.mu * k.mu).sum()
}

/// Roughness restricted to breakpoints inside `[lo, hi]`.
pub fn roughness_window(bdso: &BdsoParams, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidWindow { lo, hi });
    }
    Ok(bdso
        .neurons
        .iter()
        .filter(|k| k.beta >= lo && k.beta <= hi)
        .map(|k| k.mu * k.mu)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    /// Sorted distinct breakpoints delimiting the pieces.
    pub boundaries: Vec<f64>,
    /// Datapoint indices per piece; `boundaries.len() + 1` entries.
    pub pieces: Vec<Vec<usize>>,
    /// Whether each datapoint sits alone in its piece.
    pub lonely: Vec<bool>,
    /// Every piece holds at most one datapoint.
    pub all_lonely: bool,
}

impl PartitionReport {
    pub fn lonely_fraction(&self) -> f64 {
        if self.lonely.is_empty() {
            return 0.0;
        }
        self.lonely.iter().filter(|&&l| l).count() as f64 / self.lonely.len() as f64
    }
}

/// Assigns datapoints to the pieces cut out by the breakpoints.
pub fn partition_data(bdso: &BdsoParams, data: &Dataset) -> PartitionReport {
    let mut boundaries = bdso.breakpoints();
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();
    let mut pieces = vec![Vec::new(); boundaries.len() + 1];
    let mut piece_of = Vec::with_capacity(data.len());
    for (n, &x) in data.xs().iter().enumerate() {
        let p = boundaries.partition_point(|&b| b <= x);
        pieces[p].push(n);
        piece_of.push(p);
    }
    let lonely: Vec<bool> = piece_of.iter().map(|&p| pieces[p].len() == 1).collect();
    let all_lonely = pieces.iter().all(|p| p.len() <= 1);
    PartitionReport {
        boundaries,
        pieces,
        lonely,
        all_lonely,
    }
}

/// Number of ways to put `n` datapoints into `h + 1` pieces with at most one
/// per piece: the binomial coefficient `C(h+1, n)`.
pub fn lonely_partition_count(h: u64, n: u64) -> BigUint {
    let urns = h + 1;
    if n > urns {
        return BigUint::from(0u32);
    }
    let k = n.min(urns - n);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= urns - i;
        acc /= i + 1;
    }
    acc
}

/// Builds a net that reproduces `pwl` exactly on `[anchor, ∞)` using only
/// right-facing neurons: one at the anchor carrying the leftmost slope and
/// one per knot carrying the slope change there.
pub fn cpwl_to_nn_exact(pwl: &PwlParams, anchor: f64) -> Result<NetParams> {
    pwl.validate()?;
    if let Some(&first) = pwl.knots.first() {
        if !(anchor < first) {
            return Err(Error::InvalidAnchor {
                anchor,
                first_knot: first,
            });
        }
    }
    let m0 = pwl.slopes[0];
    let b0 = m0 * anchor + pwl.intercepts[0];
    let mut neurons = Vec::with_capacity(pwl.knots.len() + 1);
    if m0 != 0.0 {
        neurons.push(Knot::new(anchor, m0, Orientation::Right));
    }
    for (p, &kappa) in pwl.knots.iter().enumerate() {
        neurons.push(Knot::new(
            kappa,
            pwl.slopes[p + 1] - pwl.slopes[p],
            Orientation::Right,
        ));
    }
    Ok(bdso_to_nn(&BdsoParams { b0, neurons }))
}
