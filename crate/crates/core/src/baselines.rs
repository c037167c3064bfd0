//! Reference fitters: least-squares lines, interpolating splines,
//! minimum-norm hinge regression and segmented regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Dataset;
use crate::spline::{hinge, BdsoParams, PwlParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Least-squares line. A single point, or several sharing one `x`, gives the
/// horizontal line through the mean of `y`.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<Line> {
    let Some(&(x0, _)) = points.first() else {
        return Err(Error::EmptyInput);
    };
    let n = points.len() as f64;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    if points.iter().all(|p| p.0 == x0) {
        return Ok(Line {
            slope: 0.0,
            intercept: ym,
        });
    }
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    let slope = sxy / sxx;
    Ok(Line {
        slope,
        intercept: ym - slope * xm,
    })
}

fn require_distinct(data: &Dataset) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidInput("need at least two datapoints".into()));
    }
    match data.has_duplicate_x() {
        Some(x) => Err(Error::DuplicateX(x)),
        None => Ok(()),
    }
}

/// Piecewise-linear interpolant with knots at the interior datapoints and
/// the end segments extended.
pub fn linear_interpolant(data: &Dataset) -> Result<PwlParams> {
    require_distinct(data)?;
    let (xs, ys) = (data.xs(), data.ys());
    let n = xs.len();
    let mut slopes = Vec::with_capacity(n - 1);
    let mut intercepts = Vec::with_capacity(n - 1);
    for p in 0..n - 1 {
        let m = (ys[p + 1] - ys[p]) / (xs[p + 1] - xs[p]);
        slopes.push(m);
        intercepts.push(ys[p] - m * xs[p]);
    }
    Ok(PwlParams {
        knots: xs[1..n - 1].to_vec(),
        slopes,
        intercepts,
    })
}

/// Interpolating cubic spline with zero second derivative at both ends,
/// stored as knot values and second derivatives `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub second_derivs: Vec<f64>,
}

impl CubicSpline {
    fn segment(&self, x: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1
    }

    fn end_slope(&self, right: bool) -> f64 {
        let n = self.knots.len();
        let (i, j) = if right { (n - 2, n - 1) } else { (0, 1) };
        let h = self.knots[j] - self.knots[i];
        let chord = (self.values[j] - self.values[i]) / h;
        let (mi, mj) = (self.second_derivs[i], self.second_derivs[j]);
        if right {
            chord + h * (mi + 2.0 * mj) / 6.0
        } else {
            chord - h * (2.0 * mi + mj) / 6.0
        }
    }

    /// Value at `x`; linear beyond the end knots.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x < self.knots[0] {
            return self.values[0] + self.end_slope(false) * (x - self.knots[0]);
        }
        if x > self.knots[n - 1] {
            return self.values[n - 1] + self.end_slope(true) * (x - self.knots[n - 1]);
        }
        let i = self.segment(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - x, x - x0);
        let (m0, m1) = (self.second_derivs[i], self.second_derivs[i + 1]);
        m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (self.values[i] / h - m0 * h / 6.0) * a
            + (self.values[i + 1] / h - m1 * h / 6.0) * b
    }

    /// Second derivative at `x`; zero beyond the end knots.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x < self.knots[0] || x > self.knots[n - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let t = (x - x0) / (x1 - x0);
        (1.0 - t) * self.second_derivs[i] + t * self.second_derivs[i + 1]
    }
}

/// Solves the tridiagonal system for the natural spline's second derivatives.
pub fn natural_cubic_interpolant(data: &Dataset) -> Result<CubicSpline> {
    require_distinct(data)?;
    let (xs, ys) = (data.xs(), data.ys());
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n > 2 {
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            rhs[r] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        // Thomas algorithm; off-diagonals are h[1..k].
        for r in 1..k {
            let factor = h[r] / diag[r - 1];
            diag[r] -= factor * h[r];
            rhs[r] -= factor * rhs[r - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for r in (0..k - 1).rev() {
            m[r + 1] = (rhs[r] - h[r + 1] * m[r + 2]) / diag[r];
        }
    }
    Ok(CubicSpline {
        knots: xs.to_vec(),
        values: ys.to_vec(),
        second_derivs: m,
    })
}

/// `∫ f''²` over the knot span; `f''` is linear between knots.
pub fn spline_roughness(spline: &CubicSpline) -> f64 {
    spline
        .knots
        .windows(2)
        .zip(spline.second_derivs.windows(2))
        .map(|(k, m)| (k[1] - k[0]) / 3.0 * (m[0] * m[0] + m[0] * m[1] + m[1] * m[1]))
        .sum()
}

/// Hinge features `φ_ni = (x_n − β_i)_{s_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub phi: DMatrix<f64>,
}

pub fn build_features(data: &Dataset, bdso: &BdsoParams) -> FeatureMatrix {
    build_features_at(data.xs(), bdso)
}

pub fn build_features_at(xs: &[f64], bdso: &BdsoParams) -> FeatureMatrix {
    FeatureMatrix {
        phi: DMatrix::from_fn(xs.len(), bdso.width(), |n, i| {
            let k = &bdso.neurons[i];
            hinge(xs[n], k.beta, k.s)
        }),
    }
}

/// Least-norm `μ` with `Φμ = y`, via the SVD pseudo-inverse. Fails if `y`
/// is not reproduced to `1e−8·‖y‖`.
pub fn min_norm_interpolant(features: &FeatureMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let phi = &features.phi;
    if phi.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "feature rows {} differ from target length {}",
            phi.nrows(),
            y.len()
        )));
    }
    let yv = DVector::from_column_slice(y);
    let svd = phi.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12 * phi.nrows().max(phi.ncols()) as f64;
    let mu = svd
        .solve(&yv, cutoff)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let resid = (phi * &mu - &yv).norm();
    let scale = yv.norm();
    if resid > 1e-8 * scale {
        return Err(Error::Infeasible(if scale > 0.0 { resid / scale } else { resid }));
    }
    Ok(mu.iter().copied().collect())
}

/// Gradient descent on `½‖y − Φμ‖²` from `μ = 0`. Stops when the gradient
/// norm falls below `tol` or after `max_steps`.
///
/// With fewer rows than columns the iterates stay in the row space,
/// `μ = Φᵀa`, and the same steps run on `a` with the `N × N` kernel
/// `K = ΦΦᵀ`: `a ← a − lr (Ka − y)`. The gradient norm is then checked
/// every few steps, so the step count can overshoot the first crossing of
/// `tol` by a handful.
pub fn delta_slope_gd(
    features: &FeatureMatrix,
    y: &[f64],
    lr: f64,
    max_steps: usize,
    tol: f64,
) -> (Vec<f64>, usize) {
    let phi = &features.phi;
    let (n, h) = phi.shape();
    if n < h {
        return kernel_gd(phi, y, lr, max_steps, tol);
    }
    let phit = phi.transpose();
    let yv = DVector::from_column_slice(y);
    let mut mu = DVector::zeros(h);
    let mut steps = 0;
    while steps < max_steps {
        let grad = &phit * (phi * &mu - &yv);
        if grad.norm() < tol {
            break;
        }
        mu.axpy(-lr, &grad, 1.0);
        steps += 1;
    }
    (mu.iter().copied().collect(), steps)
}

fn kernel_gd(phi: &DMatrix<f64>, y: &[f64], lr: f64, max_steps: usize, tol: f64) -> (Vec<f64>, usize) {
    const CHECK_EVERY: usize = 16;
    let n = phi.nrows();
    let gram = phi * phi.transpose();
    let k: Vec<f64> = (0..n * n).map(|idx| gram[(idx / n, idx % n)]).collect();
    let mut a = vec![0.0; n];
    let mut r = vec![0.0; n];
    // K is symmetric, so its rows double as columns.
    let residual = |a: &[f64], r: &mut [f64]| {
        for (ri, yi) in r.iter_mut().zip(y) {
            *ri = -yi;
        }
        for (col, aj) in k.chunks_exact(n).zip(a) {
            for (ri, kij) in r.iter_mut().zip(col) {
                *ri += kij * aj;
            }
        }
    };
    // ‖Φᵀr‖² = rᵀKr.
    let grad_sq = |r: &[f64]| -> f64 {
        k.chunks_exact(n).zip(r).map(|(row, ri)| ri * row.iter().zip(r).map(|(x, z)| x * z).sum::<f64>()).sum()
    };
    let mut steps = 0;
    while steps < max_steps {
        residual(&a, &mut r);
        if steps % CHECK_EVERY == 0 && grad_sq(&r).max(0.0).sqrt() < tol {
            break;
        }
        for (ai, ri) in a.iter_mut().zip(&r) {
            *ai -= lr * ri;
        }
        steps += 1;
    }
    let mu = phi.transpose() * DVector::from_vec(a);
    (mu.iter().copied().collect(), steps)
}

/// Contiguous segmentation of the sorted data with one OLS line per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegFit {
    /// Start index of each segment; the first is 0.
    pub starts: Vec<usize>,
    pub lines: Vec<Line>,
    pub sse: f64,
    pub n: usize,
}

impl SegFit {
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut ends = self.starts[1..].to_vec();
        ends.push(self.n);
        self.starts.iter().zip(ends).map(|(&s, e)| s..e).collect()
    }

    pub fn num_pieces(&self) -> usize {
        self.starts.len()
    }
}

/// SSE of the OLS line over every contiguous run `i..j` of the data.
struct SegmentCosts {
    n: usize,
    cost: Vec<f64>,
}

impl SegmentCosts {
    fn new(data: &Dataset) -> Self {
        let (xs, ys) = (data.xs(), data.ys());
        let n = xs.len();
        let mut cost = vec![0.0; n * (n + 1)];
        for i in 0..n {
            // Running means and co-moments (Welford).
            let (mut mx, mut my, mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let mut flat = true;
            for j in i..n {
                flat &= xs[j] == xs[i];
                let k = (j - i + 1) as f64;
                let dx = xs[j] - mx;
                let dy = ys[j] - my;
                mx += dx / k;
                my += dy / k;
                cxx += dx * (xs[j] - mx);
                cxy += dx * (ys[j] - my);
                cyy += dy * (ys[j] - my);
                let sse = if flat || cxx <= 0.0 {
                    cyy
                } else if j - i < 2 {
                    // A line through two distinct points.
                    0.0
                } else {
                    cyy - cxy * cxy / cxx
                };
                cost[i * (n + 1) + j + 1] = sse.max(0.0);
            }
        }
        SegmentCosts { n, cost }
    }

    fn sse(&self, i: usize, j: usize) -> f64 {
        self.cost[i * (self.n + 1) + j]
    }
}

fn check_pieces(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::PiecesOutOfRange { k, n });
    }
    Ok(())
}

fn seg_fit(data: &Dataset, starts: Vec<usize>) -> Result<SegFit> {
    let n = data.len();
    let mut fit = SegFit {
        starts,
        lines: Vec::new(),
        sse: 0.0,
        n,
    };
    let pts: Vec<(f64, f64)> = data.xs().iter().copied().zip(data.ys().iter().copied()).collect();
    for r in fit.segments() {
        let line = ols_fit(&pts[r.clone()])?;
        fit.sse += pts[r].iter().map(|&(x, y)| (y - line.eval(x)).powi(2)).sum::<f64>();
        fit.lines.push(line);
    }
    Ok(fit)
}

/// Globally optimal `k`-segment least-squares fit by dynamic programming.
pub fn dp_segreg(data: &Dataset, k: usize) -> Result<SegFit> {
    let n = data.len();
    check_pieces(k, n)?;
    let costs = SegmentCosts::new(data);
    // best[p][j]: least SSE of the first j points in p segments.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut arg = vec![vec![0usize; n + 1]; k + 1];
    best[0][0] = 0.0;
    for p in 1..=k {
        for j in p..=n {
            for i in p - 1..j {
                let c = best[p - 1][i] + costs.sse(i, j);
                if c < best[p][j] {
                    best[p][j] = c;
                    arg[p][j] = i;
                }
            }
        }
    }
    let mut starts = vec![0; k];
    let mut j = n;
    for p in (1..=k).rev() {
        let i = arg[p][j];
        starts[p - 1] = i;
        j = i;
    }
    seg_fit(data, starts)
}

const MERGE_TIE_TOL: f64 = 1e-10;

/// Merges adjacent segments, cheapest SSE increase first, from singletons
/// down to `k` segments. Ties go to the leftmost pair.
pub fn greedy_merge(data: &Dataset, k: usize) -> Result<SegFit> {
    let n = data.len();
    check_pieces(k, n)?;
    let costs = SegmentCosts::new(data);
    let mut bounds: Vec<usize> = (0..=n).collect();
    while bounds.len() - 1 > k {
        let mut pick = 0;
        let mut least = f64::INFINITY;
        for s in 0..bounds.len() - 2 {
            let (a, b, c) = (bounds[s], bounds[s + 1], bounds[s + 2]);
            let inc = costs.sse(a, c) - costs.sse(a, b) - costs.sse(b, c);
            // Near-equal costs count as a tie, resolved to the left.
            if s == 0 || inc < least - MERGE_TIE_TOL * (1.0 + least.abs()) {
                least = inc;
                pick = s;
            }
        }
        bounds.remove(pick + 1);
    }
    bounds.pop();
    seg_fit(data, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Error metrics of `f − g` on the grid `lo, lo + step, …` up to `hi`.
pub fn compare_curves(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<CurveMetrics> {
    if !(lo < hi) {
        return Err(Error::InvalidWindow { lo, hi });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let (mut abs, mut sq) = (0.0, 0.0);
    for i in 0..count {
        let x = lo + i as f64 * step;
        let d = f(x) - g(x);
        abs += d.abs();
        sq += d * d;
    }
    Ok(CurveMetrics {
        mae: abs / count as f64,
        rmse: (sq / count as f64).sqrt(),
    })
}
