//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splinelens_core::{Dataset, NetParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // Refuse to converge in the first few levels, where a narrow peak
        // can slip between the samples.
        if depth == 0 || (depth < 44 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Simpson quadrature split over `pieces` equal panels, for integrands with
/// interior kinks at known panel edges.
pub fn simpson_panels(f: &dyn Fn(f64) -> f64, edges: &[f64], tol: f64) -> f64 {
    edges
        .windows(2)
        .map(|w| simpson(f, w[0], w[1], tol / edges.len() as f64))
        .sum()
}

/// Loss `½ Σ (b0 + Σ v relu(w x + b) − y)²` from a flat `[w | v | b | b0]` vector.
pub fn oracle_loss(theta: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let h = (theta.len() - 1) / 3;
    let (w, rest) = theta.split_at(h);
    let (v, rest) = rest.split_at(h);
    let (b, b0) = rest.split_at(h);
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut f = b0[0];
        for i in 0..h {
            f += v[i] * (w[i] * x + b[i]).max(0.0);
        }
        total += 0.5 * (f - y).powi(2);
    }
    total
}

pub fn fd_gradient(theta: &[f64], xs: &[f64], ys: &[f64], step: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += step;
            dn[j] -= step;
            (oracle_loss(&up, xs, ys) - oracle_loss(&dn, xs, ys)) / (2.0 * step)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Random net and data with every breakpoint at least `gap` from every
/// datapoint and every `|w| ≥ 0.1`.
pub fn random_instance(seed: u64, h: usize, n: usize, gap: f64) -> (NetParams, Dataset) {
    let mut r = rng(seed);
    loop {
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut w = Vec::new();
        for _ in 0..h {
            let mag: f64 = r.random_range(0.1..1.5);
            w.push(if r.random_bool(0.5) { mag } else { -mag });
        }
        let b: Vec<f64> = (0..h).map(|_| r.random_range(-1.5..1.5)).collect();
        let v: Vec<f64> = (0..h).map(|_| r.random_range(-1.5..1.5)).collect();
        let b0 = r.random_range(-0.5..0.5);
        let far = (0..h).all(|i| xs.iter().all(|&x| (x + b[i] / w[i]).abs() > gap));
        let distinct = {
            let mut s = xs.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|p| p[1] - p[0] > 1e-3)
        };
        if far && distinct {
            return (
                NetParams::new(b0, w, b, v).unwrap(),
                Dataset::new(xs, ys).unwrap(),
            );
        }
    }
}

/// Segment SSE by solving the 2×2 normal equations directly.
pub fn oracle_segment_sse(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let (m, c) = if det.abs() <= 1e-12 * (n * sxx).max(1.0) {
        (0.0, sy / n)
    } else {
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    };
    xs.iter().zip(ys).map(|(x, y)| (y - m * x - c).powi(2)).sum()
}

/// Best `k`-segment SSE by trying every set of `k − 1` cut positions.
pub fn exhaustive_segreg(xs: &[f64], ys: &[f64], k: usize) -> f64 {
    fn go(xs: &[f64], ys: &[f64], start: usize, left: usize, acc: f64, best: &mut f64) {
        let n = xs.len();
        if left == 1 {
            let total = acc + oracle_segment_sse(&xs[start..], &ys[start..]);
            *best = best.min(total);
            return;
        }
        for cut in start + 1..=n - (left - 1) {
            let c = oracle_segment_sse(&xs[start..cut], &ys[start..cut]);
            go(xs, ys, cut, left - 1, acc + c, best);
        }
    }
    let mut best = f64::INFINITY;
    go(xs, ys, 0, k, 0.0, &mut best);
    best
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = 0.5 * (i + j) as f64 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
