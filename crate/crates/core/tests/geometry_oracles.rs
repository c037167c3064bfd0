mod common;

use common::{random_instance, rel_err};
use nalgebra::DMatrix;
use rand::Rng;
use splinelens_core::geometry::{
    classify_knot, eig_spectrum, full_hessian, gram_hessian, hessian_report, is_critical_ols,
    loss_slice, zero_count, KnotKind,
};
use splinelens_core::init::{sample_net, GaussianInitSpec, InitSpec};
use splinelens_core::net::{activation_patterns, gradient, train_gd, TrainConfig};
use splinelens_core::spline::nn_to_bdso;
use splinelens_core::{BdsoParams, Dataset, Knot, NetParams, Orientation};

fn fd_hessian(net: &NetParams, data: &Dataset, step: f64) -> DMatrix<f64> {
    let theta = net.to_vec();
    let p = theta.len();
    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[j] += step;
        dn[j] -= step;
        let gu = gradient(&NetParams::from_vec(&up).unwrap(), data).to_vec();
        let gd = gradient(&NetParams::from_vec(&dn).unwrap(), data).to_vec();
        for i in 0..p {
            out[(i, j)] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    out
}

/// Real roots of the characteristic cubic of a symmetric 3×3 matrix.
fn cubic_eigs(a: &DMatrix<f64>) -> [f64; 3] {
    let q = a.trace() / 3.0;
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (a - DMatrix::identity(3, 3) * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let mut e = [e3, 3.0 * q - e1 - e3, e1];
    e.sort_by(f64::total_cmp);
    e
}

fn converge(net: &NetParams, data: &Dataset) -> NetParams {
    let cfg = TrainConfig {
        learning_rate: 0.02,
        epochs: 2_000_000,
        stop_grad_norm: 1e-10,
        record_every: 1_000_000,
    };
    let (out, traj) = train_gd(net, data, &cfg).unwrap();
    assert!(traj.meta.final_grad_norm < 1e-9, "did not converge: {}", traj.meta.final_grad_norm);
    out
}

#[test]
fn full_hessian_matches_differences() {
    for seed in 0..50 {
        let (net, data) = random_instance(1000 + seed, 1 + seed as usize % 8, 2 + seed as usize % 9, 1e-3);
        let exact = full_hessian(&net, &data).unwrap();
        let fd = fd_hessian(&net, &data, 1e-5);
        for (a, b) in exact.iter().zip(fd.iter()) {
            assert!(rel_err(*a, *b, 1.0) < 1e-4, "seed {seed}: {a} vs {b}");
        }
        assert_eq!(exact, exact.transpose());
    }
}

#[test]
fn gram_is_psd_and_rank_deficient() {
    for seed in 0..30 {
        let (net, data) = random_instance(2000 + seed, 2 + seed as usize % 6, 3 + seed as usize % 8, 1e-3);
        let g = gram_hessian(&net, &data).unwrap();
        let eig = eig_spectrum(&g).unwrap();
        let top = eig.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        assert!(eig[0] >= -1e-10 * top);
        let patterns = activation_patterns(&net, &data);
        let dependent = (0..net.width())
            .filter(|&i| net.v[i] != 0.0 && patterns[i].iter().any(|&a| a))
            .count();
        let rank = eig.len() - zero_count(&eig, 1e-10);
        assert!(rank <= eig.len() - dependent, "seed {seed}: rank {rank}");
    }
}

#[test]
fn duplicated_neurons_lose_rank() {
    let net = NetParams::new(0.1, vec![0.8, 0.8, -1.1], vec![0.3, 0.3, 0.2], vec![1.2, 1.2, -0.4]).unwrap();
    let data = Dataset::new(vec![-1.7, -0.9, -0.1, 0.6, 1.4, 1.9], vec![0.0, 1.0, 0.5, -0.2, 0.3, 1.1]).unwrap();
    let eig = eig_spectrum(&gram_hessian(&net, &data).unwrap()).unwrap();
    assert!(zero_count(&eig, 1e-10) > 0);
    assert!(eig.len() - zero_count(&eig, 1e-10) < 3 * 3 + 1);
}

#[test]
fn spectrum_matches_cubic_roots() {
    let mut r = common::rng(8);
    for _ in 0..100 {
        let v: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
        let a = DMatrix::from_row_slice(3, 3, &[v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]]);
        let got = eig_spectrum(&a).unwrap();
        for (g, w) in got.iter().zip(cubic_eigs(&a)) {
            assert!((g - w).abs() < 1e-9);
        }
    }
}

#[test]
fn converged_nets_are_per_piece_ols() {
    let mut checked = 0;
    for seed in 0..6u64 {
        let h = 6;
        let spec: InitSpec = GaussianInitSpec::he(h, 1.0).unwrap().into();
        let net = sample_net(&spec, h, seed).unwrap();
        let mut r = common::rng(500 + seed);
        let mut xs: Vec<f64> = (0..5).map(|k| -2.0 + k as f64 + r.random_range(-0.2..0.2)).collect();
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = xs.iter().map(|x| (1.3 * x).sin()).collect();
        let data = Dataset::new(xs, ys).unwrap();
        assert!(!is_critical_ols(&net, &data, 1e-5).passes);
        let fit = converge(&net, &data);
        let rep = is_critical_ols(&fit, &data, 1e-5);
        if !rep.assumptions_hold || fit.v.iter().any(|&v| v.abs() < 1e-6) {
            continue;
        }
        assert!(rep.passes, "seed {seed}: {rep:?}");
        // Breakpoints often settle onto datapoints, where the Hessian is undefined.
        let (Ok(full), Ok(gram)) = (full_hessian(&fit, &data), gram_hessian(&fit, &data)) else {
            continue;
        };
        assert!((full - gram).amax() < 1e-6);
        checked += 1;
    }
    assert!(checked >= 2, "only {checked} runs met the assumptions");
}

#[test]
fn lonely_minimum_is_flat() {
    // Wide net, few points: training reaches a zero-loss lonely minimum.
    let h = 24;
    let spec: InitSpec = GaussianInitSpec::he(h, 1.0).unwrap().into();
    let net = sample_net(&spec, h, 4).unwrap();
    let xs: Vec<f64> = (0..4).map(|k| -1.5 + k as f64).collect();
    let ys = vec![0.3, -0.4, 0.8, 0.1];
    let data = Dataset::new(xs, ys).unwrap();
    let fit = converge(&net, &data);
    let rep = hessian_report(&fit, &data, 1e-8).unwrap();
    assert!(rep.zero_fraction >= rep.theoretical_bound, "{} < {}", rep.zero_fraction, rep.theoretical_bound);
}

/// Which side of `x_n` each piece's minimizer lies on, read off a dense
/// sweep: returns (left minimizer < x_n, right minimizer > x_n).
fn sweep_sides(bdso: &BdsoParams, i: usize, n: usize, data: &Dataset) -> (bool, bool) {
    let xs = data.xs();
    let pts = 2000;
    let argmin = |a: f64, b: f64| {
        (0..=pts)
            .map(|k| a + (b - a) * k as f64 / pts as f64)
            .map(|t| (t, loss_slice(bdso, i, data, t)))
            .fold((0usize, f64::INFINITY, 0usize), |(best, val, k), (_, l)| {
                if l < val {
                    (k, l, k + 1)
                } else {
                    (best, val, k + 1)
                }
            })
            .0
    };
    let left = argmin(xs[n - 1], xs[n]);
    let right = argmin(xs[n], xs[n + 1]);
    (left < pts, right > 0)
}

#[test]
fn classification_agrees_with_dense_sweep() {
    let mut tested = 0;
    let mut kinds = std::collections::HashSet::new();
    let mut seed = 0u64;
    while tested < 50 {
        seed += 1;
        let (net, data) = random_instance(3000 + seed, 3, 6, 1e-3);
        let (bdso, _) = nn_to_bdso(&net);
        let i = seed as usize % bdso.width();
        let n = 1 + seed as usize % 4;
        let c = classify_knot(&bdso, i, n, &data).unwrap();
        let xs = data.xs();
        let resolution = 4.0 * (xs[n + 1] - xs[n - 1]) / 2000.0;
        if (c.m1 - xs[n]).abs() < resolution || (c.m2 - xs[n]).abs() < resolution {
            continue;
        }
        for probe in [0.1, 0.9] {
            let t = xs[n - 1] + probe * (xs[n] - xs[n - 1]);
            assert!((c.left.eval(t) - loss_slice(&bdso, i, &data, t)).abs() < 1e-10);
            let t = xs[n] + probe * (xs[n + 1] - xs[n]);
            assert!((c.right.eval(t) - loss_slice(&bdso, i, &data, t)).abs() < 1e-10);
        }
        let (m1_left, m2_right) = sweep_sides(&bdso, i, n, &data);
        let want = match (m1_left, m2_right) {
            (true, true) => KnotKind::TypeIIRepulsor,
            (false, false) => KnotKind::TypeIIIAttractor,
            _ => KnotKind::TypeIPassover,
        };
        assert_eq!(c.kind, want, "seed {seed}: {c:?}");
        kinds.insert(format!("{:?}", c.kind));
        tested += 1;
    }
    assert!(kinds.len() >= 2, "battery only produced {kinds:?}");
}

#[test]
fn constructed_attractor_and_repulsor() {
    // A lone right-facing unit hinge; on (x_{n−1}, x_n) the best breakpoint is
    // mean(active x) − mean(active residual)/μ, so the targets pick the type.
    let xs = vec![-1.0, 0.0, 1.0];
    let bdso = BdsoParams::new(0.0, vec![Knot::new(0.3, 1.0, Orientation::Right)]).unwrap();
    for (ys, want) in [
        (vec![0.0, -2.0, 2.0], KnotKind::TypeIIIAttractor),
        (vec![0.0, 1.0, 0.5], KnotKind::TypeIIRepulsor),
    ] {
        let data = Dataset::new(xs.clone(), ys).unwrap();
        let c = classify_knot(&bdso, 0, 1, &data).unwrap();
        assert_eq!(c.kind, want);
        let (m1_left, m2_right) = sweep_sides(&bdso, 0, 1, &data);
        assert_eq!(want == KnotKind::TypeIIRepulsor, m1_left && m2_right);
        assert_eq!(want == KnotKind::TypeIIIAttractor, !m1_left && !m2_right);
    }
}
