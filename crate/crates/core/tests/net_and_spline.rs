mod common;

use common::{fd_gradient, oracle_loss, random_instance, rel_err};
use num_bigint::BigUint;
use proptest::prelude::*;
use splinelens_core::net::{forward, gradient, loss, predict, scale_neurons, train_gd, TrainConfig};
use splinelens_core::spline::{
    bdso_to_nn, bdso_to_pwl, cpwl_to_nn_exact, lonely_partition_count, nn_to_bdso, partition_data,
    roughness,
};
use splinelens_core::{BdsoParams, Dataset, Knot, NetParams, Orientation, PwlParams};

fn arb_net(max_h: usize) -> impl Strategy<Value = NetParams> {
    (1..=max_h).prop_flat_map(|h| {
        (
            -2.0..2.0f64,
            prop::collection::vec(prop_oneof![-3.0..-0.05f64, 0.05..3.0f64, Just(0.0)], h),
            prop::collection::vec(-3.0..3.0f64, h),
            prop::collection::vec(-3.0..3.0f64, h),
        )
            .prop_map(|(b0, w, b, v)| NetParams::new(b0, w, b, v).unwrap())
    })
}

fn arb_bdso(max_h: usize) -> impl Strategy<Value = BdsoParams> {
    (
        -2.0..2.0f64,
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, any::<bool>()), 0..=max_h),
    )
        .prop_map(|(b0, ks)| {
            let neurons = ks
                .into_iter()
                .map(|(beta, mu, right)| {
                    Knot::new(beta, mu, if right { Orientation::Right } else { Orientation::Left })
                })
                .collect();
            BdsoParams::new(b0, neurons).unwrap()
        })
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..50 {
        let (net, data) = random_instance(seed, 1 + (seed as usize % 8), 2 + (seed as usize % 9), 1e-4);
        let theta = net.to_vec();
        let fd = fd_gradient(&theta, data.xs(), data.ys(), 1e-6);
        let g = gradient(&net, &data).to_vec();
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel_err(*a, *b, 1.0) < 1e-6, "seed {seed}: {a} vs {b}");
        }
        assert!((loss(&net, &data) - oracle_loss(&theta, data.xs(), data.ys())).abs() < 1e-12);
    }
}

#[test]
fn gd_is_deterministic() {
    let (net, data) = random_instance(3, 5, 6, 1e-3);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 300,
        stop_grad_norm: 0.0,
        record_every: 10,
    };
    let a = train_gd(&net, &data, &cfg).unwrap();
    let b = train_gd(&net, &data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mirrored_pairs_follow_orientation_rule() {
    let abs = bdso_to_pwl(
        &BdsoParams::new(
            0.0,
            vec![
                Knot::new(0.0, 1.0, Orientation::Right),
                Knot::new(0.0, -1.0, Orientation::Left),
            ],
        )
        .unwrap(),
    );
    assert_eq!(abs.slopes, vec![-1.0, 1.0]);
    for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        assert_eq!(abs.eval(x), f64::abs(x));
    }
}

#[test]
fn lonely_count_matches_enumeration() {
    // Place n labelled-by-order points into h+1 ordered pieces, at most one each.
    fn enumerate(pieces: usize, n: usize) -> u64 {
        (0u32..1 << pieces).filter(|m| m.count_ones() as usize == n).count() as u64
    }
    for pieces in 1..=12 {
        for n in 0..=pieces + 1 {
            assert_eq!(
                lonely_partition_count(pieces as u64 - 1, n as u64),
                BigUint::from(enumerate(pieces, n)),
                "H+1={pieces}, N={n}"
            );
        }
    }
}

#[test]
fn spiky_construction_reproduces_targets() {
    // Twenty knots on (−2, 2], random values, flat beyond the last knot.
    let mut r = common::rng(11);
    use rand::Rng;
    let knots: Vec<f64> = (1..=20).map(|k| -2.0 + 4.0 * k as f64 / 20.0).collect();
    let vals: Vec<f64> = (0..=20).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut slopes = Vec::new();
    let mut intercepts = Vec::new();
    let mut xs = vec![-2.0];
    xs.extend(&knots);
    for p in 0..20 {
        let m = (vals[p + 1] - vals[p]) / (xs[p + 1] - xs[p]);
        slopes.push(m);
        intercepts.push(vals[p] - m * xs[p]);
    }
    slopes.push(0.0);
    intercepts.push(vals[20]);
    let pwl = PwlParams::new(knots[..].to_vec(), slopes, intercepts).unwrap();
    let net = cpwl_to_nn_exact(&pwl, -2.0 - 1e-9).unwrap();
    assert_eq!(net.width(), 21);
    for (x, v) in xs.iter().zip(&vals) {
        assert!((forward(&net, *x) - v).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pwl_form_reproduces_net(net in arb_net(8), x in -6.0..6.0f64) {
        let (bdso, _) = nn_to_bdso(&net);
        let pwl = bdso_to_pwl(&bdso);
        prop_assert!(pwl.validate().is_ok());
        prop_assert!((forward(&net, x) - pwl.eval(x)).abs() < 1e-10);
        prop_assert!((forward(&net, x) - bdso.eval(x)).abs() < 1e-10);
    }

    #[test]
    fn bdso_round_trip(bdso in arb_bdso(8)) {
        let (back, rep) = nn_to_bdso(&bdso_to_nn(&bdso));
        prop_assert_eq!(rep.folded, 0);
        prop_assert_eq!(back.b0, bdso.b0);
        for (a, b) in back.neurons.iter().zip(&bdso.neurons) {
            prop_assert_eq!(a.s, b.s);
            prop_assert!(rel_err(a.beta, b.beta, 1e-300) < 1e-12 || (a.beta - b.beta).abs() < 1e-15);
            prop_assert!(rel_err(a.mu, b.mu, 1e-300) < 1e-12 || (a.mu - b.mu).abs() < 1e-15);
        }
    }

    #[test]
    fn slope_changes_at_each_knot(bdso in arb_bdso(8)) {
        let pwl = bdso_to_pwl(&bdso);
        for (p, &kappa) in pwl.knots.iter().enumerate() {
            let jump: f64 = bdso
                .neurons
                .iter()
                .filter(|k| k.beta == kappa)
                .map(|k| k.s.sign() * k.mu)
                .sum();
            prop_assert!((pwl.slopes[p + 1] - pwl.slopes[p] - jump).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_preserves_function_and_roughness(net in arb_net(6), x in -5.0..5.0f64,
                                                alpha in prop::sample::select(vec![0.1, 1.0, 10.0, 100.0])) {
        let scaled = scale_neurons(&net, alpha).unwrap();
        let (f0, f1) = (forward(&net, x), forward(&scaled, x));
        prop_assert!(rel_err(f0, f1, 1.0) < 1e-9);
        let r0 = roughness(&nn_to_bdso(&net).0);
        let r1 = roughness(&nn_to_bdso(&scaled).0);
        prop_assert!(rel_err(r0, r1, 1e-300) < 1e-12);
    }

    #[test]
    fn predict_is_bitwise_forward(net in arb_net(6), xs in prop::collection::vec(-4.0..4.0f64, 1..20)) {
        let batch = predict(&net, &xs);
        for (x, f) in xs.iter().zip(batch) {
            prop_assert_eq!(forward(&net, *x).to_bits(), f.to_bits());
        }
    }

    #[test]
    fn loss_zero_only_at_interpolation(net in arb_net(4), xs in prop::collection::vec(-3.0..3.0f64, 1..8), bump in -1.0..1.0f64) {
        let ys = predict(&net, &xs);
        let exact = Dataset::new(xs.clone(), ys.clone()).unwrap();
        prop_assert_eq!(loss(&net, &exact), 0.0);
        let mut off = ys;
        off[0] += bump;
        let l = loss(&net, &Dataset::new(xs, off).unwrap());
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, bump == 0.0);
    }

    #[test]
    fn cpwl_exact_right_of_anchor(bdso in arb_bdso(6), x in -3.0..6.0f64) {
        let pwl = bdso_to_pwl(&bdso);
        let anchor = pwl.knots.first().copied().unwrap_or(0.0).min(-3.0) - 0.5;
        let net = cpwl_to_nn_exact(&pwl, anchor).unwrap();
        prop_assert!((forward(&net, x) - pwl.eval(x)).abs() < 1e-9);
    }

    #[test]
    fn partition_covers_data(bdso in arb_bdso(6), xs in prop::collection::vec(-3.0..3.0f64, 1..12)) {
        let data = Dataset::new(xs.clone(), vec![0.0; xs.len()]).unwrap();
        let rep = partition_data(&bdso, &data);
        let mut all: Vec<usize> = rep.pieces.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..xs.len()).collect::<Vec<_>>());
        prop_assert_eq!(rep.all_lonely, rep.lonely.iter().all(|&l| l));
    }
}
