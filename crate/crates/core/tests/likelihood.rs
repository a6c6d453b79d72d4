mod common;

use common::{random_events, random_params, random_state, rel_err, rng};
use msdhawkes::likelihood::{brute_force_log_likelihood, grad_log_likelihood, log_likelihood, Sample};
use msdhawkes::model::{CoordinateParams, StateTrajectory};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn recursion_matches_brute_force() {
    let mut r = rng(11);
    for _ in 0..50 {
        let d_n = r.random_range(1..=3);
        let horizon = r.random_range(5.0..60.0);
        let k = r.random_range(1..=200);
        let p = random_params(&mut r, 2, d_n, 2);
        let ev = random_events(&mut r, horizon, k, 2);
        let jumps = r.random_range(0..40);
        let st = random_state(&mut r, horizon, jumps, 2);
        let fast = log_likelihood(&p, &ev, &st).unwrap();
        let slow = brute_force_log_likelihood(&p, &ev, &st, None).unwrap();
        for (a, b) in fast.per_coordinate.iter().zip(&slow.per_coordinate) {
            assert!(rel_err(*a, *b) < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(12);
    for _ in 0..20 {
        let d_n = r.random_range(1..=3);
        let horizon = r.random_range(5.0..40.0);
        let p = random_params(&mut r, 2, d_n, 2);
        let k = r.random_range(20..=300);
        let ev = random_events(&mut r, horizon, k, 2);
        let jumps = r.random_range(0..30);
        let st = random_state(&mut r, horizon, jumps, 2);
        let sample = Sample::new(ev, st, 2).unwrap();
        for e in 0..2 {
            let cp = p.coordinate(e);
            let (_, g) = sample.coordinate_value_and_gradient(e, &cp);
            let x = cp.to_flat();
            for (m, gm) in g.iter().enumerate() {
                let h = 1e-6 * x[m].abs().max(1e-2);
                let eval = |v: f64| {
                    let mut y = x.clone();
                    y[m] = v;
                    let c = CoordinateParams::from_flat(&y, 2, d_n, 2);
                    sample.coordinate_log_likelihood(e, &c)
                };
                let fd = (eval(x[m] + h) - eval(x[m] - h)) / (2.0 * h);
                let err = (fd - gm).abs();
                assert!(err <= 1e-5 * fd.abs().max(gm.abs()) || err <= 1e-8 * 100.0, "comp {m}: {gm} vs {fd}");
            }
        }
    }
}

#[test]
fn poisson_gradient_exact() {
    let mut r = rng(13);
    let ev = random_events(&mut r, 20.0, 40, 2);
    let st = StateTrajectory::trivial(20.0).unwrap();
    let p = msdhawkes::model::HawkesParams::poisson(vec![0.8, 1.7], 0);
    let g = grad_log_likelihood(&p, &ev, &st).unwrap();
    let n = ev.counts(2);
    for e in 0..2 {
        assert!((g.nu[e] - (-20.0 + n[e] as f64 / p.nu[e])).abs() < 1e-12);
    }
}

#[test]
fn theta_zero_is_standard_hawkes() {
    let mut r = rng(14);
    let mut p = random_params(&mut r, 2, 2, 2);
    let ev = random_events(&mut r, 30.0, 120, 2);
    let st = random_state(&mut r, 30.0, 20, 2);
    p.theta = vec![vec![0.0; 2]; 2];
    let with_state = log_likelihood(&p, &ev, &st).unwrap().total;
    let mut p0 = p.clone();
    p0.theta = vec![vec![]; 2];
    let plain = log_likelihood(&p0, &ev, &StateTrajectory::trivial(30.0).unwrap()).unwrap().total;
    assert!(rel_err(with_state, plain) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coordinates_are_separable(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 2, 2);
        let ev = random_events(&mut r, 20.0, 80, 2);
        let st = random_state(&mut r, 20.0, 10, 2);
        let base = log_likelihood(&p, &ev, &st).unwrap();
        let mut q = p.clone();
        q.nu[1] *= 1.7;
        q.alpha[1][0][0] += 0.3;
        q.theta[1][1] = -q.theta[1][1];
        let moved = log_likelihood(&q, &ev, &st).unwrap();
        prop_assert_eq!(base.per_coordinate[0].to_bits(), moved.per_coordinate[0].to_bits());
        prop_assert!((base.total - base.per_coordinate.iter().sum::<f64>()).abs() == 0.0);
    }

    #[test]
    fn refinement_leaves_likelihood_unchanged(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 2, 2);
        let ev = random_events(&mut r, 20.0, 80, 2);
        let st = random_state(&mut r, 20.0, 10, 2);
        let extra: Vec<f64> = (0..15).map(|_| r.random_range(0.0..20.0)).collect();
        let fine = st.refine(&extra).unwrap();
        let a = log_likelihood(&p, &ev, &st).unwrap().total;
        let b = log_likelihood(&p, &ev, &fine).unwrap().total;
        prop_assert!(rel_err(a, b) < 1e-11, "{} vs {}", a, b);
    }
}
