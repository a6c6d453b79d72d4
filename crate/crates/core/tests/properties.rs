mod common;

use common::{random_events, random_params, random_state, rel_err, rng};
use msdhawkes::analysis::{endogeneity, predict_next_type};
use msdhawkes::data::{
    build_covariates, dedup_events, dedup_same_timestamp, read_events_csv, read_state_csv, spread_distribution, window_session,
    write_events_csv, write_state_csv, Covariate, CovariateOptions, LobSnapshotRow, S3Mode,
};
use msdhawkes::diagnostics::{compensator_at_events, ks_test_exp1, residuals};
use msdhawkes::estimate::{compute_branching, fit_mle, MleOptions};
use msdhawkes::intensity::{kernel_value, msd_intensity_left};
use msdhawkes::model::{Event, EventStream, HawkesParams, ModelShape, StateTrajectory};
use msdhawkes::simulate::simulate_msd;
use msdhawkes::timeline::MergedTimeline;
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let horizon = r.random_range(1.0..100.0);
        let ev = random_events(&mut r, horizon, 50, 3);
        let st = random_state(&mut r, horizon, 10, 2);
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        prop_assert_eq!(read_events_csv(buf.as_slice(), horizon).unwrap(), ev);
        let mut buf = Vec::new();
        write_state_csv(&st, &mut buf).unwrap();
        prop_assert_eq!(read_state_csv(buf.as_slice()).unwrap(), st);
    }

    #[test]
    fn timeline_rebuild_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ev = random_events(&mut r, 20.0, 40, 2);
        let st = random_state(&mut r, 20.0, 8, 1);
        let tl = MergedTimeline::build(&ev, &st).unwrap();
        let bps = tl.breakpoints();
        let refined = st.refine(&bps).unwrap();
        let again = MergedTimeline::build(&ev, &refined).unwrap();
        prop_assert_eq!(again.breakpoints(), bps);
    }

    #[test]
    fn swapped_decay_rates_are_rejected(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut p = random_params(&mut r, 2, 2, 0);
        let (e, e2) = (r.random_range(0..2), r.random_range(0..2));
        p.beta[e][e2].swap(0, 1);
        let msg = p.validate().unwrap_err().to_string();
        prop_assert!(msg.contains(&format!("[{e}][{e2}]")), "{}", msg);
    }

    #[test]
    fn intensity_positive_and_factorized(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 2, 2);
        let ev = random_events(&mut r, 10.0, 30, 2);
        let st = random_state(&mut r, 10.0, 5, 2);
        let t = r.random_range(0.0..=10.0);
        let v = msd_intensity_left(&p, &ev, &st, t).unwrap();
        for (e, total) in v.total().iter().enumerate() {
            prop_assert!(*total > 0.0);
            let x = st.value_before(t);
            let factor = p.theta[e].iter().zip(x).map(|(a, b)| a * b).sum::<f64>().exp();
            prop_assert!(rel_err(*total, v.hawkes_part[e] * factor) < 1e-15);
        }
    }

    #[test]
    fn kernel_strictly_decreasing(seed in any::<u64>(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 1, 3, 0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let k_lo = kernel_value(&p, 0, 0, lo).unwrap();
        let k_hi = kernel_value(&p, 0, 0, hi).unwrap();
        prop_assume!(k_hi > 1e-200);
        prop_assert!(k_hi < k_lo);
    }

    #[test]
    fn canonical_form_ignores_term_labels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 3, 1);
        let mut q = p.clone();
        for row in q.alpha.iter_mut().chain(q.beta.iter_mut()) {
            for k in row.iter_mut() {
                k.rotate_left(1);
            }
        }
        q.canonicalize();
        let mut p2 = p.clone();
        p2.canonicalize();
        prop_assert_eq!(q, p2);
    }

    #[test]
    fn branching_rows_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 2, 1);
        let ev = random_events(&mut r, 15.0, 40, 2);
        let st = random_state(&mut r, 15.0, 5, 1);
        let b = compute_branching(&p, &ev, &st).unwrap();
        for i in 0..ev.len() {
            prop_assert!((b.row_sum(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_telescope_to_compensator(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 2, 2, 2);
        let ev = random_events(&mut r, 30.0, 80, 2);
        let st = random_state(&mut r, 30.0, 10, 2);
        let comp = compensator_at_events(&p, &ev, &st).unwrap();
        let res = residuals(&p, &ev, &st).unwrap();
        for (c, rs) in comp.iter().zip(&res.residuals) {
            if c.len() < 2 {
                continue;
            }
            let total: f64 = rs.iter().sum();
            prop_assert!(rel_err(total, c[c.len() - 1] - c[0]) < 1e-10);
        }
        // redundant breakpoints change nothing
        let extra: Vec<f64> = (0..10).map(|_| r.random_range(0.0..30.0)).collect();
        let refined = residuals(&p, &ev, &st.refine(&extra).unwrap()).unwrap();
        for (a, b) in res.residuals.iter().flatten().zip(refined.residuals.iter().flatten()) {
            prop_assert!(rel_err(*a, *b) < 1e-10);
        }
    }

    #[test]
    fn ks_statistic_and_p_value_in_range(xs in prop::collection::vec(0.0f64..10.0, 1..200)) {
        let t = ks_test_exp1(&xs).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.statistic));
        prop_assert!((0.0..=1.0).contains(&t.p_value));
        let shifted: Vec<f64> = xs.iter().map(|x| x + 5.0).collect();
        let s = ks_test_exp1(&shifted).unwrap();
        if s.statistic > t.statistic {
            prop_assert!(s.p_value <= t.p_value);
        }
    }

    #[test]
    fn endogeneity_respects_side_swap(seed in any::<u64>(), x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
        let mut r = rng(seed);
        let base = random_params(&mut r, 2, 1, 2);
        // symmetric under swapping types with the imbalance (column 0) negated
        let mut p = base.clone();
        p.nu[1] = p.nu[0];
        p.alpha[1][1] = p.alpha[0][0].clone();
        p.alpha[1][0] = p.alpha[0][1].clone();
        p.beta[1][1] = p.beta[0][0].clone();
        p.beta[1][0] = p.beta[0][1].clone();
        p.theta[1] = vec![-p.theta[0][0], p.theta[0][1]];
        let a = endogeneity(&p, &[x0, x1]).unwrap().radius;
        let b = endogeneity(&p, &[-x0, x1]).unwrap().radius;
        prop_assert!(rel_err(a, b) < 1e-12);
    }

    #[test]
    fn predictions_scale_free_and_last_model_free(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let p = random_params(&mut r, 3, 2, 1);
        let ev = random_events(&mut r, 20.0, 60, 3);
        let st = random_state(&mut r, 20.0, 6, 1);
        let mut q = p.clone();
        q.nu.iter_mut().for_each(|v| *v *= c);
        q.alpha.iter_mut().flatten().flatten().for_each(|v| *v *= c);
        let a = predict_next_type(&p, &ev, &st, None).unwrap();
        let b = predict_next_type(&q, &ev, &st, None).unwrap();
        prop_assert_eq!(&a.model, &b.model);
        let other = random_params(&mut r, 3, 1, 1);
        let o = predict_next_type(&other, &ev, &st, None).unwrap();
        prop_assert_eq!(a.last, o.last);
        prop_assert_eq!(a.accuracy_last, o.accuracy_last);
    }

    #[test]
    fn dedup_is_idempotent(times in prop::collection::vec(1u32..50, 0..60)) {
        let mut times = times;
        times.sort();
        let events = times.iter().enumerate().map(|(i, t)| Event { time: *t as f64 / 10.0, kind: i % 2 }).collect();
        let ev = EventStream::new(5.0, events).unwrap();
        let once = dedup_events(&ev);
        prop_assert!(once.is_strict());
        prop_assert_eq!(dedup_events(&once), once);
    }

    #[test]
    fn covariates_are_valid_state_paths(rows in lob_rows(), spec_bits in 1u8..16) {
        let spec: Vec<Covariate> = [Covariate::I, Covariate::S1, Covariate::S2, Covariate::S3]
            .into_iter()
            .enumerate()
            .filter(|(i, _)| spec_bits & (1 << i) != 0)
            .map(|(_, c)| c)
            .collect();
        let session = window_session(&rows, 1_000, 60_000).unwrap();
        prop_assume!(session.opening_book().is_some());
        let dist = spread_distribution(std::slice::from_ref(&session), 0.01).unwrap();
        for s3_mode in [S3Mode::Prose, S3Mode::Literal] {
            let opts = CovariateOptions { tick_size: 0.01, s3_mode };
            let (st, _) = build_covariates(&session, &spec, Some(&dist), &opts).unwrap();
            prop_assert_eq!(st.n_covariates(), spec.len());
            prop_assert_eq!(st.horizon(), session.horizon());
            prop_assert!(st.breakpoints().windows(2).all(|w| w[1] > w[0]));
            for j in 0..st.n_segments() {
                prop_assert!(st.value(j).iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn window_and_dedup_commute(rows in lob_rows()) {
        let (start, end) = (1_000, 60_000);
        let a = window_session(&dedup_same_timestamp(&rows), start, end).unwrap();
        let b = window_session(&rows, start, end).unwrap();
        prop_assert_eq!(a.rows, dedup_same_timestamp(&b.rows));
    }
}

fn lob_rows() -> impl Strategy<Value = Vec<LobSnapshotRow>> {
    prop::collection::vec((0i64..70_000, 1usize..=2, 1u64..4, 1u64..500, 1u64..500), 1..80).prop_map(|mut raw| {
        raw.sort_by_key(|r| r.0);
        raw.into_iter()
            .map(|(ms, ty, spread, b, a)| LobSnapshotRow {
                timestamp_ms: ms,
                event_type: ty,
                bid_price: 100.0,
                ask_price: 100.0 + spread as f64 * 0.01,
                bid_size: b,
                ask_size: a,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn simulation_is_strict_in_range_and_seeded(seed in any::<u64>()) {
        let p = msdhawkes::experiments::single_exp_truth();
        let st = msdhawkes::simulate::simulate_state(1.0, 2, 50.0, seed).unwrap();
        let a = simulate_msd(&p, &st, 50.0, seed).unwrap();
        prop_assert!(a.is_strict());
        prop_assert!(a.events().iter().all(|e| e.time > 0.0 && e.time <= 50.0));
        prop_assert_eq!(simulate_msd(&p, &st, 50.0, seed).unwrap(), a);
    }

    #[test]
    fn mle_respects_decay_order_and_coordinates_fit_alone(seed in any::<u64>()) {
        let truth = msdhawkes::experiments::single_exp_truth();
        let st = msdhawkes::simulate::simulate_state(1.0, 2, 100.0, seed).unwrap();
        let ev = simulate_msd(&truth, &st, 100.0, seed).unwrap();
        let shape = ModelShape::new(2, 2, 2).unwrap();
        let mut r = rng(seed);
        let start = random_params(&mut r, 2, 2, 2);
        let mut other = start.clone();
        other.set_coordinate(1, random_params(&mut r, 2, 2, 2).coordinate(1));
        let opts = |init: HawkesParams| MleOptions { n_starts: 0, initial: vec![init], parallel: false, ..MleOptions::default() };
        let a = fit_mle(&ev, &st, shape, &opts(start)).unwrap();
        let b = fit_mle(&ev, &st, shape, &opts(other)).unwrap();
        for row in a.params.beta.iter().flatten() {
            prop_assert!(row.windows(2).all(|w| w[0] > w[1]));
        }
        prop_assert_eq!(a.params.coordinate(0), b.params.coordinate(0));
    }
}

#[test]
fn simulated_residuals_are_exponential() {
    let p = msdhawkes::experiments::single_exp_truth();
    let st = msdhawkes::simulate::simulate_state(1.0, 2, 2000.0, 42).unwrap();
    let ev = simulate_msd(&p, &st, 2000.0, 43).unwrap();
    let res = residuals(&p, &ev, &st).unwrap();
    assert!(res.all_passed(), "{:?}", res.ks);
}

#[test]
fn redundant_breakpoints_leave_state_unchanged_in_fit_inputs() {
    let st = StateTrajectory::new(vec![0.0, 1.0, 3.0], vec![vec![0.5], vec![-0.5]], 1).unwrap();
    let refined = st.refine(&[0.5, 2.0]).unwrap();
    for t in [0.25, 0.75, 1.0, 1.5, 2.5, 3.0] {
        assert_eq!(st.value_before(t), refined.value_before(t));
    }
}
