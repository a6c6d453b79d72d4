#![allow(dead_code)]

use msdhawkes::model::{Event, EventStream, HawkesParams, StateTrajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(rng: &mut ChaCha8Rng, d_e: usize, d_n: usize, d_x: usize) -> HawkesParams {
    let nu = (0..d_e).map(|_| rng.random_range(0.2..2.0)).collect();
    let alpha = (0..d_e)
        .map(|_| (0..d_e).map(|_| (0..d_n).map(|_| rng.random_range(0.0..2.0)).collect()).collect())
        .collect();
    let beta = (0..d_e)
        .map(|_| {
            (0..d_e)
                .map(|_| {
                    let mut b: Vec<f64> = (0..d_n).map(|_| rng.random_range(0.3..30.0)).collect();
                    b.sort_by(|x, y| y.total_cmp(x));
                    b
                })
                .collect()
        })
        .collect();
    let theta = (0..d_e)
        .map(|_| (0..d_x).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    HawkesParams::new(nu, alpha, beta, theta).unwrap()
}

pub fn random_events(rng: &mut ChaCha8Rng, horizon: f64, k: usize, d_e: usize) -> EventStream {
    let mut times: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let events = times
        .into_iter()
        .filter(|&t| t > 0.0)
        .map(|time| Event {
            time,
            kind: rng.random_range(0..d_e),
        })
        .collect();
    EventStream::new(horizon, events).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, horizon: f64, n_jumps: usize, d_x: usize) -> StateTrajectory {
    let mut bps: Vec<f64> = (0..n_jumps).map(|_| rng.random_range(0.0..horizon)).collect();
    bps.push(0.0);
    bps.push(horizon);
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let values = (0..bps.len() - 1)
        .map(|_| (0..d_x).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    StateTrajectory::new(bps, values, d_x).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
