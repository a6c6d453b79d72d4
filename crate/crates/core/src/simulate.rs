//! Simulation by thinning.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). A simulation seeded
//! with `(seed, stream)` uses `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(stream)`, so replicate `r` of an experiment is
//! `rng_for(seed, r)`: streams never overlap and each replicate is
//! reproducible on its own regardless of how replicates are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::IncrementalIntensity;
use crate::model::{dot, Event, EventStream, HawkesParams, StateTrajectory};

/// Default cap on the number of simulated events.
pub const DEFAULT_MAX_EVENTS: usize = 5_000_000;

/// The generator for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidOption(format!("horizon must be positive and finite, got {horizon}")));
    }
    Ok(())
}

/// A state path whose jump times form a Poisson process of intensity
/// `rate` and whose values are i.i.d. uniform on `[-1, 1]^d_x`.
pub fn simulate_state(rate: f64, n_covariates: usize, horizon: f64, seed: u64) -> Result<StateTrajectory> {
    simulate_state_with(rate, n_covariates, horizon, &mut rng_for(seed, 0))
}

pub fn simulate_state_with<R: Rng>(rate: f64, n_covariates: usize, horizon: f64, rng: &mut R) -> Result<StateTrajectory> {
    check_horizon(horizon)?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidOption(format!("state jump rate must be positive, got {rate}")));
    }
    if n_covariates == 0 {
        return StateTrajectory::trivial(horizon);
    }
    let mut breakpoints = vec![0.0];
    let mut t = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / rate;
        if t >= horizon {
            break;
        }
        if t > *breakpoints.last().unwrap() {
            breakpoints.push(t);
        }
    }
    breakpoints.push(horizon);
    let values = (0..breakpoints.len() - 1)
        .map(|_| (0..n_covariates).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    StateTrajectory::new(breakpoints, values, n_covariates)
}

fn check_inputs(n_types: usize, theta: &[Vec<f64>], state: &StateTrajectory, horizon: f64) -> Result<()> {
    check_horizon(horizon)?;
    if state.horizon() != horizon {
        return Err(Error::HorizonMismatch {
            events: horizon,
            state: state.horizon(),
        });
    }
    if theta.len() != n_types || theta.iter().any(|t| t.len() != state.n_covariates()) {
        return Err(Error::DimensionMismatch(format!(
            "theta must be {n_types} x {}",
            state.n_covariates()
        )));
    }
    Ok(())
}

/// Draw the type of an accepted candidate proportionally to `lam`.
fn pick_type<R: Rng>(lam: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (e, l) in lam.iter().enumerate() {
        acc += l;
        if u < acc {
            return e;
        }
    }
    lam.iter().rposition(|l| *l > 0.0).unwrap_or(0)
}

/// Simulate an msdHawkes path on `[0, horizon]` along a given state path.
pub fn simulate_msd(params: &HawkesParams, state: &StateTrajectory, horizon: f64, seed: u64) -> Result<EventStream> {
    simulate_msd_with(params, state, horizon, &mut rng_for(seed, 0), DEFAULT_MAX_EVENTS)
}

/// Ogata thinning. Between an accepted event and the next state breakpoint
/// every `lambda^e` is nonincreasing, so the total intensity at the current
/// time bounds it until then; the bound is renewed at both kinds of times.
pub fn simulate_msd_with<R: Rng>(
    params: &HawkesParams,
    state: &StateTrajectory,
    horizon: f64,
    rng: &mut R,
    max_events: usize,
) -> Result<EventStream> {
    params.validate()?;
    let d = params.nu.len();
    check_inputs(d, &params.theta, state, horizon)?;
    let bps = state.breakpoints();
    let mut inc = IncrementalIntensity::new(params);
    let mut events = Vec::new();
    let mut seg = 0;
    let mut factors: Vec<f64> = params.theta.iter().map(|th| dot(th, state.value(0)).exp()).collect();
    let mut t = 0.0;
    let mut lam = vec![0.0; d];
    loop {
        let bound: f64 = inc.hawkes().iter().zip(&factors).map(|(h, f)| h * f).sum();
        let gap: f64 = rng.sample(Exp1);
        let cand = t + gap / bound;
        let next_bp = bps[seg + 1];
        if cand >= next_bp {
            if seg + 2 == bps.len() {
                break;
            }
            t = next_bp;
            inc.advance_to(t);
            seg += 1;
            for (f, th) in factors.iter_mut().zip(&params.theta) {
                *f = dot(th, state.value(seg)).exp();
            }
            continue;
        }
        if cand <= t {
            continue;
        }
        inc.advance_to(cand);
        t = cand;
        for ((l, h), f) in lam.iter_mut().zip(inc.hawkes()).zip(&factors) {
            *l = h * f;
        }
        let total: f64 = lam.iter().sum();
        if rng.random::<f64>() * bound <= total {
            let kind = pick_type(&lam, total, rng);
            events.push(Event { time: t, kind });
            if events.len() > max_events {
                return Err(Error::EventCapExceeded { cap: max_events, time: t });
            }
            inc.absorb(kind);
        }
    }
    EventStream::new(horizon, events)
}

/// Power-law kernels `phi_{e,e2}(t) = alpha (1 + t/tau)^-(1 + beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawKernelParams {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
}

impl PowerLawKernelParams {
    pub fn validate(&self, n_types: usize) -> Result<()> {
        let square = |m: &Vec<Vec<f64>>| m.len() == n_types && m.iter().all(|r| r.len() == n_types);
        if !square(&self.alpha) || !square(&self.beta) || !square(&self.tau) {
            return Err(Error::InvalidShape(format!("power-law kernel arrays must be {n_types} x {n_types}")));
        }
        for e in 0..n_types {
            for e2 in 0..n_types {
                let idx = format!("[{e}][{e2}]");
                if !(self.alpha[e][e2] >= 0.0 && self.alpha[e][e2].is_finite()) {
                    return Err(Error::InvalidParams {
                        name: "alpha",
                        index: idx,
                        reason: "must be nonnegative".into(),
                    });
                }
                if !(self.beta[e][e2] > 0.0 && self.beta[e][e2].is_finite()) {
                    return Err(Error::InvalidParams {
                        name: "beta",
                        index: idx,
                        reason: "must be positive".into(),
                    });
                }
                if !(self.tau[e][e2] > 0.0 && self.tau[e][e2].is_finite()) {
                    return Err(Error::InvalidParams {
                        name: "tau",
                        index: idx,
                        reason: "must be positive".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn kernel(&self, e: usize, e2: usize, dt: f64) -> f64 {
        self.alpha[e][e2] * (1.0 + dt / self.tau[e][e2]).powf(-(1.0 + self.beta[e][e2]))
    }

    /// `alpha tau / beta` for each pair.
    pub fn kernel_norms(&self) -> Vec<Vec<f64>> {
        (0..self.alpha.len())
            .map(|e| {
                (0..self.alpha.len())
                    .map(|e2| self.alpha[e][e2] * self.tau[e][e2] / self.beta[e][e2])
                    .collect()
            })
            .collect()
    }
}

/// Hawkes part of the power-law intensity at `t`, counting events with
/// time `< t` (or `<= t` when `inclusive`).
pub fn powerlaw_hawkes_intensity(
    kernels: &PowerLawKernelParams,
    nu: &[f64],
    events: &[Event],
    t: f64,
    inclusive: bool,
) -> Vec<f64> {
    let past = if inclusive {
        events.partition_point(|ev| ev.time <= t)
    } else {
        events.partition_point(|ev| ev.time < t)
    };
    let mut lam = nu.to_vec();
    for ev in &events[..past] {
        for (e, l) in lam.iter_mut().enumerate() {
            *l += kernels.kernel(e, ev.kind, t - ev.time);
        }
    }
    lam
}

pub fn simulate_powerlaw(
    kernels: &PowerLawKernelParams,
    nu: &[f64],
    theta: &[Vec<f64>],
    state: &StateTrajectory,
    horizon: f64,
    seed: u64,
) -> Result<EventStream> {
    simulate_powerlaw_with(kernels, nu, theta, state, horizon, &mut rng_for(seed, 0), DEFAULT_MAX_EVENTS)
}

/// Thinning with direct O(k) intensity evaluation per candidate.
pub fn simulate_powerlaw_with<R: Rng>(
    kernels: &PowerLawKernelParams,
    nu: &[f64],
    theta: &[Vec<f64>],
    state: &StateTrajectory,
    horizon: f64,
    rng: &mut R,
    max_events: usize,
) -> Result<EventStream> {
    let d = nu.len();
    if d == 0 || nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParams {
            name: "nu",
            index: String::new(),
            reason: "must be nonempty and positive".into(),
        });
    }
    kernels.validate(d)?;
    check_inputs(d, theta, state, horizon)?;
    let bps = state.breakpoints();
    let mut events: Vec<Event> = Vec::new();
    let mut seg = 0;
    let mut factors: Vec<f64> = theta.iter().map(|th| dot(th, state.value(0)).exp()).collect();
    let mut t = 0.0;
    loop {
        let bound: f64 = powerlaw_hawkes_intensity(kernels, nu, &events, t, true)
            .iter()
            .zip(&factors)
            .map(|(h, f)| h * f)
            .sum();
        let gap: f64 = rng.sample(Exp1);
        let cand = t + gap / bound;
        let next_bp = bps[seg + 1];
        if cand >= next_bp {
            if seg + 2 == bps.len() {
                break;
            }
            t = next_bp;
            seg += 1;
            for (f, th) in factors.iter_mut().zip(theta) {
                *f = dot(th, state.value(seg)).exp();
            }
            continue;
        }
        if cand <= t {
            continue;
        }
        t = cand;
        let lam: Vec<f64> = powerlaw_hawkes_intensity(kernels, nu, &events, t, false)
            .iter()
            .zip(&factors)
            .map(|(h, f)| h * f)
            .collect();
        let total: f64 = lam.iter().sum();
        if rng.random::<f64>() * bound <= total {
            let kind = pick_type(&lam, total, rng);
            events.push(Event { time: t, kind });
            if events.len() > max_events {
                return Err(Error::EventCapExceeded { cap: max_events, time: t });
            }
        }
    }
    EventStream::new(horizon, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_is_reproducible_and_in_range() {
        let a = simulate_state(1.0, 2, 100.0, 3).unwrap();
        let b = simulate_state(1.0, 2, 100.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 100.0);
        assert!(a.n_segments() > 50 && a.n_segments() < 160);
        let c = simulate_state(1.0, 0, 100.0, 3).unwrap();
        assert_eq!(c.n_segments(), 1);
    }

    #[test]
    fn streams_differ() {
        let mut a = rng_for(1, 0);
        let mut b = rng_for(1, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn msd_output_strict_and_in_range() {
        let p = HawkesParams::single_exp(
            vec![0.5, 0.25],
            vec![vec![4.0, 0.4], vec![1.0, 0.2]],
            vec![vec![8.0, 2.0], vec![8.0, 2.0]],
            vec![vec![0.25, -0.25], vec![-0.25, 0.25]],
        )
        .unwrap();
        let st = simulate_state(1.0, 2, 200.0, 5).unwrap();
        let ev = simulate_msd(&p, &st, 200.0, 9).unwrap();
        assert!(ev.is_strict());
        assert!(ev.len() > 50);
        assert!(ev.events().iter().all(|e| e.time > 0.0 && e.time <= 200.0));
        assert_eq!(ev, simulate_msd(&p, &st, 200.0, 9).unwrap());
    }

    #[test]
    fn explosion_cap() {
        let p = HawkesParams::single_exp(vec![1.0], vec![vec![3.0]], vec![vec![1.0]], vec![vec![]]).unwrap();
        let st = StateTrajectory::trivial(1000.0).unwrap();
        let r = simulate_msd_with(&p, &st, 1000.0, &mut rng_for(0, 0), 1000);
        assert!(matches!(r, Err(Error::EventCapExceeded { cap: 1000, .. })));
    }

    #[test]
    fn powerlaw_intensity_direct_sum() {
        let k = PowerLawKernelParams {
            alpha: vec![vec![0.5, 0.25], vec![0.25, 0.5]],
            beta: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            tau: vec![vec![1.0; 2]; 2],
        };
        let evs = vec![Event { time: 1.0, kind: 0 }, Event { time: 2.0, kind: 1 }];
        let lam = powerlaw_hawkes_intensity(&k, &[0.5, 0.5], &evs, 3.0, false);
        let expect0 = 0.5 + 0.5 * 3.0f64.powf(-2.0) + 0.25 * 2.0f64.powf(-3.0);
        let expect1 = 0.5 + 0.25 * 3.0f64.powf(-3.0) + 0.5 * 2.0f64.powf(-2.0);
        assert!((lam[0] - expect0).abs() < 1e-12 && (lam[1] - expect1).abs() < 1e-12);
        assert_eq!(powerlaw_hawkes_intensity(&k, &[0.5, 0.5], &evs, 2.0, false)[1], 0.5 + 0.25 * 2.0f64.powf(-3.0));
    }
}
