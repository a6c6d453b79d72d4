//! Kernels and intensities.
//!
//! Point queries sum directly over the strict past. Sequential consumers
//! (simulation, prediction) use [`IncrementalIntensity`], which carries one
//! exponentially decaying accumulator per `(e, e', n)` and updates in O(1)
//! per kernel term between events.

use crate::error::{Error, Result};
use crate::model::{dot, EventStream, HawkesParams, StateTrajectory};

/// `exp(-x)` for `x >= 0`, flushed to exactly zero once it would underflow.
#[inline]
pub(crate) fn decay(x: f64) -> f64 {
    if x > 745.0 {
        0.0
    } else {
        (-x).exp()
    }
}

/// `phi_{e,e2}(dt) = sum_n alpha^n exp(-beta^n dt)`.
pub fn kernel_value(params: &HawkesParams, e: usize, e2: usize, dt: f64) -> Result<f64> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeLag(dt));
    }
    Ok(kernel_unchecked(params, e, e2, dt))
}

#[inline]
fn kernel_unchecked(params: &HawkesParams, e: usize, e2: usize, dt: f64) -> f64 {
    params.alpha[e][e2]
        .iter()
        .zip(&params.beta[e][e2])
        .map(|(a, b)| a * decay(b * dt))
        .sum()
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::TimeOutOfRange { time: t, horizon });
    }
    Ok(())
}

/// `lambda^{H}(t-)`: baseline plus kernels of all events strictly before `t`.
pub fn hawkes_intensity_left(params: &HawkesParams, events: &EventStream, t: f64) -> Result<Vec<f64>> {
    check_time(t, events.horizon())?;
    events.check_types(params.nu.len())?;
    let past = events.events().partition_point(|ev| ev.time < t);
    let mut lam = params.nu.clone();
    for ev in &events.events()[..past] {
        for (e, l) in lam.iter_mut().enumerate() {
            *l += kernel_unchecked(params, e, ev.kind, t - ev.time);
        }
    }
    Ok(lam)
}

/// Intensity of every coordinate at `t-`, split into its Hawkes part and
/// its state factor `exp(<theta^e, X_{t-}>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityValue {
    pub hawkes_part: Vec<f64>,
    pub state_factor: Vec<f64>,
}

impl IntensityValue {
    pub fn total(&self) -> Vec<f64> {
        self.hawkes_part
            .iter()
            .zip(&self.state_factor)
            .map(|(h, s)| h * s)
            .collect()
    }
}

pub fn msd_intensity_left(
    params: &HawkesParams,
    events: &EventStream,
    state: &StateTrajectory,
    t: f64,
) -> Result<IntensityValue> {
    if events.horizon() != state.horizon() {
        return Err(Error::HorizonMismatch {
            events: events.horizon(),
            state: state.horizon(),
        });
    }
    if state.n_covariates() != params.shape().n_covariates {
        return Err(Error::DimensionMismatch(format!(
            "state has {} covariates, parameters expect {}",
            state.n_covariates(),
            params.shape().n_covariates
        )));
    }
    let hawkes_part = hawkes_intensity_left(params, events, t)?;
    let x = state.value_before(t);
    let state_factor = params.theta.iter().map(|th| dot(th, x).exp()).collect();
    Ok(IntensityValue {
        hawkes_part,
        state_factor,
    })
}

/// Running Hawkes intensity for forward sweeps over time.
///
/// `acc[(e * d + e2) * n_exp + n]` holds `sum_j exp(-beta^n_{e,e2} (t - t_j))`
/// over absorbed events `j` of type `e2`.
#[derive(Debug, Clone)]
pub struct IncrementalIntensity<'a> {
    params: &'a HawkesParams,
    n_types: usize,
    n_exp: usize,
    time: f64,
    acc: Vec<f64>,
}

impl<'a> IncrementalIntensity<'a> {
    pub fn new(params: &'a HawkesParams) -> Self {
        let shape = params.shape();
        Self {
            params,
            n_types: shape.n_types,
            n_exp: shape.n_exp,
            time: 0.0,
            acc: vec![0.0; shape.n_types * shape.n_types * shape.n_exp],
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Decay all accumulators forward to `t >= self.time()`.
    pub fn advance_to(&mut self, t: f64) {
        let dt = t - self.time;
        debug_assert!(dt >= 0.0);
        if dt > 0.0 {
            let d = self.n_types;
            for e in 0..d {
                for e2 in 0..d {
                    let off = (e * d + e2) * self.n_exp;
                    for (n, b) in self.params.beta[e][e2].iter().enumerate() {
                        if self.acc[off + n] != 0.0 {
                            self.acc[off + n] *= decay(b * dt);
                        }
                    }
                }
            }
        }
        self.time = t;
    }

    /// Add an event of type `kind` at the current time.
    pub fn absorb(&mut self, kind: usize) {
        let d = self.n_types;
        for e in 0..d {
            let off = (e * d + kind) * self.n_exp;
            for v in &mut self.acc[off..off + self.n_exp] {
                *v += 1.0;
            }
        }
    }

    /// `lambda^{H,e}` at the current time for every `e`. Events absorbed at
    /// the current time are included, so call this before absorbing to get
    /// a left limit.
    pub fn hawkes(&self) -> Vec<f64> {
        let d = self.n_types;
        (0..d)
            .map(|e| {
                let mut l = self.params.nu[e];
                for e2 in 0..d {
                    let off = (e * d + e2) * self.n_exp;
                    for (n, a) in self.params.alpha[e][e2].iter().enumerate() {
                        l += a * self.acc[off + n];
                    }
                }
                l
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;

    fn table1() -> HawkesParams {
        HawkesParams::single_exp(
            vec![0.5, 0.25],
            vec![vec![4.0, 0.4], vec![1.0, 0.2]],
            vec![vec![8.0, 2.0], vec![8.0, 2.0]],
            vec![vec![0.25, -0.25], vec![-0.25, 0.25]],
        )
        .unwrap()
    }

    #[test]
    fn kernel_at_zero_is_alpha() {
        assert_eq!(kernel_value(&table1(), 0, 0, 0.0).unwrap(), 4.0);
        assert!(kernel_value(&table1(), 0, 0, -1e-3).is_err());
    }

    #[test]
    fn kernel_decays_to_zero() {
        let p = table1();
        assert_eq!(kernel_value(&p, 0, 1, 1e6).unwrap(), 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let v = kernel_value(&p, 1, 1, k as f64 * 0.1).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn three_term_kernel_matches_term_sum() {
        let p = HawkesParams::new(
            vec![0.5],
            vec![vec![vec![5.0, 2.0, 0.1]]],
            vec![vec![vec![50.0, 10.0, 1.0]]],
            vec![vec![]],
        )
        .unwrap();
        // 5e^{-5} + 2e^{-1} + 0.1e^{-0.1}
        let expected = 5.0 * (-5.0f64).exp() + 2.0 * (-1.0f64).exp() + 0.1 * (-0.1f64).exp();
        assert!((kernel_value(&p, 0, 0, 0.1).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn left_limit_excludes_event_at_t() {
        let p = table1();
        let s = EventStream::new(10.0, vec![Event { time: 1.0, kind: 0 }]).unwrap();
        assert_eq!(hawkes_intensity_left(&p, &s, 1.0).unwrap(), p.nu);
        let l = hawkes_intensity_left(&p, &s, 1.5).unwrap();
        assert!((l[0] - (0.5 + 4.0 * (-4.0f64).exp())).abs() < 1e-15);
        assert!((l[1] - (0.25 + 1.0 * (-4.0f64).exp())).abs() < 1e-15);
        assert!(hawkes_intensity_left(&p, &s, 11.0).is_err());
    }

    #[test]
    fn state_factor() {
        let p = table1();
        let s = EventStream::empty(2.0).unwrap();
        let st = StateTrajectory::new(vec![0.0, 1.0, 2.0], vec![vec![1.0, 1.0], vec![1.0, -1.0]], 2)
            .unwrap();
        let v = msd_intensity_left(&p, &s, &st, 0.5).unwrap();
        assert!((v.state_factor[0] - 1.0).abs() < 1e-15);
        let v = msd_intensity_left(&p, &s, &st, 1.5).unwrap();
        assert!((v.state_factor[0] - 0.5f64.exp()).abs() < 1e-15);
        assert!((v.state_factor[0] - 1.648_721_270_700_128).abs() < 1e-12);
        let mut p0 = p.clone();
        p0.theta = vec![vec![0.0; 2]; 2];
        let v = msd_intensity_left(&p0, &s, &st, 1.5).unwrap();
        assert_eq!(v.total(), hawkes_intensity_left(&p0, &s, 1.5).unwrap());
    }

    #[test]
    fn incremental_matches_direct() {
        let p = table1();
        let evs: Vec<Event> = (1..40)
            .map(|i| Event {
                time: i as f64 * 0.173,
                kind: i % 2,
            })
            .collect();
        let s = EventStream::new(10.0, evs.clone()).unwrap();
        let mut inc = IncrementalIntensity::new(&p);
        for ev in &evs {
            inc.advance_to(ev.time);
            let direct = hawkes_intensity_left(&p, &s, ev.time).unwrap();
            for (a, b) in inc.hawkes().iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-12 * b);
            }
            inc.absorb(ev.kind);
        }
    }
}
