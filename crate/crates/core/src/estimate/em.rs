use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::finalize_coordinate;
use super::mle::{check_shape, random_start, ParamBounds};
use crate::error::{Error, Result};
use crate::likelihood::{forward_r, hawkes_integrals_by_state, kernel_integral_moments, Sample};
use crate::model::{aic, dot, CoordinateParams, EventStream, FitMethod, FitResult, HawkesParams, ModelShape, StateTrajectory};
use crate::simulate::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_sweeps: usize,
    /// Stop once the largest relative parameter change of a sweep is below
    /// this and the log-likelihood gain is below `loglik_tol`.
    pub param_tol: f64,
    pub loglik_tol: f64,
    /// Gradient norm at which the inner Newton solve for `theta` stops.
    pub theta_tol: f64,
    /// Relative bracket width at which the decay-rate root search stops.
    pub beta_tol: f64,
    pub bounds: ParamBounds,
    pub seed: u64,
    /// Random starts per coordinate, run in addition to `initial`; the run
    /// ending highest is kept.
    pub n_starts: usize,
    pub initial: Option<HawkesParams>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 5000,
            param_tol: 1e-7,
            loglik_tol: 1e-10,
            theta_tol: 1e-8,
            beta_tol: 1e-12,
            bounds: ParamBounds::default(),
            seed: 0,
            n_starts: 1,
            initial: None,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidOption("max_sweeps must be positive".into()));
        }
        for (name, v) in [
            ("param_tol", self.param_tol),
            ("loglik_tol", self.loglik_tol),
            ("theta_tol", self.theta_tol),
            ("beta_tol", self.beta_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidOption(format!("{name} must be positive")));
            }
        }
        if self.n_starts == 0 && self.initial.is_none() {
            return Err(Error::InvalidOption("EM needs a starting point or at least one random start".into()));
        }
        self.bounds.validate()
    }
}

/// Fit by the EM algorithm. Each sweep computes the branching aggregates,
/// then updates `theta` (Newton on the expected complete log-likelihood),
/// `nu` in closed form, and for every kernel term the decay rate (root of
/// the profiled stationarity equation) and `alpha`. The reported
/// log-likelihood is the exact observed one.
pub fn fit_em(events: &EventStream, state: &StateTrajectory, shape: ModelShape, options: &EmOptions) -> Result<FitResult> {
    fit_em_with_trace(events, state, shape, options).map(|(fit, _)| fit)
}

/// [`fit_em`] plus, per coordinate, the observed log-likelihood after every
/// sweep (the first entry is the starting point).
pub fn fit_em_with_trace(
    events: &EventStream,
    state: &StateTrajectory,
    shape: ModelShape,
    options: &EmOptions,
) -> Result<(FitResult, Vec<Vec<f64>>)> {
    let clock = Instant::now();
    options.validate()?;
    let sample = Sample::new(events.clone(), state.clone(), shape.n_types)?;
    check_shape(&sample, &shape)?;
    if let Some(p) = &options.initial {
        if p.shape() != shape {
            return Err(Error::DimensionMismatch("initial point does not match the model shape".into()));
        }
        p.validate()?;
    }
    let mut coords = Vec::with_capacity(shape.n_types);
    let mut traces = Vec::with_capacity(shape.n_types);
    let mut warnings = Vec::new();
    let mut converged = true;
    let mut sweeps = 0;
    for e in 0..shape.n_types {
        let out = em_coordinate(&sample, e, &shape, options);
        coords.push(out.params);
        traces.push(out.trace);
        warnings.extend(out.warnings);
        converged &= out.converged;
        sweeps = sweeps.max(out.sweeps);
    }
    let params = HawkesParams::from_coordinates(coords);
    let ll = sample.log_likelihood(&params)?;
    let n_params = shape.n_params();
    let fit = FitResult {
        shape,
        aic: aic(n_params, ll.total),
        log_likelihood: ll.total,
        n_params,
        per_coordinate_loglik: ll.per_coordinate,
        params,
        method: FitMethod::Em,
        starts_used: options.n_starts + options.initial.is_some() as usize,
        converged,
        elapsed_secs: clock.elapsed().as_secs_f64(),
        iterations: sweeps,
        warnings,
    };
    Ok((fit, traces))
}

struct EmCoordinate {
    params: CoordinateParams,
    trace: Vec<f64>,
    warnings: Vec<String>,
    converged: bool,
    sweeps: usize,
}

fn em_coordinate(sample: &Sample, e: usize, shape: &ModelShape, options: &EmOptions) -> EmCoordinate {
    let k_e = sample.events_of_type(e).len();
    let mut starts: Vec<CoordinateParams> = options.initial.iter().map(|p| p.coordinate(e)).collect();
    for s in 0..options.n_starts {
        let stream = (s * shape.n_types + e) as u64;
        starts.push(random_start(&mut rng_for(options.seed, stream), shape, k_e, sample.horizon(), &options.bounds));
    }
    let mut best: Option<(f64, EmCoordinate)> = None;
    for cp in starts {
        let run = em_run(sample, e, shape, options, cp);
        let ll = sample.coordinate_log_likelihood(e, &run.params);
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, run));
        }
    }
    best.expect("at least one start").1
}

fn em_run(sample: &Sample, e: usize, shape: &ModelShape, options: &EmOptions, mut cp: CoordinateParams) -> EmCoordinate {
    let b = &options.bounds;
    let k_e = sample.events_of_type(e).len();
    let mut warnings = Vec::new();
    if k_e == 0 {
        cp.nu = b.nu.0;
        cp.alpha.iter_mut().flatten().for_each(|a| *a = 0.0);
        cp.theta.iter_mut().for_each(|t| *t = 0.0);
        finalize_coordinate(&mut cp);
        let ll = sample.coordinate_log_likelihood(e, &cp);
        warnings.push(format!("no events of type {}: boundary fit returned", e + 1));
        return EmCoordinate {
            params: cp,
            trace: vec![ll],
            warnings,
            converged: true,
            sweeps: 0,
        };
    }

    // sum of X_{t_i-} over own events: the linear term of the theta objective
    let x_bar = {
        let mut v = vec![0.0; shape.n_covariates];
        for &i in sample.events_of_type(e) {
            let x = sample.state().value(sample.timeline().pre_event_state(i));
            for (vc, xc) in v.iter_mut().zip(x) {
                *vc += xc;
            }
        }
        v
    };

    let mut ll = sample.coordinate_log_likelihood(e, &cp);
    let mut trace = vec![ll];
    let mut best = (ll, cp.clone());
    let mut converged = false;
    let mut sweeps = 0;
    let mut bracket_flagged = false;
    let mut monotone_flagged = false;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let prev = cp.clone();
        let agg = expectation(sample, e, &cp);

        if shape.n_covariates > 0 {
            let c = hawkes_integrals_by_state(sample, &cp);
            cp.theta = update_theta(sample, &c, &x_bar, &cp.theta, options);
        }
        let weights = sample.state().weights(&cp.theta);
        let occupation: f64 = (0..sample.state().n_segments())
            .map(|j| sample.state().segment_len(j) * weights[j])
            .sum();
        cp.nu = (agg.immigrant / occupation).clamp(b.nu.0, b.nu.1);

        for src in 0..shape.n_types {
            for n in 0..shape.n_exp {
                let blk = src * shape.n_exp + n;
                let p = agg.offspring[blk];
                if !(p > 0.0) {
                    cp.alpha[src][n] = 0.0;
                    continue;
                }
                let (beta, clamped) = update_beta(sample, src, cp.beta[src][n], p, agg.lag[blk], &weights, options);
                if clamped && !bracket_flagged {
                    warnings.push(format!(
                        "coordinate {}: decay-rate root outside its search bracket, clamped",
                        e + 1
                    ));
                    bracket_flagged = true;
                }
                let (a_int, _, _) = kernel_integral_moments(sample, src, beta, &weights);
                cp.beta[src][n] = beta;
                cp.alpha[src][n] = (p * beta / a_int).min(b.alpha.1);
            }
        }

        let ll_new = sample.coordinate_log_likelihood(e, &cp);
        trace.push(ll_new);
        if ll_new < ll - 1e-8 && !monotone_flagged {
            warnings.push(format!(
                "coordinate {}: observed log-likelihood decreased at sweep {sweeps} ({ll} -> {ll_new})",
                e + 1
            ));
            monotone_flagged = true;
        }
        if ll_new > best.0 {
            best = (ll_new, cp.clone());
        }
        let gain = ll_new - ll;
        ll = ll_new;
        if gain.abs() <= options.loglik_tol * ll.abs().max(1.0) && max_relative_change(&prev, &cp) <= options.param_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("coordinate {}: EM stopped after {sweeps} sweeps", e + 1));
    }
    let mut params = best.1;
    finalize_coordinate(&mut params);
    EmCoordinate {
        params,
        trace,
        warnings,
        converged,
        sweeps,
    }
}

/// Branching aggregates of the E-step for one coordinate: expected number of
/// immigrants, expected offspring per kernel term and expected total lag
/// between offspring and parent per kernel term.
struct Aggregates {
    immigrant: f64,
    offspring: Vec<f64>,
    lag: Vec<f64>,
}

fn expectation(sample: &Sample, e: usize, cp: &CoordinateParams) -> Aggregates {
    let n_exp = cp.n_exp();
    let blocks = cp.n_types() * n_exp;
    let mut r = Vec::with_capacity(blocks);
    for src in 0..cp.n_types() {
        for n in 0..n_exp {
            r.push(forward_r(sample, e, src, cp.beta[src][n], true));
        }
    }
    let m = sample.events_of_type(e).len();
    let mut lam = vec![cp.nu; m];
    for (blk, (ri, _)) in r.iter().enumerate() {
        let a = cp.alpha[blk / n_exp][blk % n_exp];
        for (l, v) in lam.iter_mut().zip(ri) {
            *l += a * v;
        }
    }
    let immigrant = lam.iter().map(|l| cp.nu / l).sum();
    let mut offspring = vec![0.0; blocks];
    let mut lag = vec![0.0; blocks];
    for (blk, (ri, rb)) in r.iter().enumerate() {
        let a = cp.alpha[blk / n_exp][blk % n_exp];
        if a == 0.0 {
            continue;
        }
        for ((l, v), vb) in lam.iter().zip(ri).zip(rb) {
            offspring[blk] += a * v / l;
            lag[blk] -= a * vb / l;
        }
    }
    Aggregates {
        immigrant,
        offspring,
        lag,
    }
}

/// Maximize `g(theta) = -sum_j c_j exp(<theta, x_j>) + <theta, x_bar>` by
/// damped Newton. `g` is concave; each accepted step increases it.
fn update_theta(sample: &Sample, c: &[f64], x_bar: &[f64], theta0: &[f64], options: &EmOptions) -> Vec<f64> {
    let state = sample.state();
    let dx = theta0.len();
    let tmax = options.bounds.theta_max;
    let objective = |th: &[f64]| -> f64 {
        let mut v = dot(th, x_bar);
        for (j, cj) in c.iter().enumerate() {
            if *cj != 0.0 {
                v -= cj * dot(th, state.value(j)).exp();
            }
        }
        v
    };
    let mut theta = theta0.to_vec();
    let mut g_val = objective(&theta);
    for _ in 0..100 {
        let mut grad = DVector::from_column_slice(x_bar);
        let mut hess = DMatrix::<f64>::zeros(dx, dx);
        for (j, cj) in c.iter().enumerate() {
            if *cj == 0.0 {
                continue;
            }
            let x = state.value(j);
            let w = cj * dot(&theta, x).exp();
            for p in 0..dx {
                grad[p] -= w * x[p];
                for q in 0..dx {
                    hess[(p, q)] += w * x[p] * x[q];
                }
            }
        }
        if grad.norm() <= options.theta_tol {
            break;
        }
        // hess holds the negated Hessian (positive semidefinite)
        let mut ridge = 0.0;
        let step = loop {
            let mut h = hess.clone();
            for p in 0..dx {
                h[(p, p)] += ridge;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&grad);
            }
            ridge = if ridge == 0.0 { 1e-10 * (1.0 + hess.trace()) } else { ridge * 10.0 };
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| (a + t * s).clamp(-tmax, tmax))
                .collect();
            let v = objective(&cand);
            if v > g_val {
                theta = cand;
                g_val = v;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    theta
}

/// Decay rate maximizing the profiled complete log-likelihood of one kernel
/// term, `P log beta - P log A(beta) - D beta`. Its derivative
/// `h(beta) = P / beta - P A'/A - D` is decreasing because `log A` minus
/// `log beta` is convex, so bisection on `[beta/100, 100 beta]` refined by
/// Newton finds the unique root. Returns the rate and whether it had to be
/// clamped to the bracket.
fn update_beta(sample: &Sample, src: usize, beta0: f64, p: f64, lag: f64, weights: &[f64], options: &EmOptions) -> (f64, bool) {
    let bounds = options.bounds.beta;
    let h = |beta: f64| -> (f64, f64) {
        let (a, a1, a2) = kernel_integral_moments(sample, src, beta, weights);
        let value = p / beta - p * a1 / a - lag;
        let slope = -p / (beta * beta) - p * (a2 * a - a1 * a1) / (a * a);
        (value, slope)
    };
    let mut lo = (beta0 / 100.0).max(bounds.0);
    let mut hi = (beta0 * 100.0).min(bounds.1);
    let (h_lo, _) = h(lo);
    if !(h_lo > 0.0) {
        return (lo, lo > bounds.0);
    }
    let (h_hi, _) = h(hi);
    if !(h_hi < 0.0) {
        return (hi, hi < bounds.1);
    }
    let mut x = beta0.clamp(lo, hi);
    for _ in 0..200 {
        let (v, slope) = h(x);
        if v == 0.0 {
            return (x, false);
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= options.beta_tol * x {
            break;
        }
        let newton = x - v / slope;
        x = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    (x, false)
}

fn max_relative_change(a: &CoordinateParams, b: &CoordinateParams) -> f64 {
    a.to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;

    #[test]
    fn single_event_nu_update() {
        // one event, no ancestors: nu = 1 / ∫ exp(<theta, X>)
        let ev = EventStream::new(4.0, vec![Event { time: 1.0, kind: 0 }]).unwrap();
        let st = StateTrajectory::trivial(4.0).unwrap();
        let init = HawkesParams::single_exp(vec![0.3], vec![vec![0.5]], vec![vec![2.0]], vec![vec![]]).unwrap();
        let opts = EmOptions {
            initial: Some(init),
            n_starts: 0,
            max_sweeps: 1,
            ..EmOptions::default()
        };
        let fit = fit_em(&ev, &st, ModelShape::new(1, 1, 0).unwrap(), &opts).unwrap();
        assert!((fit.params.nu[0] - 0.25).abs() < 1e-15);
        assert_eq!(fit.params.alpha[0][0][0], 0.0);
    }

    #[test]
    fn moments_match_finite_differences() {
        let ev = EventStream::new(
            10.0,
            vec![Event { time: 1.0, kind: 0 }, Event { time: 2.5, kind: 0 }, Event { time: 7.0, kind: 0 }],
        )
        .unwrap();
        let st = StateTrajectory::new(vec![0.0, 3.0, 10.0], vec![vec![0.5], vec![-1.0]], 1).unwrap();
        let sample = Sample::new(ev, st, 1).unwrap();
        let w = sample.state().weights(&[0.7]);
        let beta = 1.3;
        let (a, a1, a2) = kernel_integral_moments(&sample, 0, beta, &w);
        let h = 1e-5;
        let (ap, a1p, _) = kernel_integral_moments(&sample, 0, beta + h, &w);
        let (am, a1m, _) = kernel_integral_moments(&sample, 0, beta - h, &w);
        assert!(((ap - am) / (2.0 * h) - a1).abs() < 1e-8);
        assert!(((a1p - a1m) / (2.0 * h) - a2).abs() < 1e-7);
        // A = sum_j ∫ beta e^{-beta(s - t_j)} w(s) ds, by hand
        let (w0, w1) = (0.35f64.exp(), (-0.7f64).exp());
        let one = |t: f64| {
            let until3 = if t < 3.0 { w0 * (1.0 - (-beta * (3.0 - t)).exp()) } else { 0.0 };
            let from = t.max(3.0);
            until3 + w1 * ((-beta * (from - t)).exp() - (-beta * (10.0 - t)).exp())
        };
        assert!((a - (one(1.0) + one(2.5) + one(7.0))).abs() < 1e-13);
    }
}
