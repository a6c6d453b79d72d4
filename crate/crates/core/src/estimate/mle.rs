use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::finalize_coordinate;
use crate::error::{Error, Result};
use crate::likelihood::Sample;
use crate::model::{aic, CoordinateParams, EventStream, FitMethod, FitResult, HawkesParams, ModelShape, StateTrajectory};
use crate::optim::{minimize, LbfgsOptions};
use crate::simulate::rng_for;

/// Box constraints on the raw parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub nu: (f64, f64),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    /// `theta` lies in `[-theta_max, theta_max]`.
    pub theta_max: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            nu: (1e-8, 1e4),
            alpha: (1e-8, 1e4),
            beta: (1e-6, 1e4),
            theta_max: 10.0,
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64), positive: bool| {
            lo.is_finite() && hi.is_finite() && lo < hi && (!positive || lo > 0.0)
        };
        if !ok(self.nu, true) || !ok(self.beta, true) || !ok(self.alpha, false) || self.alpha.0 < 0.0 {
            return Err(Error::InvalidOption("parameter bounds must be finite, ordered and positive".into()));
        }
        if !(self.theta_max > 0.0 && self.theta_max.is_finite()) {
            return Err(Error::InvalidOption("theta_max must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub n_starts: usize,
    pub bounds: ParamBounds,
    pub gtol: f64,
    pub ftol: f64,
    pub max_iterations: usize,
    pub memory: usize,
    pub seed: u64,
    /// Fix every cross-excitation kernel `alpha[e][e2]`, `e != e2`, at zero.
    pub no_cross_excitation: bool,
    /// Starting points tried in addition to the random ones.
    pub initial: Vec<HawkesParams>,
    /// Run the starts of a coordinate on the rayon pool.
    pub parallel: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            n_starts: 12,
            bounds: ParamBounds::default(),
            gtol: 1e-6,
            ftol: 1e-11,
            max_iterations: 2000,
            memory: 10,
            seed: 0,
            no_cross_excitation: false,
            initial: Vec::new(),
            parallel: true,
        }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 && self.initial.is_empty() {
            return Err(Error::InvalidOption("at least one start is required".into()));
        }
        if !(self.gtol > 0.0 && self.ftol > 0.0) {
            return Err(Error::InvalidOption("tolerances must be positive".into()));
        }
        if self.memory == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidOption("memory and max_iterations must be positive".into()));
        }
        self.bounds.validate()
    }

    /// Parameters counted by AIC under these options.
    pub fn n_params(&self, shape: &ModelShape) -> usize {
        let fixed = if self.no_cross_excitation {
            2 * shape.n_types * (shape.n_types - 1) * shape.n_exp
        } else {
            0
        };
        shape.n_params() - fixed
    }
}

/// A random starting point for coordinate `e`: `nu` uniform on
/// `[0.5, 2] * k_e / T`, decay rates log-uniform on `[0.1, 1000]` and sorted,
/// each kernel's `sum alpha/beta` uniform on `[0, 0.8]` spread evenly over
/// its terms, `theta` uniform on `[-1, 1]`.
pub fn random_start<R: Rng>(rng: &mut R, shape: &ModelShape, n_events: usize, horizon: f64, bounds: &ParamBounds) -> CoordinateParams {
    let rate = n_events.max(1) as f64 / horizon;
    let nu = (rng.random_range(0.5f64..=2.0) * rate).clamp(bounds.nu.0, bounds.nu.1);
    let mut alpha = Vec::with_capacity(shape.n_types);
    let mut beta = Vec::with_capacity(shape.n_types);
    for _ in 0..shape.n_types {
        let mut b: Vec<f64> = (0..shape.n_exp)
            .map(|_| 10f64.powf(rng.random_range(-1.0f64..=3.0)).clamp(bounds.beta.0, bounds.beta.1))
            .collect();
        b.sort_by(|x, y| y.total_cmp(x));
        let ratio: f64 = rng.random_range(0.0..=0.8);
        let a = b
            .iter()
            .map(|bn| (bn * ratio / shape.n_exp as f64).clamp(bounds.alpha.0, bounds.alpha.1))
            .collect();
        alpha.push(a);
        beta.push(b);
    }
    let theta = (0..shape.n_covariates)
        .map(|_| rng.random_range(-1.0f64..=1.0).clamp(-bounds.theta_max, bounds.theta_max))
        .collect();
    CoordinateParams { nu, alpha, beta, theta }
}

pub(crate) struct CoordinateFit {
    pub params: CoordinateParams,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Fit by maximum likelihood: independent bound-constrained L-BFGS runs per
/// coordinate from `n_starts` random starts plus any supplied ones, keeping
/// the best per coordinate.
pub fn fit_mle(events: &EventStream, state: &StateTrajectory, shape: ModelShape, options: &MleOptions) -> Result<FitResult> {
    let sample = Sample::new(events.clone(), state.clone(), shape.n_types)?;
    fit_mle_sample(&sample, shape, options)
}

pub(crate) fn check_shape(sample: &Sample, shape: &ModelShape) -> Result<()> {
    ModelShape::new(shape.n_types, shape.n_exp, shape.n_covariates)?;
    if shape.n_types != sample.n_types() {
        return Err(Error::DimensionMismatch(format!(
            "shape has {} event types, sample has {}",
            shape.n_types,
            sample.n_types()
        )));
    }
    if shape.n_covariates != sample.state().n_covariates() {
        return Err(Error::DimensionMismatch(format!(
            "shape has {} covariates, state has {}",
            shape.n_covariates,
            sample.state().n_covariates()
        )));
    }
    Ok(())
}

pub(crate) fn fit_mle_sample(sample: &Sample, shape: ModelShape, options: &MleOptions) -> Result<FitResult> {
    let clock = Instant::now();
    options.validate()?;
    check_shape(sample, &shape)?;
    for (i, p) in options.initial.iter().enumerate() {
        if p.shape() != shape {
            return Err(Error::DimensionMismatch(format!("initial point {i} does not match the model shape")));
        }
    }
    let fits: Vec<CoordinateFit> = (0..shape.n_types)
        .map(|e| fit_coordinate(sample, e, &shape, options))
        .collect();
    let n_starts = options.n_starts + options.initial.len();
    let mut warnings = Vec::new();
    let mut converged = true;
    let mut iterations = 0;
    let mut coords = Vec::with_capacity(shape.n_types);
    for f in fits {
        warnings.extend(f.warnings);
        converged &= f.converged;
        iterations += f.iterations;
        coords.push(f.params);
    }
    let params = HawkesParams::from_coordinates(coords);
    let ll = sample.log_likelihood(&params)?;
    let n_params = options.n_params(&shape);
    Ok(FitResult {
        shape,
        aic: aic(n_params, ll.total),
        log_likelihood: ll.total,
        n_params,
        per_coordinate_loglik: ll.per_coordinate,
        params,
        method: FitMethod::Mle,
        starts_used: n_starts,
        converged,
        elapsed_secs: clock.elapsed().as_secs_f64(),
        iterations,
        warnings,
    })
}

fn fit_coordinate(sample: &Sample, e: usize, shape: &ModelShape, options: &MleOptions) -> CoordinateFit {
    let b = &options.bounds;
    let n_types = shape.n_types;
    let n_exp = shape.n_exp;
    let block = n_types * n_exp;
    let k_e = sample.events_of_type(e).len();
    let horizon = sample.horizon();
    let masked = |src: usize| options.no_cross_excitation && src != e;

    let apply_mask = |cp: &mut CoordinateParams| {
        for src in 0..n_types {
            if masked(src) {
                cp.alpha[src].iter_mut().for_each(|a| *a = 0.0);
            }
        }
    };

    if k_e == 0 {
        let mut cp = random_start(&mut rng_for(options.seed, e as u64), shape, 0, horizon, b);
        cp.nu = b.nu.0;
        cp.alpha.iter_mut().flatten().for_each(|a| *a = b.alpha.0);
        cp.theta.iter_mut().for_each(|t| *t = 0.0);
        apply_mask(&mut cp);
        finalize_coordinate(&mut cp);
        return CoordinateFit {
            params: cp,
            converged: true,
            iterations: 0,
            warnings: vec![format!("no events of type {}: boundary fit returned", e + 1)],
        };
    }

    // flat layout [nu, alpha (block), beta (block), theta]
    let dim = 1 + 2 * block + shape.n_covariates;
    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];
    let mut free = vec![true; dim];
    lower[0] = b.nu.0;
    upper[0] = b.nu.1;
    for i in 0..block {
        lower[1 + i] = b.alpha.0;
        upper[1 + i] = b.alpha.1;
        lower[1 + block + i] = b.beta.0;
        upper[1 + block + i] = b.beta.1;
        if masked(i / n_exp) {
            free[1 + i] = false;
            free[1 + block + i] = false;
        }
    }
    for c in 0..shape.n_covariates {
        lower[1 + 2 * block + c] = -b.theta_max;
        upper[1 + 2 * block + c] = b.theta_max;
    }

    let mut starts: Vec<CoordinateParams> = options.initial.iter().map(|p| p.coordinate(e)).collect();
    for s in 0..options.n_starts {
        let mut rng = rng_for(options.seed, (s * n_types + e) as u64);
        starts.push(random_start(&mut rng, shape, k_e, horizon, b));
    }
    for cp in &mut starts {
        apply_mask(cp);
    }

    let lbfgs = LbfgsOptions {
        memory: options.memory,
        max_iterations: options.max_iterations,
        gtol: options.gtol,
        ftol: options.ftol,
    };
    let norm = k_e as f64;
    let run = |start: &CoordinateParams| -> (CoordinateParams, f64, bool, usize) {
        let mut x0 = start.to_flat();
        for i in 0..dim {
            if free[i] {
                x0[i] = x0[i].clamp(lower[i], upper[i]);
            }
        }
        // positive parameters are optimized on the log scale, theta as is
        let idx: Vec<usize> = (0..dim).filter(|&i| free[i]).collect();
        let is_log: Vec<bool> = idx.iter().map(|&i| i < 1 + 2 * block).collect();
        let to_z = |i: usize, v: f64, log: bool| if log { v.max(lower[i]).ln() } else { v };
        let z0: Vec<f64> = idx.iter().zip(&is_log).map(|(&i, &l)| to_z(i, x0[i], l)).collect();
        let zl: Vec<f64> = idx.iter().zip(&is_log).map(|(&i, &l)| to_z(i, lower[i], l)).collect();
        let zu: Vec<f64> = idx.iter().zip(&is_log).map(|(&i, &l)| to_z(i, upper[i], l)).collect();
        let unpack = |z: &[f64]| {
            let mut x = x0.clone();
            for ((&i, &l), zi) in idx.iter().zip(&is_log).zip(z) {
                x[i] = if l { zi.exp().clamp(lower[i], upper[i]) } else { *zi };
            }
            (CoordinateParams::from_flat(&x, n_types, n_exp, shape.n_covariates), x)
        };
        let objective = |z: &[f64]| {
            let (cp, x) = unpack(z);
            let (ll, g) = sample.coordinate_value_and_gradient(e, &cp);
            let gz = idx
                .iter()
                .zip(&is_log)
                .map(|(&i, &l)| -g[i] * if l { x[i] } else { 1.0 } / norm)
                .collect();
            (-ll / norm, gz)
        };
        let out = minimize(objective, &z0, &zl, &zu, &lbfgs);
        let (mut cp, _) = unpack(&out.x);
        finalize_coordinate(&mut cp);
        let ll = sample.coordinate_log_likelihood(e, &cp);
        (cp, ll, out.converged, out.iterations)
    };

    let results: Vec<(CoordinateParams, f64, bool, usize)> = if options.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 > results[best].1 || (results[best].1.is_nan() && !r.1.is_nan()) {
            best = i;
        }
    }
    let (params, loglik, converged, iterations) = results.into_iter().nth(best).expect("at least one start");
    let mut warnings = Vec::new();
    if !loglik.is_finite() {
        warnings.push(format!("coordinate {}: no start reached a finite log-likelihood", e + 1));
    }
    if !converged {
        warnings.push(format!("coordinate {}: optimizer stopped before convergence", e + 1));
    }
    CoordinateFit {
        params,
        converged,
        iterations,
        warnings,
    }
}
