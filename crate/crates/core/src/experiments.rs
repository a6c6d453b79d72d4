//! Simulation studies: the reference parameter sets and replicate drivers
//! for parameter recovery, AIC order selection on exponential and
//! power-law data, and the shrinking of estimate dispersion with the
//! horizon.
//!
//! Every study uses two event types and a two-dimensional state that jumps
//! at rate 1 to independent uniform values on `[-1, 1]^2`. Replicate `r` of
//! a study seeded with `seed` draws its state from stream `2r` and its
//! events from stream `2r + 1`, and fits with seed `seed + r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{fit_mle, select_model_with, Candidate, MleOptions, SelectOptions};
use crate::model::{EventStream, FitResult, HawkesParams, ModelShape, StateTrajectory};
use crate::simulate::{rng_for, simulate_msd_with, simulate_powerlaw_with, simulate_state_with, PowerLawKernelParams, DEFAULT_MAX_EVENTS};

pub const STATE_RATE: f64 = 1.0;
pub const STATE_DIM: usize = 2;

/// Single-exponential truth of the recovery study.
pub fn single_exp_truth() -> HawkesParams {
    HawkesParams::single_exp(
        vec![0.5, 0.25],
        vec![vec![4.0, 0.4], vec![1.0, 0.2]],
        vec![vec![8.0, 2.0], vec![8.0, 2.0]],
        vec![vec![0.25, -0.25], vec![-0.25, 0.25]],
    )
    .expect("valid")
}

/// Three-term truth of the order-selection and dispersion studies.
pub fn three_exp_truth() -> HawkesParams {
    HawkesParams::new(
        vec![0.5, 0.25],
        vec![
            vec![vec![5.0, 2.0, 0.1], vec![5.0, 2.0, 0.1]],
            vec![vec![10.0, 2.0, 0.2], vec![10.0, 2.0, 0.2]],
        ],
        vec![
            vec![vec![50.0, 10.0, 1.0], vec![100.0, 20.0, 2.0]],
            vec![vec![200.0, 40.0, 4.0], vec![100.0, 20.0, 2.0]],
        ],
        vec![vec![0.25, -0.25], vec![-0.25, 0.25]],
    )
    .expect("valid")
}

/// Power-law truth of the misspecification study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawTruth {
    pub nu: Vec<f64>,
    pub kernels: PowerLawKernelParams,
    pub theta: Vec<Vec<f64>>,
}

pub fn powerlaw_truth() -> PowerLawTruth {
    PowerLawTruth {
        nu: vec![0.5, 0.5],
        kernels: PowerLawKernelParams {
            alpha: vec![vec![0.5, 0.25], vec![0.25, 0.5]],
            beta: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            tau: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        },
        theta: vec![vec![0.25, -0.5], vec![-0.25, 0.5]],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Truth {
    Exponential(HawkesParams),
    PowerLaw(PowerLawTruth),
}

impl Truth {
    pub fn n_types(&self) -> usize {
        match self {
            Truth::Exponential(p) => p.nu.len(),
            Truth::PowerLaw(p) => p.nu.len(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        match self {
            Truth::Exponential(p) => p.shape().n_covariates,
            Truth::PowerLaw(p) => p.theta.first().map_or(0, Vec::len),
        }
    }
}

/// State and events of replicate `replicate`.
pub fn simulate_replicate(truth: &Truth, horizon: f64, seed: u64, replicate: u64) -> Result<(EventStream, StateTrajectory)> {
    let state = simulate_state_with(STATE_RATE, truth.n_covariates(), horizon, &mut rng_for(seed, 2 * replicate))?;
    let mut rng = rng_for(seed, 2 * replicate + 1);
    let events = match truth {
        Truth::Exponential(p) => simulate_msd_with(p, &state, horizon, &mut rng, DEFAULT_MAX_EVENTS)?,
        Truth::PowerLaw(p) => simulate_powerlaw_with(&p.kernels, &p.nu, &p.theta, &state, horizon, &mut rng, DEFAULT_MAX_EVENTS)?,
    };
    Ok((events, state))
}

fn run<T: Send>(n: usize, parallel: bool, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    if parallel {
        (0..n as u64).into_par_iter().map(f).collect()
    } else {
        (0..n as u64).map(f).collect()
    }
}

/// Fit `shape` by maximum likelihood on `n_replicates` simulated samples.
pub fn replicate_fits(
    truth: &Truth,
    horizon: f64,
    n_replicates: usize,
    seed: u64,
    shape: ModelShape,
    options: &MleOptions,
    parallel: bool,
) -> Vec<Result<FitResult>> {
    run(n_replicates, parallel, |r| {
        let (events, state) = simulate_replicate(truth, horizon, seed, r)?;
        let opts = MleOptions {
            seed: seed.wrapping_add(r),
            parallel: options.parallel && !parallel,
            ..options.clone()
        };
        fit_mle(&events, &state, shape, &opts)
    })
}

/// Outcome of AIC selection on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub n_events: usize,
    /// `(n_exp, aic)` for every successful candidate.
    pub aic: Vec<(usize, f64)>,
    pub selected: Option<usize>,
}

/// AIC choice of the number of exponential terms among `n_exps`, all state
/// columns used as covariates.
pub fn replicate_order_selection(
    truth: &Truth,
    horizon: f64,
    n_replicates: usize,
    seed: u64,
    n_exps: &[usize],
    options: &SelectOptions,
    parallel: bool,
) -> Vec<Result<SelectionOutcome>> {
    let covariates: Vec<usize> = (0..truth.n_covariates()).collect();
    let candidates: Vec<Candidate> = n_exps
        .iter()
        .map(|&n_exp| Candidate {
            n_exp,
            covariates: covariates.clone(),
        })
        .collect();
    run(n_replicates, parallel, |r| {
        let (events, state) = simulate_replicate(truth, horizon, seed, r)?;
        let opts = SelectOptions {
            mle: MleOptions {
                seed: seed.wrapping_add(r),
                parallel: options.mle.parallel && !parallel,
                ..options.mle.clone()
            },
            ..options.clone()
        };
        let sel = select_model_with(&events, &state, truth.n_types(), &candidates, &opts)?;
        let aic = sel
            .entries
            .iter()
            .filter_map(|e| e.result.as_ref().ok().map(|f| (e.candidate.n_exp, f.aic)))
            .collect();
        Ok(SelectionOutcome {
            n_events: events.len(),
            aic,
            selected: sel.best().map(|e| e.candidate.n_exp),
        })
    })
}

/// Frequency of each selected order, sorted by order.
pub fn selection_frequencies(outcomes: &[SelectionOutcome]) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for o in outcomes {
        if let Some(n) = o.selected {
            *counts.entry(n).or_insert(0) += 1;
        }
    }
    counts.into_iter().collect()
}

/// Flat parameter vector with names like `alpha_1_2_1` (1-based
/// target, source, term).
pub fn named_params(p: &HawkesParams) -> Vec<(String, f64)> {
    let shape = p.shape();
    let mut out = Vec::with_capacity(shape.n_params());
    for e in 0..shape.n_types {
        out.push((format!("nu_{}", e + 1), p.nu[e]));
    }
    for (name, arr) in [("alpha", &p.alpha), ("beta", &p.beta)] {
        for e in 0..shape.n_types {
            for e2 in 0..shape.n_types {
                for n in 0..shape.n_exp {
                    out.push((format!("{name}_{}_{}_{}", e + 1, e2 + 1, n + 1), arr[e][e2][n]));
                }
            }
        }
    }
    for e in 0..shape.n_types {
        for c in 0..shape.n_covariates {
            out.push((format!("theta_{}_{}", e + 1, c + 1), p.theta[e][c]));
        }
    }
    out
}

/// Median, interquartile distance and standard deviation of one parameter
/// over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub median: f64,
    pub iqr: f64,
    pub sd: f64,
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn summarize(truth: &HawkesParams, fits: &[FitResult]) -> Vec<ParamSummary> {
    let names = named_params(truth);
    let estimates: Vec<Vec<(String, f64)>> = fits.iter().map(|f| named_params(&f.params)).collect();
    names
        .into_iter()
        .enumerate()
        .map(|(i, (name, t))| {
            let mut xs: Vec<f64> = estimates.iter().map(|e| e[i].1).collect();
            xs.sort_by(f64::total_cmp);
            ParamSummary {
                name,
                truth: t,
                median: quantile(&xs, 0.5),
                iqr: quantile(&xs, 0.75) - quantile(&xs, 0.25),
                sd: sample_sd(&xs),
            }
        })
        .collect()
}

/// Per-parameter ratio `sd(short) / sd(long)`.
pub fn dispersion_ratios(short: &[ParamSummary], long: &[ParamSummary]) -> Vec<(String, f64)> {
    short
        .iter()
        .zip(long)
        .map(|(s, l)| (s.name.clone(), s.sd / l.sd))
        .collect()
}
