//! State-dependent endogeneity and next-event-type prediction.
//!
//! Freezing the state at `x`, an msdHawkes process is a standard Hawkes
//! process with baseline `m_i nu_i` and kernels `m_i alpha_ij`, where
//! `m_i = exp(<theta^i, x>)`. Its branching matrix is
//! `M_ij = m_i sum_n alpha^n_ij / beta^n_ij`, and the spectral radius of `M`
//! is the endogeneity of state `x`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::IncrementalIntensity;
use crate::model::{dot, EventStream, HawkesParams, StateTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndogeneityReport {
    pub x: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub radius: f64,
    /// Radius of the same kernels with `theta = 0`.
    pub baseline_radius: f64,
}

pub fn endogeneity(params: &HawkesParams, x: &[f64]) -> Result<EndogeneityReport> {
    params.validate()?;
    let shape = params.shape();
    if x.len() != shape.n_covariates {
        return Err(Error::DimensionMismatch(format!(
            "state vector has {} components, parameters expect {}",
            x.len(),
            shape.n_covariates
        )));
    }
    if let Some(c) = x.iter().position(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::InvalidState(format!("component {c} = {} outside [-1, 1]", x[c])));
    }
    let norms = params.kernel_norms();
    let matrix: Vec<Vec<f64>> = norms
        .iter()
        .zip(&params.theta)
        .map(|(row, th)| {
            let m = dot(th, x).exp();
            row.iter().map(|v| m * v).collect()
        })
        .collect();
    Ok(EndogeneityReport {
        x: x.to_vec(),
        radius: spectral_radius(&matrix),
        baseline_radius: spectral_radius(&norms),
        matrix,
    })
}

/// Endogeneity at every point of a grid of state vectors.
pub fn endogeneity_grid(params: &HawkesParams, grid: &[Vec<f64>]) -> Result<Vec<EndogeneityReport>> {
    grid.iter().map(|x| endogeneity(params, x)).collect()
}

/// Spectral radius of a square nonnegative matrix: closed form up to 2x2,
/// power iteration on `M + I` otherwise (the shift keeps the Perron root
/// strictly dominant).
pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 0.0,
        1 => m[0][0].abs(),
        2 => {
            let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
            let half_trace = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                (half_trace + s).abs().max((half_trace - s).abs())
            } else {
                (half_trace * half_trace - disc).sqrt()
            }
        }
        n => {
            let mut v = vec![1.0 / n as f64; n];
            let mut lambda = 0.0;
            for _ in 0..1_000_000 {
                let mut w: Vec<f64> = (0..n).map(|i| v[i] + dot(&m[i], &v)).collect();
                let norm: f64 = w.iter().sum();
                if norm == 0.0 {
                    return 0.0;
                }
                w.iter_mut().for_each(|x| *x /= norm);
                let next = norm - 1.0;
                let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = w;
                if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) && delta <= 1e-12 {
                    lambda = next;
                    break;
                }
                lambda = next;
            }
            lambda.max(0.0)
        }
    }
}

/// Radius grid as CSV: `x_1..x_dx,radius,baseline_radius`.
pub fn write_endogeneity_csv<W: Write>(reports: &[EndogeneityReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dx = reports.first().map_or(0, |r| r.x.len());
    let mut header: Vec<String> = (1..=dx).map(|c| format!("x_{c}")).collect();
    header.push("radius".into());
    header.push("baseline_radius".into());
    w.write_record(&header)?;
    for r in reports {
        let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        row.push(r.radius.to_string());
        row.push(r.baseline_radius.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// How the imbalance benchmark maps the imbalance sign to a type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceRule {
    /// State column holding the imbalance.
    pub column: usize,
    /// Type predicted when the imbalance is negative (0-based).
    pub negative: usize,
    /// Type predicted when it is positive.
    pub positive: usize,
}

impl ImbalanceRule {
    /// Market orders: bid (first type) on negative imbalance, ask otherwise.
    pub fn market(column: usize) -> Self {
        Self {
            column,
            negative: 0,
            positive: 1,
        }
    }

    /// Price moves: down (second type) on negative imbalance, up otherwise.
    pub fn aggressive(column: usize) -> Self {
        Self {
            column,
            negative: 1,
            positive: 0,
        }
    }

    fn predict(&self, imbalance: f64) -> usize {
        if imbalance < 0.0 {
            self.negative
        } else if imbalance > 0.0 {
            self.positive
        } else {
            self.negative.min(self.positive)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub truth: Vec<usize>,
    pub model: Vec<usize>,
    /// `None` for the first event.
    pub last: Vec<Option<usize>>,
    pub imbalance: Option<Vec<usize>>,
    pub accuracy_model: f64,
    /// Over events with a predecessor.
    pub accuracy_last: f64,
    pub accuracy_imbalance: Option<f64>,
    /// `accuracy_model - accuracy_last`.
    pub excess_vs_last: f64,
}

/// Predict every event's type as the argmax of `lambda^e(t-)` (ties to the
/// smallest type) and score it against the `Last` and, when `rule` is
/// given, `Imbalance` benchmarks. Co-timed events are allowed; they share
/// the intensity just before their common time.
pub fn predict_next_type(
    params: &HawkesParams,
    events: &EventStream,
    state: &StateTrajectory,
    rule: Option<ImbalanceRule>,
) -> Result<PredictionOutcome> {
    params.validate()?;
    crate::timeline::check_horizons(events, state)?;
    let d = params.nu.len();
    events.check_types(d)?;
    if state.n_covariates() != params.shape().n_covariates {
        return Err(Error::DimensionMismatch(format!(
            "state has {} covariates, parameters expect {}",
            state.n_covariates(),
            params.shape().n_covariates
        )));
    }
    if let Some(r) = rule {
        if r.column >= state.n_covariates() {
            return Err(Error::MissingCovariate(format!(
                "imbalance column {} requested but the state has {} columns",
                r.column + 1,
                state.n_covariates()
            )));
        }
        if r.negative >= d || r.positive >= d {
            return Err(Error::InvalidOption("imbalance rule names a type outside the model".into()));
        }
    }
    let evs = events.events();
    let mut inc = IncrementalIntensity::new(params);
    let mut model = Vec::with_capacity(evs.len());
    let mut imbalance = rule.map(|_| Vec::with_capacity(evs.len()));
    let mut i = 0;
    while i < evs.len() {
        let t = evs[i].time;
        let group_end = i + evs[i..].iter().take_while(|ev| ev.time == t).count();
        inc.advance_to(t);
        let x = state.value_before(t);
        let lam: Vec<f64> = inc
            .hawkes()
            .iter()
            .zip(&params.theta)
            .map(|(h, th)| h * dot(th, x).exp())
            .collect();
        let mut best = 0;
        for (e, l) in lam.iter().enumerate() {
            if *l > lam[best] {
                best = e;
            }
        }
        for _ in i..group_end {
            model.push(best);
            if let (Some(v), Some(r)) = (imbalance.as_mut(), rule) {
                v.push(r.predict(x[r.column]));
            }
        }
        for ev in &evs[i..group_end] {
            inc.absorb(ev.kind);
        }
        i = group_end;
    }
    let truth: Vec<usize> = evs.iter().map(|ev| ev.kind).collect();
    let last: Vec<Option<usize>> = std::iter::once(None)
        .chain(truth.iter().take(truth.len().saturating_sub(1)).map(|k| Some(*k)))
        .take(truth.len())
        .collect();
    let accuracy = |pred: &[usize]| -> f64 {
        if truth.is_empty() {
            return f64::NAN;
        }
        pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
    };
    let accuracy_model = accuracy(&model);
    let accuracy_last = if truth.len() < 2 {
        f64::NAN
    } else {
        last.iter().zip(&truth).filter(|(p, t)| **p == Some(**t)).count() as f64 / (truth.len() - 1) as f64
    };
    let accuracy_imbalance = imbalance.as_deref().map(accuracy);
    Ok(PredictionOutcome {
        excess_vs_last: accuracy_model - accuracy_last,
        truth,
        model,
        last,
        imbalance,
        accuracy_model,
        accuracy_last,
        accuracy_imbalance,
    })
}

/// Accuracy table as CSV: `method,accuracy,excess_vs_last`.
pub fn write_prediction_csv<W: Write>(outcome: &PredictionOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "accuracy", "excess_vs_last"])?;
    let mut rows = vec![("Model", outcome.accuracy_model), ("Last", outcome.accuracy_last)];
    if let Some(a) = outcome.accuracy_imbalance {
        rows.push(("Imbalance", a));
    }
    for (name, acc) in rows {
        w.write_record([name.to_string(), acc.to_string(), (acc - outcome.accuracy_last).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical rate of events of one type per covariate bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedIntensity {
    /// Bin edges; bin `b` is `[edges[b], edges[b + 1])`, the last one closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub occupation: Vec<f64>,
    /// `counts / occupation`, `None` for bins the covariate never visits.
    pub rate: Vec<Option<f64>>,
}

/// Events of type `kind` (all types when `None`) counted by the pre-event
/// value of covariate `column`, divided by the time the covariate spends
/// in each bin.
pub fn empirical_intensity_by_state(
    events: &EventStream,
    state: &StateTrajectory,
    column: usize,
    kind: Option<usize>,
    edges: &[f64],
) -> Result<BinnedIntensity> {
    crate::timeline::check_horizons(events, state)?;
    if column >= state.n_covariates() {
        return Err(Error::MissingCovariate(format!("column {} not in state", column + 1)));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidOption("bin edges must be strictly increasing, at least two".into()));
    }
    let nb = edges.len() - 1;
    let bin = |v: f64| -> Option<usize> {
        if v < edges[0] || v > edges[nb] {
            return None;
        }
        Some(edges.partition_point(|&e| e <= v).saturating_sub(1).min(nb - 1))
    };
    let mut counts = vec![0usize; nb];
    let mut occupation = vec![0.0; nb];
    for j in 0..state.n_segments() {
        if let Some(b) = bin(state.value(j)[column]) {
            occupation[b] += state.segment_len(j);
        }
    }
    for ev in events.events() {
        if kind.is_some_and(|k| k != ev.kind) {
            continue;
        }
        if let Some(b) = bin(state.value_before(ev.time)[column]) {
            counts[b] += 1;
        }
    }
    let rate = counts
        .iter()
        .zip(&occupation)
        .map(|(c, o)| if *o > 0.0 { Some(*c as f64 / o) } else { None })
        .collect();
    Ok(BinnedIntensity {
        edges: edges.to_vec(),
        counts,
        occupation,
        rate,
    })
}

/// Binned rates as CSV: `bin_lo,bin_hi,count,occupation_s,rate`, empty rate
/// for unvisited bins.
pub fn write_binned_intensity_csv<W: Write>(b: &BinnedIntensity, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count", "occupation_s", "rate"])?;
    for i in 0..b.counts.len() {
        w.write_record([
            b.edges[i].to_string(),
            b.edges[i + 1].to_string(),
            b.counts[i].to_string(),
            b.occupation[i].to_string(),
            b.rate[i].map_or(String::new(), |r| r.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
