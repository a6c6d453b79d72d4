//! Domain types shared by every other module: model dimensions, parameter
//! containers, event streams, state trajectories and fit results.
//!
//! Event types are 0-based everywhere in the library. The file formats in
//! [`crate::data`] use 1-based types and convert on the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a model: event types, exponential terms per kernel and
/// state covariates. `n_covariates == 0` is the standard Hawkes process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_types: usize,
    pub n_exp: usize,
    pub n_covariates: usize,
}

impl ModelShape {
    pub fn new(n_types: usize, n_exp: usize, n_covariates: usize) -> Result<Self> {
        if n_types == 0 {
            return Err(Error::InvalidShape("at least one event type is required".into()));
        }
        if n_exp == 0 {
            return Err(Error::InvalidShape(
                "at least one exponential term per kernel is required".into(),
            ));
        }
        Ok(Self {
            n_types,
            n_exp,
            n_covariates,
        })
    }

    /// Free parameter count of the full model: `d_e·(1 + 2·d_e·d_n + d_x)`.
    pub fn n_params(&self) -> usize {
        self.n_types * (1 + 2 * self.n_types * self.n_exp + self.n_covariates)
    }
}

/// Parameters of one coordinate `e`: everything its log-likelihood term
/// depends on. Kernel arrays are indexed `[source type][term]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateParams {
    pub nu: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

impl CoordinateParams {
    pub fn n_types(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_exp(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    /// Flat layout used by the optimizer: `[nu, alpha.., beta.., theta..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.n_types() * self.n_exp() + self.theta.len());
        v.push(self.nu);
        v.extend(self.alpha.iter().flatten());
        v.extend(self.beta.iter().flatten());
        v.extend(&self.theta);
        v
    }

    pub fn from_flat(flat: &[f64], n_types: usize, n_exp: usize, n_covariates: usize) -> Self {
        let block = n_types * n_exp;
        debug_assert_eq!(flat.len(), 1 + 2 * block + n_covariates);
        let rows = |off: usize| {
            (0..n_types)
                .map(|src| flat[off + src * n_exp..off + (src + 1) * n_exp].to_vec())
                .collect()
        };
        Self {
            nu: flat[0],
            alpha: rows(1),
            beta: rows(1 + block),
            theta: flat[1 + 2 * block..].to_vec(),
        }
    }

    /// Sort the exponential terms of every kernel jointly in `(alpha, beta)`
    /// by decreasing `beta`.
    pub fn canonicalize(&mut self) {
        for (a, b) in self.alpha.iter_mut().zip(self.beta.iter_mut()) {
            let mut terms: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
            terms.sort_by(|x, y| y.1.total_cmp(&x.1));
            for (n, (an, bn)) in terms.into_iter().enumerate() {
                a[n] = an;
                b[n] = bn;
            }
        }
    }
}

/// Full parameter set `(nu, alpha, beta, theta)`.
///
/// `alpha[e][e2][n]` and `beta[e][e2][n]` describe the `n`-th exponential
/// term of the kernel by which events of type `e2` excite type `e`;
/// `theta[e]` has one entry per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub nu: Vec<f64>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<f64>>,
}

impl HawkesParams {
    /// Build and validate.
    pub fn new(
        nu: Vec<f64>,
        alpha: Vec<Vec<Vec<f64>>>,
        beta: Vec<Vec<Vec<f64>>>,
        theta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = Self {
            nu,
            alpha,
            beta,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Single-term kernels from `d_e × d_e` matrices.
    pub fn single_exp(
        nu: Vec<f64>,
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let lift = |m: Vec<Vec<f64>>| -> Vec<Vec<Vec<f64>>> {
            m.into_iter()
                .map(|row| row.into_iter().map(|v| vec![v]).collect())
                .collect()
        };
        Self::new(nu, lift(alpha), lift(beta), theta)
    }

    /// All-zero excitation: a (state-modulated) Poisson process.
    pub fn poisson(nu: Vec<f64>, n_covariates: usize) -> Self {
        let d = nu.len();
        Self {
            alpha: vec![vec![vec![0.0]; d]; d],
            beta: vec![vec![vec![1.0]; d]; d],
            theta: vec![vec![0.0; n_covariates]; d],
            nu,
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_types: self.nu.len(),
            n_exp: self
                .alpha
                .first()
                .and_then(|r| r.first())
                .map_or(0, Vec::len),
            n_covariates: self.theta.first().map_or(0, Vec::len),
        }
    }

    /// Check dimensions, positivity and the strict decreasing order of the
    /// decay rates within each kernel. The error names the offending index.
    pub fn validate(&self) -> Result<()> {
        let d = self.nu.len();
        if d == 0 {
            return Err(Error::InvalidShape("nu is empty".into()));
        }
        let shape = self.shape();
        let dims = |name: &'static str, arr: &Vec<Vec<Vec<f64>>>| -> Result<()> {
            if arr.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} rows, expected {d}",
                    arr.len()
                )));
            }
            for (e, row) in arr.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "{name}[{e}] has {} columns, expected {d}",
                        row.len()
                    )));
                }
                for (e2, terms) in row.iter().enumerate() {
                    if terms.len() != shape.n_exp || terms.is_empty() {
                        return Err(Error::DimensionMismatch(format!(
                            "{name}[{e}][{e2}] has {} terms, expected {}",
                            terms.len(),
                            shape.n_exp
                        )));
                    }
                }
            }
            Ok(())
        };
        dims("alpha", &self.alpha)?;
        dims("beta", &self.beta)?;
        if self.theta.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} rows, expected {d}",
                self.theta.len()
            )));
        }
        for (e, th) in self.theta.iter().enumerate() {
            if th.len() != shape.n_covariates {
                return Err(Error::DimensionMismatch(format!(
                    "theta[{e}] has {} entries, expected {}",
                    th.len(),
                    shape.n_covariates
                )));
            }
            if let Some(j) = th.iter().position(|v| !v.is_finite()) {
                return Err(invalid("theta", format!("[{e}][{j}]"), "must be finite"));
            }
        }
        for (e, &nu) in self.nu.iter().enumerate() {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(invalid("nu", format!("[{e}]"), format!("must be > 0, got {nu}")));
            }
        }
        for e in 0..d {
            for e2 in 0..d {
                for n in 0..shape.n_exp {
                    let a = self.alpha[e][e2][n];
                    let b = self.beta[e][e2][n];
                    if !(a >= 0.0 && a.is_finite()) {
                        return Err(invalid(
                            "alpha",
                            format!("[{e}][{e2}][{n}]"),
                            format!("must be >= 0, got {a}"),
                        ));
                    }
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(invalid(
                            "beta",
                            format!("[{e}][{e2}][{n}]"),
                            format!("must be > 0, got {b}"),
                        ));
                    }
                    if n > 0 && self.beta[e][e2][n - 1] <= b {
                        return Err(invalid(
                            "beta",
                            format!("[{e}][{e2}][{n}]"),
                            format!(
                                "decay rates must be strictly decreasing within a kernel ({} <= {b})",
                                self.beta[e][e2][n - 1]
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn coordinate(&self, e: usize) -> CoordinateParams {
        CoordinateParams {
            nu: self.nu[e],
            alpha: self.alpha[e].clone(),
            beta: self.beta[e].clone(),
            theta: self.theta[e].clone(),
        }
    }

    pub fn set_coordinate(&mut self, e: usize, c: CoordinateParams) {
        self.nu[e] = c.nu;
        self.alpha[e] = c.alpha;
        self.beta[e] = c.beta;
        self.theta[e] = c.theta;
    }

    pub fn from_coordinates(coords: Vec<CoordinateParams>) -> Self {
        let mut p = Self {
            nu: Vec::with_capacity(coords.len()),
            alpha: Vec::with_capacity(coords.len()),
            beta: Vec::with_capacity(coords.len()),
            theta: Vec::with_capacity(coords.len()),
        };
        for c in coords {
            p.nu.push(c.nu);
            p.alpha.push(c.alpha);
            p.beta.push(c.beta);
            p.theta.push(c.theta);
        }
        p
    }

    /// Sort every kernel's terms by decreasing decay rate.
    pub fn canonicalize(&mut self) {
        for e in 0..self.nu.len() {
            let mut c = self.coordinate(e);
            c.canonicalize();
            self.set_coordinate(e, c);
        }
    }

    /// `sum_n alpha / beta` for each `(e, e2)`: the kernel L1 norms.
    pub fn kernel_norms(&self) -> Vec<Vec<f64>> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(ar, br)| {
                ar.iter()
                    .zip(br)
                    .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a / b).sum())
                    .collect()
            })
            .collect()
    }
}

fn invalid(name: &'static str, index: String, reason: impl Into<String>) -> Error {
    Error::InvalidParams {
        name,
        index,
        reason: reason.into(),
    }
}

/// Gradient of the log-likelihood, laid out like [`HawkesParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGradient {
    pub nu: Vec<f64>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<f64>>,
}

/// A timestamped event. `kind` is the 0-based event type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: usize,
}

/// Events observed on `[0, horizon]`, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    horizon: f64,
    events: Vec<Event>,
    strict: bool,
}

impl EventStream {
    /// Validates ordering and range `(0, horizon]`. Ties are accepted; the
    /// `strict` flag records whether any were present.
    pub fn new(horizon: f64, events: Vec<Event>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidEvents(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let mut strict = true;
        for (i, ev) in events.iter().enumerate() {
            if !(ev.time > 0.0 && ev.time <= horizon) {
                return Err(Error::InvalidEvents(format!(
                    "event {i} at t = {} outside (0, {horizon}]",
                    ev.time
                )));
            }
            if i > 0 {
                let prev = events[i - 1].time;
                if ev.time < prev {
                    return Err(Error::InvalidEvents(format!(
                        "event {i} at t = {} precedes event {} at t = {prev}",
                        ev.time,
                        i - 1
                    )));
                }
                if ev.time == prev {
                    strict = false;
                }
            }
        }
        Ok(Self {
            horizon,
            events,
            strict,
        })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(horizon, Vec::new())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// True when all timestamps are distinct.
    pub fn is_strict(&self) -> bool {
        self.strict
    }

    /// Number of events of each type in `0..n_types`.
    pub fn counts(&self, n_types: usize) -> Vec<usize> {
        let mut c = vec![0; n_types];
        for ev in &self.events {
            if ev.kind < n_types {
                c[ev.kind] += 1;
            }
        }
        c
    }

    /// Largest type index + 1.
    pub fn n_types_observed(&self) -> usize {
        self.events.iter().map(|e| e.kind + 1).max().unwrap_or(0)
    }

    /// Check that every type lies in `0..n_types`.
    pub fn check_types(&self, n_types: usize) -> Result<()> {
        match self.events.iter().position(|e| e.kind >= n_types) {
            Some(i) => Err(Error::InvalidEvents(format!(
                "event {i} has type {} but the model has {n_types} types",
                self.events[i].kind + 1
            ))),
            None => Ok(()),
        }
    }

    /// Fail unless timestamps are strictly increasing.
    pub fn require_strict(&self) -> Result<()> {
        if self.strict {
            return Ok(());
        }
        let i = self
            .events
            .windows(2)
            .position(|w| w[0].time == w[1].time)
            .map_or(0, |i| i + 1);
        Err(Error::DuplicateTimestamp {
            index: i,
            time: self.events[i].time,
        })
    }
}

/// A piecewise-constant covariate path on `[0, T]`.
///
/// Segment `j` is `[breakpoints[j], breakpoints[j + 1])` with value `value(j)`.
/// At an event time `t` the model uses the pre-event value `X_{t-}`, given by
/// [`StateTrajectory::value_before`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    n_covariates: usize,
}

impl StateTrajectory {
    /// `values[j]` holds the covariate vector on segment `j`; there must be
    /// exactly one fewer value than breakpoints.
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>, n_covariates: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidState("need at least the breakpoints 0 and T".into()));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidState(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        if let Some(i) = breakpoints.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidState(format!(
                "breakpoints not strictly increasing at index {}",
                i + 1
            )));
        }
        if !breakpoints[breakpoints.len() - 1].is_finite() {
            return Err(Error::InvalidState("horizon must be finite".into()));
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(Error::InvalidState(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        let mut flat = Vec::with_capacity(values.len() * n_covariates);
        for (j, v) in values.iter().enumerate() {
            if v.len() != n_covariates {
                return Err(Error::InvalidState(format!(
                    "value {j} has {} components, expected {n_covariates}",
                    v.len()
                )));
            }
            if let Some(c) = v.iter().position(|x| !(-1.0..=1.0).contains(x)) {
                return Err(Error::InvalidState(format!(
                    "value {j} component {c} = {} outside [-1, 1]",
                    v[c]
                )));
            }
            flat.extend_from_slice(v);
        }
        Ok(Self {
            breakpoints,
            values: flat,
            n_covariates,
        })
    }

    /// A single segment `[0, T]` with constant value.
    pub fn constant(horizon: f64, value: Vec<f64>) -> Result<Self> {
        let d = value.len();
        Self::new(vec![0.0, horizon], vec![value], d)
    }

    /// The empty state (`d_x = 0`) on `[0, T]`.
    pub fn trivial(horizon: f64) -> Result<Self> {
        Self::constant(horizon, Vec::new())
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_covariates..(j + 1) * self.n_covariates]
    }

    pub fn segment_len(&self, j: usize) -> f64 {
        self.breakpoints[j + 1] - self.breakpoints[j]
    }

    /// Index of the segment `[tau_j, tau_{j+1})` containing `t`; `t = T`
    /// maps to the last segment.
    pub fn segment_at(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.n_segments() - 1)
    }

    /// Index of the segment whose left end is `< t` and right end is `>= t`,
    /// i.e. the segment providing the left limit at `t`. `t = 0` maps to 0.
    pub fn segment_before(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b < t);
        k.saturating_sub(1).min(self.n_segments() - 1)
    }

    /// `X_{t-}`.
    pub fn value_before(&self, t: f64) -> &[f64] {
        self.value(self.segment_before(t))
    }

    /// `exp(<theta, x_j>)` for every segment.
    pub fn weights(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.n_covariates);
        (0..self.n_segments())
            .map(|j| dot(theta, self.value(j)).exp())
            .collect()
    }

    /// Keep only the listed covariate columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.n_covariates) {
            return Err(Error::DimensionMismatch(format!(
                "covariate column {c} requested but the state has {}",
                self.n_covariates
            )));
        }
        let values = (0..self.n_segments())
            .map(|j| columns.iter().map(|&c| self.value(j)[c]).collect())
            .collect();
        Self::new(self.breakpoints.clone(), values, columns.len())
    }

    /// Insert extra breakpoints without changing the path.
    pub fn refine(&self, extra: &[f64]) -> Result<Self> {
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .chain(extra.iter().copied().filter(|&t| t > 0.0 && t < self.horizon()))
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let values = bps[..bps.len() - 1]
            .iter()
            .map(|&t| self.value(self.segment_at(t)).to_vec())
            .collect();
        Self::new(bps, values, self.n_covariates)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Estimation method that produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "EM")]
    Em,
}

/// Outcome of an estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub shape: ModelShape,
    pub params: HawkesParams,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    pub per_coordinate_loglik: Vec<f64>,
    pub method: FitMethod,
    pub starts_used: usize,
    pub converged: bool,
    pub elapsed_secs: f64,
    /// Optimizer iterations (MLE, summed over coordinates of the best
    /// starts) or EM sweeps.
    pub iterations: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// `2k - 2 log L`.
pub fn aic(n_params: usize, log_likelihood: f64) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn shape_rejects_zero_dims() {
        assert!(ModelShape::new(0, 1, 0).is_err());
        assert!(ModelShape::new(1, 0, 0).is_err());
        assert!(ModelShape::new(1, 1, 0).is_ok());
        assert_eq!(ModelShape::new(2, 1, 2).unwrap().n_params(), 14);
    }

    #[test]
    fn validation_names_offending_index() {
        let mut p = table1();
        p.nu[1] = 0.0;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("nu[1]"), "{msg}");

        let mut p = table1();
        p.beta[0][1][0] = -1.0;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("beta[0][1][0]"), "{msg}");

        let mut p = table1();
        p.alpha[1][0][0] = -0.1;
        assert!(p.validate().unwrap_err().to_string().contains("alpha[1][0][0]"));
    }

    #[test]
    fn validation_enforces_beta_order() {
        let p = HawkesParams::new(
            vec![1.0],
            vec![vec![vec![0.1, 0.1]]],
            vec![vec![vec![1.0, 2.0]]],
            vec![vec![]],
        );
        let msg = p.unwrap_err().to_string();
        assert!(msg.contains("beta[0][0][1]") && msg.contains("decreasing"), "{msg}");
    }

    #[test]
    fn canonicalize_sorts_terms_jointly() {
        let mut p = HawkesParams {
            nu: vec![1.0],
            alpha: vec![vec![vec![0.1, 0.2, 0.3]]],
            beta: vec![vec![vec![1.0, 10.0, 5.0]]],
            theta: vec![vec![]],
        };
        p.canonicalize();
        assert_eq!(p.beta[0][0], vec![10.0, 5.0, 1.0]);
        assert_eq!(p.alpha[0][0], vec![0.2, 0.3, 0.1]);
        p.validate().unwrap();
    }

    #[test]
    fn flat_round_trip() {
        let p = table1();
        let c = p.coordinate(1);
        let back = CoordinateParams::from_flat(&c.to_flat(), 2, 1, 2);
        assert_eq!(c, back);
    }

    #[test]
    fn event_stream_flags_ties() {
        let evs = vec![
            Event { time: 1.0, kind: 0 },
            Event { time: 1.0, kind: 1 },
            Event { time: 2.0, kind: 0 },
        ];
        let s = EventStream::new(3.0, evs).unwrap();
        assert!(!s.is_strict());
        assert!(matches!(
            s.require_strict(),
            Err(Error::DuplicateTimestamp { index: 1, .. })
        ));
        assert!(EventStream::new(3.0, vec![Event { time: 0.0, kind: 0 }]).is_err());
        assert!(EventStream::new(3.0, vec![Event { time: 3.5, kind: 0 }]).is_err());
    }

    #[test]
    fn state_left_limit_convention() {
        let s = StateTrajectory::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            1,
        )
        .unwrap();
        assert_eq!(s.value_before(1.0), &[-1.0]);
        assert_eq!(s.value_before(1.5), &[0.0]);
        assert_eq!(s.value_before(3.0), &[1.0]);
        assert_eq!(s.segment_at(1.0), 1);
        assert_eq!(s.segment_at(3.0), 2);
        assert!(StateTrajectory::new(vec![0.0, 1.0], vec![vec![1.5]], 1).is_err());
        assert!(StateTrajectory::new(vec![0.0, 1.0, 1.0], vec![vec![0.0], vec![0.0]], 1).is_err());
    }

    #[test]
    fn refine_keeps_path() {
        let s = StateTrajectory::new(vec![0.0, 2.0, 4.0], vec![vec![0.5], vec![-0.5]], 1).unwrap();
        let r = s.refine(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(r.breakpoints(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        for t in [0.5, 1.5, 2.5, 3.5, 4.0] {
            assert_eq!(r.value_before(t), s.value_before(t));
        }
    }

    #[test]
    fn aic_formula() {
        assert_eq!(aic(14, -100.0), 228.0);
    }
}
