//! Exact log-likelihood of a sample and its analytic gradient.
//!
//! For coordinate `e` the log-likelihood splits into
//!
//! ```text
//! L^e = - nu_e ∫ w(s) ds - sum_{e',n} (alpha/beta) sum_i S^{e e' n}(i)
//!       + sum_i log(nu_e + sum_{e',n} alpha R^{e e' n}(i))
//!       + sum_i <theta^e, X_{t_i-}>
//! ```
//!
//! with `w(s) = exp(<theta^e, X_s>)`. `R` is the decayed count of past
//! type-`e'` events seen from each type-`e` event (forward recursion);
//! `S` is `beta` times the state-weighted tail integral of the kernel started
//! at each type-`e'` event (backward recursion over the merged timeline).
//! Both, and their derivatives in `beta` and `theta`, cost O(k + N) per
//! kernel term.

use crate::error::{Error, Result};
use crate::intensity::decay;
use crate::model::{dot, CoordinateParams, EventStream, HawkesParams, ParamGradient, StateTrajectory};
use crate::timeline::MergedTimeline;

/// Decayed values below this are flushed to zero in the recursions.
const FLUSH: f64 = 1e-300;

/// Total and per-coordinate log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    pub per_coordinate: Vec<f64>,
}

/// Events, state and their merged timeline, prepared once and evaluated
/// under many parameter values.
#[derive(Debug, Clone)]
pub struct Sample {
    events: EventStream,
    state: StateTrajectory,
    timeline: MergedTimeline,
    by_type: Vec<Vec<usize>>,
    n_types: usize,
}

impl Sample {
    pub fn new(events: EventStream, state: StateTrajectory, n_types: usize) -> Result<Self> {
        if n_types == 0 {
            return Err(Error::InvalidShape("at least one event type is required".into()));
        }
        events.check_types(n_types)?;
        let timeline = MergedTimeline::build(&events, &state)?;
        let mut by_type = vec![Vec::new(); n_types];
        for (i, ev) in events.events().iter().enumerate() {
            by_type[ev.kind].push(i);
        }
        Ok(Self {
            events,
            state,
            timeline,
            by_type,
            n_types,
        })
    }

    pub fn events(&self) -> &EventStream {
        &self.events
    }

    pub fn state(&self) -> &StateTrajectory {
        &self.state
    }

    pub fn timeline(&self) -> &MergedTimeline {
        &self.timeline
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn horizon(&self) -> f64 {
        self.events.horizon()
    }

    /// Event indices of type `e`, in time order.
    pub fn events_of_type(&self, e: usize) -> &[usize] {
        &self.by_type[e]
    }

    pub fn check_params(&self, params: &HawkesParams) -> Result<()> {
        params.validate()?;
        let shape = params.shape();
        if shape.n_types != self.n_types {
            return Err(Error::DimensionMismatch(format!(
                "parameters have {} event types, sample has {}",
                shape.n_types, self.n_types
            )));
        }
        if shape.n_covariates != self.state.n_covariates() {
            return Err(Error::DimensionMismatch(format!(
                "parameters have {} covariates, state has {}",
                shape.n_covariates,
                self.state.n_covariates()
            )));
        }
        Ok(())
    }

    pub fn log_likelihood(&self, params: &HawkesParams) -> Result<LogLikelihood> {
        self.check_params(params)?;
        let per_coordinate: Vec<f64> = (0..self.n_types)
            .map(|e| self.coordinate_log_likelihood(e, &params.coordinate(e)))
            .collect();
        Ok(LogLikelihood {
            total: per_coordinate.iter().sum(),
            per_coordinate,
        })
    }

    pub fn gradient(&self, params: &HawkesParams) -> Result<ParamGradient> {
        self.check_params(params)?;
        let shape = params.shape();
        let mut g = ParamGradient {
            nu: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            theta: Vec::new(),
        };
        for e in 0..self.n_types {
            let (_, flat) = self.coordinate_value_and_gradient(e, &params.coordinate(e));
            let c = CoordinateParams::from_flat(&flat, shape.n_types, shape.n_exp, shape.n_covariates);
            g.nu.push(c.nu);
            g.alpha.push(c.alpha);
            g.beta.push(c.beta);
            g.theta.push(c.theta);
        }
        Ok(g)
    }

    /// `L^e` for one coordinate. Parameters are not validated; positivity of
    /// `nu` and `beta` is assumed.
    pub fn coordinate_log_likelihood(&self, e: usize, cp: &CoordinateParams) -> f64 {
        let cache = RecursionCache::build(self, e, cp, false);
        cache.value(self, cp).0
    }

    /// `L^e` and its gradient in the flat layout of
    /// [`CoordinateParams::to_flat`].
    pub fn coordinate_value_and_gradient(&self, e: usize, cp: &CoordinateParams) -> (f64, Vec<f64>) {
        let cache = RecursionCache::build(self, e, cp, true);
        cache.value_and_gradient(self, cp)
    }

    /// `lambda^{H,e}(t_i-)` for every event `i` of type `e`.
    pub fn hawkes_at_events(&self, e: usize, cp: &CoordinateParams) -> Vec<f64> {
        let cache = RecursionCache::build(self, e, cp, false);
        cache.hawkes_at_events(cp)
    }
}

/// Recursion coefficients for one coordinate `e`.
///
/// Block index `b = e' * n_exp + n`. `r[b][i]` runs over the events of type
/// `e`; `s[b][i]` runs over the events of type `e'`. `s_theta[b]` stores a
/// `d_x`-vector per event, flattened.
#[derive(Debug, Clone)]
pub struct RecursionCache {
    pub coordinate: usize,
    pub n_exp: usize,
    pub r: Vec<Vec<f64>>,
    pub r_beta: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub s_beta: Vec<Vec<f64>>,
    pub s_theta: Vec<Vec<f64>>,
    /// `exp(<theta^e, x_j>)` per state segment.
    pub weights: Vec<f64>,
}

impl RecursionCache {
    pub fn build(sample: &Sample, e: usize, cp: &CoordinateParams, with_gradient: bool) -> Self {
        let n_types = sample.n_types;
        let n_exp = cp.n_exp();
        let weights = sample.state.weights(&cp.theta);
        let blocks = n_types * n_exp;
        let mut cache = Self {
            coordinate: e,
            n_exp,
            r: Vec::with_capacity(blocks),
            r_beta: Vec::with_capacity(blocks),
            s: Vec::with_capacity(blocks),
            s_beta: Vec::with_capacity(blocks),
            s_theta: Vec::with_capacity(blocks),
            weights,
        };
        for e2 in 0..n_types {
            for n in 0..n_exp {
                let beta = cp.beta[e2][n];
                let (r, rb) = forward_r(sample, e, e2, beta, with_gradient);
                cache.r.push(r);
                cache.r_beta.push(rb);
                let (s, sb, st) = backward_s(sample, e2, beta, &cache.weights, with_gradient);
                cache.s.push(s);
                cache.s_beta.push(sb);
                cache.s_theta.push(st);
            }
        }
        cache
    }

    fn hawkes_at_events(&self, cp: &CoordinateParams) -> Vec<f64> {
        let m = self.r.first().map_or(0, Vec::len);
        let mut lam = vec![cp.nu; m];
        for (b, r) in self.r.iter().enumerate() {
            let a = cp.alpha[b / self.n_exp][b % self.n_exp];
            if a != 0.0 {
                for (l, ri) in lam.iter_mut().zip(r) {
                    *l += a * ri;
                }
            }
        }
        lam
    }

    /// Returns `(L^e, lambda^H at events)`.
    fn value(&self, sample: &Sample, cp: &CoordinateParams) -> (f64, Vec<f64>) {
        let state = &sample.state;
        let occupation: f64 = (0..state.n_segments())
            .map(|j| state.segment_len(j) * self.weights[j])
            .sum();
        let mut ll = -cp.nu * occupation;
        for (b, s) in self.s.iter().enumerate() {
            let (e2, n) = (b / self.n_exp, b % self.n_exp);
            let a = cp.alpha[e2][n];
            if a != 0.0 {
                ll -= a / cp.beta[e2][n] * s.iter().sum::<f64>();
            }
        }
        let lam = self.hawkes_at_events(cp);
        let own = &sample.by_type[self.coordinate];
        for (&idx, l) in own.iter().zip(&lam) {
            let x = state.value(sample.timeline.pre_event_state(idx));
            ll += l.ln() + dot(&cp.theta, x);
        }
        (ll, lam)
    }

    fn value_and_gradient(&self, sample: &Sample, cp: &CoordinateParams) -> (f64, Vec<f64>) {
        let (ll, lam) = self.value(sample, cp);
        let state = &sample.state;
        let n_types = sample.n_types;
        let n_exp = self.n_exp;
        let dx = state.n_covariates();
        let block = n_types * n_exp;
        let mut g = vec![0.0; 1 + 2 * block + dx];

        let inv_lam: Vec<f64> = lam.iter().map(|l| 1.0 / l).collect();
        let mut occupation = 0.0;
        let mut occupation_x = vec![0.0; dx];
        for j in 0..state.n_segments() {
            let wl = state.segment_len(j) * self.weights[j];
            occupation += wl;
            for (o, x) in occupation_x.iter_mut().zip(state.value(j)) {
                *o += wl * x;
            }
        }
        g[0] = -occupation + inv_lam.iter().sum::<f64>();

        let gtheta = 1 + 2 * block;
        for (c, o) in occupation_x.iter().enumerate() {
            g[gtheta + c] = -cp.nu * o;
        }
        for b in 0..block {
            let (e2, n) = (b / n_exp, b % n_exp);
            let a = cp.alpha[e2][n];
            let beta = cp.beta[e2][n];
            let s_sum: f64 = self.s[b].iter().sum();
            let sb_sum: f64 = self.s_beta[b].iter().sum();
            let r_term: f64 = self.r[b].iter().zip(&inv_lam).map(|(r, il)| r * il).sum();
            let rb_term: f64 = self.r_beta[b].iter().zip(&inv_lam).map(|(r, il)| r * il).sum();
            g[1 + b] = -s_sum / beta + r_term;
            g[1 + block + b] = -(a / beta) * (sb_sum - s_sum / beta) + a * rb_term;
            if a != 0.0 {
                let st = &self.s_theta[b];
                for c in 0..dx {
                    let sum: f64 = st.iter().skip(c).step_by(dx).sum();
                    g[gtheta + c] -= a / beta * sum;
                }
            }
        }
        for &idx in &sample.by_type[self.coordinate] {
            let x = state.value(sample.timeline.pre_event_state(idx));
            for (c, xc) in x.iter().enumerate() {
                g[gtheta + c] += xc;
            }
        }
        (ll, g)
    }
}

/// `R(i) = sum_{t_j^{e2} < t_i^e} exp(-beta (t_i^e - t_j^{e2}))` and its
/// `beta`-derivative, over the events of type `e`.
pub(crate) fn forward_r(sample: &Sample, e: usize, e2: usize, beta: f64, with_gradient: bool) -> (Vec<f64>, Vec<f64>) {
    let evs = sample.events.events();
    let own = &sample.by_type[e];
    let src = &sample.by_type[e2];
    let mut r = Vec::with_capacity(own.len());
    let mut rb = Vec::with_capacity(if with_gradient { own.len() } else { 0 });
    let (mut acc, mut acc_b, mut last) = (0.0f64, 0.0f64, 0.0f64);
    let (mut p, mut q) = (0, 0);
    while p < own.len() {
        // next event among the two sorted index lists
        let idx = if q < src.len() && src[q] < own[p] { src[q] } else { own[p] };
        let t = evs[idx].time;
        let dt = t - last;
        if acc != 0.0 {
            let f = decay(beta * dt);
            acc_b = f * (acc_b - dt * acc);
            acc *= f;
            if acc < FLUSH {
                acc = 0.0;
                acc_b = 0.0;
            }
        }
        last = t;
        if p < own.len() && own[p] == idx {
            r.push(acc);
            if with_gradient {
                rb.push(acc_b);
            }
            p += 1;
        }
        if q < src.len() && src[q] == idx {
            acc += 1.0;
            q += 1;
        }
    }
    (r, rb)
}

/// Backward recursion for `S(i) = beta ∫_{t_i}^T exp(-beta (s - t_i)) w(s) ds`
/// over the events of type `e2`, with its `beta` and `theta` derivatives.
fn backward_s(
    sample: &Sample,
    e2: usize,
    beta: f64,
    weights: &[f64],
    with_gradient: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let tl = &sample.timeline;
    let state = &sample.state;
    let dx = state.n_covariates();
    let src = &sample.by_type[e2];
    let m = src.len();
    let mut s = vec![0.0; m];
    let mut sb = if with_gradient { vec![0.0; m] } else { Vec::new() };
    let mut st = if with_gradient { vec![0.0; m * dx] } else { Vec::new() };
    let (mut s_next, mut sb_next) = (0.0, 0.0);
    let mut st_next = vec![0.0; dx];
    let mut local_th = vec![0.0; dx];
    for i in (0..m).rev() {
        let lo = tl.event_segment(src[i]);
        let hi = if i + 1 < m {
            tl.event_segment(src[i + 1])
        } else {
            tl.n_segments()
        };
        let (mut d, mut a) = (1.0f64, 0.0f64);
        let (mut local, mut local_b) = (0.0, 0.0);
        local_th.iter_mut().for_each(|v| *v = 0.0);
        let mut exhausted = false;
        for k in lo..hi {
            let len = tl.duration(k);
            let j = tl.state_index(k);
            let w = weights[j];
            let ed = decay(beta * len);
            let b_end = a + len;
            let mass = w * d * (1.0 - ed);
            local += mass;
            if with_gradient {
                local_b += w * d * (-a + b_end * ed);
                for (lt, x) in local_th.iter_mut().zip(state.value(j)) {
                    *lt += x * mass;
                }
            }
            d *= ed;
            a = b_end;
            if d < FLUSH {
                exhausted = true;
                break;
            }
        }
        if exhausted {
            d = 0.0;
        }
        let si = d * s_next + local;
        s[i] = si;
        if with_gradient {
            let sbi = d * (sb_next - a * s_next) + local_b;
            sb[i] = sbi;
            for c in 0..dx {
                let v = d * st_next[c] + local_th[c];
                st[i * dx + c] = v;
                st_next[c] = v;
            }
            sb_next = sbi;
        }
        s_next = si;
    }
    (s, sb, st)
}

/// `A(beta) = sum_j beta ∫_{t_j}^T exp(-beta (s - t_j)) w(s) ds` over the
/// events `j` of type `e2`, with its first and second derivatives in `beta`.
///
/// Per event, with `a, b` the segment ends measured from `t_j`,
/// `A_j = sum w (e^{-beta a} - e^{-beta b})`, so the `m`-th moment
/// `F_m = sum w (a^m e^{-beta a} - b^m e^{-beta b})` gives
/// `A = F_0`, `A' = -F_1`, `A'' = F_2`. Shifting the origin by the gap
/// `delta` to the next event mixes the moments binomially.
pub(crate) fn kernel_integral_moments(sample: &Sample, e2: usize, beta: f64, weights: &[f64]) -> (f64, f64, f64) {
    let tl = &sample.timeline;
    let src = &sample.by_type[e2];
    let m = src.len();
    let (mut f0, mut f1, mut f2) = (0.0f64, 0.0f64, 0.0f64);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for i in (0..m).rev() {
        let lo = tl.event_segment(src[i]);
        let hi = if i + 1 < m {
            tl.event_segment(src[i + 1])
        } else {
            tl.n_segments()
        };
        let (mut d, mut a) = (1.0f64, 0.0f64);
        let (mut l0, mut l1, mut l2) = (0.0, 0.0, 0.0);
        let mut exhausted = false;
        for k in lo..hi {
            let len = tl.duration(k);
            let w = weights[tl.state_index(k)];
            let ed = decay(beta * len);
            let b_end = a + len;
            let db = d * ed;
            l0 += w * (d - db);
            l1 += w * (a * d - b_end * db);
            l2 += w * (a * a * d - b_end * b_end * db);
            d = db;
            a = b_end;
            if d < FLUSH {
                exhausted = true;
                break;
            }
        }
        if exhausted {
            d = 0.0;
        }
        let g0 = d * f0 + l0;
        let g1 = d * (f1 + a * f0) + l1;
        let g2 = d * (f2 + 2.0 * a * f1 + a * a * f0) + l2;
        f0 = g0;
        f1 = g1;
        f2 = g2;
        t0 += g0;
        t1 += g1;
        t2 += g2;
    }
    (t0, -t1, t2)
}

/// `∫ lambda^{H,e}(s) ds` for the coordinate `cp` over each state segment (indexed like the
/// [`StateTrajectory`] segments).
pub(crate) fn hawkes_integrals_by_state(sample: &Sample, cp: &CoordinateParams) -> Vec<f64> {
    let tl = &sample.timeline;
    let evs = sample.events.events();
    let n_exp = cp.n_exp();
    let mut acc = vec![0.0f64; sample.n_types * n_exp];
    let mut out = vec![0.0; sample.state.n_segments()];
    for k in 0..tl.n_segments() {
        if let Some(i) = tl.opening_event(k) {
            let src = evs[i].kind;
            for v in &mut acc[src * n_exp..(src + 1) * n_exp] {
                *v += 1.0;
            }
        }
        let len = tl.duration(k);
        let mut integral = cp.nu * len;
        for (b, v) in acc.iter_mut().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let (src, n) = (b / n_exp, b % n_exp);
            let beta = cp.beta[src][n];
            let ed = decay(beta * len);
            integral += cp.alpha[src][n] * *v * (1.0 - ed) / beta;
            *v *= ed;
            if *v < FLUSH {
                *v = 0.0;
            }
        }
        out[tl.state_index(k)] += integral;
    }
    out
}

/// Log-likelihood of `params` on a sample with strictly increasing times.
pub fn log_likelihood(params: &HawkesParams, events: &EventStream, state: &StateTrajectory) -> Result<LogLikelihood> {
    let sample = Sample::new(events.clone(), state.clone(), params.nu.len())?;
    sample.log_likelihood(params)
}

/// Analytic gradient of [`log_likelihood`].
pub fn grad_log_likelihood(params: &HawkesParams, events: &EventStream, state: &StateTrajectory) -> Result<ParamGradient> {
    let sample = Sample::new(events.clone(), state.clone(), params.nu.len())?;
    sample.gradient(params)
}

/// Default event cap for [`brute_force_log_likelihood`].
pub const BRUTE_FORCE_CAP: usize = 5000;

/// Direct O(k²) evaluation used as a test oracle: intensities at events by
/// summing over the whole past, and the compensator integrated exactly on
/// each state segment, one past event at a time. Shares no code with the
/// recursions above.
///
/// Duplicate timestamps are accepted here: an event is excited by every
/// event before it in stream order, including co-timed ones, which is the
/// reading under which a duplicated timestamp makes the likelihood
/// unbounded.
pub fn brute_force_log_likelihood(
    params: &HawkesParams,
    events: &EventStream,
    state: &StateTrajectory,
    cap: Option<usize>,
) -> Result<LogLikelihood> {
    let cap = cap.unwrap_or(BRUTE_FORCE_CAP);
    if events.len() > cap {
        return Err(Error::OracleCapExceeded {
            cap,
            count: events.len(),
        });
    }
    params.validate()?;
    crate::timeline::check_horizons(events, state)?;
    let d = params.nu.len();
    events.check_types(d)?;
    let evs = events.events();
    let mut per_coordinate = vec![0.0; d];
    for (e, out) in per_coordinate.iter_mut().enumerate() {
        let mut ll = 0.0;
        for (i, ev) in evs.iter().enumerate().filter(|(_, ev)| ev.kind == e) {
            let mut lam = params.nu[e];
            for past in &evs[..i] {
                for (a, b) in params.alpha[e][past.kind].iter().zip(&params.beta[e][past.kind]) {
                    lam += a * (-b * (ev.time - past.time)).exp();
                }
            }
            ll += lam.ln() + dot(&params.theta[e], state.value_before(ev.time));
        }
        for j in 0..state.n_segments() {
            let (lo, hi) = (state.breakpoints()[j], state.breakpoints()[j + 1]);
            let w = dot(&params.theta[e], state.value(j)).exp();
            let mut integral = params.nu[e] * (hi - lo);
            for past in evs.iter().take_while(|p| p.time < hi) {
                let from = lo.max(past.time);
                for (a, b) in params.alpha[e][past.kind].iter().zip(&params.beta[e][past.kind]) {
                    integral += a / b * ((-b * (from - past.time)).exp() - (-b * (hi - past.time)).exp());
                }
            }
            ll -= w * integral;
        }
        *out = ll;
    }
    Ok(LogLikelihood {
        total: per_coordinate.iter().sum(),
        per_coordinate,
    })
}
