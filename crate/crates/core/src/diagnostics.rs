//! Goodness of fit: residuals by the time-change theorem, the
//! Kolmogorov-Smirnov test against Exp(1), and fit reports.
//!
//! Under the true model the compensator increments between consecutive
//! events of one type are i.i.d. Exp(1). The compensator is integrated
//! exactly on the merged timeline: on a segment of length `D` with state
//! weight `w`, coordinate `e` gains
//! `w (nu D + sum alpha * acc * (1 - exp(-beta D)) / beta)`, where `acc`
//! is the decayed event count of the kernel term at the segment start.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::decay;
use crate::likelihood::Sample;
use crate::model::{EventStream, FitResult, HawkesParams, StateTrajectory};

/// Below this many residuals the asymptotic KS p-value is flagged.
pub const LOW_POWER_N: usize = 35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub low_power: bool,
}

impl KsTest {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Residuals of every coordinate with their KS verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub residuals: Vec<Vec<f64>>,
    /// `None` for coordinates with no residuals (fewer than two events).
    pub ks: Vec<Option<KsTest>>,
    pub level: f64,
}

impl ResidualSeries {
    pub fn passed(&self) -> Vec<bool> {
        self.ks
            .iter()
            .map(|k| k.as_ref().is_some_and(|k| k.passes(self.level)))
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.passed().iter().all(|p| *p)
    }
}

/// Compensator of each coordinate evaluated at each of its own events.
pub fn compensator_at_events(params: &HawkesParams, events: &EventStream, state: &StateTrajectory) -> Result<Vec<Vec<f64>>> {
    let sample = Sample::new(events.clone(), state.clone(), params.nu.len())?;
    sample.check_params(params)?;
    Ok(compensators(&sample, params))
}

fn compensators(sample: &Sample, params: &HawkesParams) -> Vec<Vec<f64>> {
    let d = params.nu.len();
    let tl = sample.timeline();
    let evs = sample.events().events();
    let n_exp = params.shape().n_exp;
    let weights: Vec<Vec<f64>> = params.theta.iter().map(|th| sample.state().weights(th)).collect();
    // acc[(e * d + e2) * n_exp + n]
    let mut acc = vec![0.0f64; d * d * n_exp];
    let mut cumulative = vec![0.0f64; d];
    let mut out: Vec<Vec<f64>> = (0..d).map(|e| Vec::with_capacity(sample.events_of_type(e).len())).collect();
    for k in 0..tl.n_segments() {
        if let Some(i) = tl.opening_event(k) {
            let src = evs[i].kind;
            out[src].push(cumulative[src]);
            for e in 0..d {
                let off = (e * d + src) * n_exp;
                for v in &mut acc[off..off + n_exp] {
                    *v += 1.0;
                }
            }
        }
        let len = tl.duration(k);
        let j = tl.state_index(k);
        for e in 0..d {
            let mut integral = params.nu[e] * len;
            for e2 in 0..d {
                let off = (e * d + e2) * n_exp;
                for n in 0..n_exp {
                    let v = acc[off + n];
                    if v == 0.0 {
                        continue;
                    }
                    let beta = params.beta[e][e2][n];
                    let ed = decay(beta * len);
                    integral += params.alpha[e][e2][n] * v * (1.0 - ed) / beta;
                    acc[off + n] = if v * ed < 1e-300 { 0.0 } else { v * ed };
                }
            }
            cumulative[e] += weights[e][j] * integral;
        }
    }
    out
}

/// Residuals `r^e_i = Λ^e(t^e_{i+1}) - Λ^e(t^e_i)` between consecutive
/// events of each type, tested against Exp(1) at the 5% level.
pub fn residuals(params: &HawkesParams, events: &EventStream, state: &StateTrajectory) -> Result<ResidualSeries> {
    residuals_at_level(params, events, state, 0.05)
}

pub fn residuals_at_level(params: &HawkesParams, events: &EventStream, state: &StateTrajectory, level: f64) -> Result<ResidualSeries> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidOption(format!("test level must be in (0, 1), got {level}")));
    }
    let comp = compensator_at_events(params, events, state)?;
    let residuals: Vec<Vec<f64>> = comp
        .iter()
        .map(|c| c.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect())
        .collect();
    let ks = residuals
        .iter()
        .map(|r| if r.is_empty() { None } else { ks_test_exp1(r).ok() })
        .collect();
    Ok(ResidualSeries { residuals, ks, level })
}

/// One-sample Kolmogorov-Smirnov test against the Exp(1) distribution,
/// with the asymptotic Kolmogorov p-value at `sqrt(n) D`.
pub fn ks_test_exp1(sample: &[f64]) -> Result<KsTest> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidOption("sample contains NaN".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = if *x <= 0.0 { 0.0 } else { -(-x).exp_m1() };
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_survival(n.sqrt() * d),
        n: xs.len(),
        low_power: xs.len() < LOW_POWER_N,
    })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = if x < 1.18 {
        // theta-function form, converges fast for small x
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut s = 0.0;
        for k in 1..=100 {
            let m = (2 * k - 1) as f64;
            let t = (-m * m * c).exp();
            s += t;
            if t < 1e-12 * s.max(1e-300) {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { t } else { -t };
            if t < 1e-12 {
                break;
            }
        }
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

/// KS verdicts of a fitted model on its sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    pub ks: Vec<Option<KsTest>>,
    pub passed: Vec<bool>,
    /// True iff every coordinate passes.
    pub all_passed: bool,
    pub level: f64,
}

pub fn fit_report(fit: &FitResult, events: &EventStream, state: &StateTrajectory, level: f64) -> Result<FitReport> {
    let series = residuals_at_level(&fit.params, events, state, level)?;
    let passed = series.passed();
    Ok(FitReport {
        log_likelihood: fit.log_likelihood,
        aic: fit.aic,
        n_params: fit.n_params,
        all_passed: passed.iter().all(|p| *p),
        passed,
        ks: series.ks,
        level,
    })
}

/// Residuals as CSV, one column `r_<e>` per coordinate (1-based), shorter
/// columns padded with empty fields.
pub fn write_residuals_csv<W: Write>(series: &ResidualSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = series.residuals.len();
    w.write_record((1..=d).map(|e| format!("r_{e}")))?;
    let rows = series.residuals.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        w.write_record(
            series
                .residuals
                .iter()
                .map(|r| r.get(i).map_or(String::new(), |v| v.to_string())),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;

    #[test]
    fn unit_poisson_residuals() {
        let p = HawkesParams::poisson(vec![1.0], 0);
        let ev = EventStream::new(
            4.0,
            vec![Event { time: 1.0, kind: 0 }, Event { time: 2.0, kind: 0 }, Event { time: 3.0, kind: 0 }],
        )
        .unwrap();
        let r = residuals(&p, &ev, &StateTrajectory::trivial(4.0).unwrap()).unwrap();
        assert_eq!(r.residuals, vec![vec![1.0, 1.0]]);
        assert!(r.ks[0].as_ref().unwrap().low_power);
    }

    #[test]
    fn ks_degenerate_and_exact() {
        let z = ks_test_exp1(&[0.0; 20]).unwrap();
        assert_eq!(z.statistic, 1.0);
        assert!(z.p_value < 1e-10);
        let n = 2000;
        let q: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let t = ks_test_exp1(&q).unwrap();
        assert!(t.statistic <= 0.5 / n as f64 + 1e-12);
        assert!(t.p_value > 0.999);
        assert!(ks_test_exp1(&[]).is_err());
    }

    #[test]
    fn kolmogorov_known_values() {
        // classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_survival(1.358_1) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.627_6) - 0.01).abs() < 1e-4);
        // both series agree where they switch
        let a = kolmogorov_survival(1.18 - 1e-12);
        let b = kolmogorov_survival(1.18);
        assert!((a - b).abs() < 1e-10);
        let mut prev = 1.0;
        for i in 1..300 {
            let v = kolmogorov_survival(i as f64 * 0.01);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
