use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::intensity::decay;
use crate::model::{EventStream, HawkesParams, StateTrajectory};

/// One candidate parent of an event: earlier event `event` through kernel
/// term `term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ancestor {
    pub event: usize,
    pub term: usize,
    pub prob: f64,
}

/// Probabilities of the latent branching structure given the parameters.
///
/// `immigrant[i]` is the probability that event `i` comes from the baseline;
/// `ancestors[i]` lists every earlier event and kernel term that may have
/// triggered it. Storage is quadratic in the number of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingProbabilities {
    pub immigrant: Vec<f64>,
    pub ancestors: Vec<Vec<Ancestor>>,
}

impl BranchingProbabilities {
    /// Total probability mass of event `i` (1 up to rounding).
    pub fn row_sum(&self, i: usize) -> f64 {
        self.immigrant[i] + self.ancestors[i].iter().map(|a| a.prob).sum::<f64>()
    }
}

/// The state factor multiplies the numerator and the denominator alike, so
/// only the Hawkes part of the intensity enters.
pub fn compute_branching(params: &HawkesParams, events: &EventStream, state: &StateTrajectory) -> Result<BranchingProbabilities> {
    params.validate()?;
    crate::timeline::check_horizons(events, state)?;
    events.require_strict()?;
    events.check_types(params.nu.len())?;
    let evs = events.events();
    let mut immigrant = Vec::with_capacity(evs.len());
    let mut ancestors = Vec::with_capacity(evs.len());
    for (i, ev) in evs.iter().enumerate() {
        let e = ev.kind;
        let mut row = Vec::new();
        let mut total = params.nu[e];
        for (j, past) in evs[..i].iter().enumerate() {
            let dt = ev.time - past.time;
            for (n, (a, b)) in params.alpha[e][past.kind].iter().zip(&params.beta[e][past.kind]).enumerate() {
                let w = a * decay(b * dt);
                if w > 0.0 {
                    row.push(Ancestor { event: j, term: n, prob: w });
                    total += w;
                }
            }
        }
        for a in &mut row {
            a.prob /= total;
        }
        immigrant.push(params.nu[e] / total);
        ancestors.push(row);
    }
    Ok(BranchingProbabilities { immigrant, ancestors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;

    #[test]
    fn single_event_is_immigrant() {
        let p = HawkesParams::single_exp(vec![0.5], vec![vec![1.0]], vec![vec![2.0]], vec![vec![]]).unwrap();
        let ev = EventStream::new(3.0, vec![Event { time: 1.0, kind: 0 }]).unwrap();
        let b = compute_branching(&p, &ev, &StateTrajectory::trivial(3.0).unwrap()).unwrap();
        assert_eq!(b.immigrant, vec![1.0]);
        assert!(b.ancestors[0].is_empty());
    }

    #[test]
    fn two_events_direct_formula() {
        let p = HawkesParams::single_exp(vec![0.5], vec![vec![1.0]], vec![vec![2.0]], vec![vec![]]).unwrap();
        let ev = EventStream::new(3.0, vec![Event { time: 1.0, kind: 0 }, Event { time: 1.5, kind: 0 }]).unwrap();
        let b = compute_branching(&p, &ev, &StateTrajectory::trivial(3.0).unwrap()).unwrap();
        let k = (-1.0f64).exp();
        assert!((b.immigrant[1] - 0.5 / (0.5 + k)).abs() < 1e-15);
        assert!((b.ancestors[1][0].prob - k / (0.5 + k)).abs() < 1e-15);
        assert!((b.row_sum(1) - 1.0).abs() < 1e-15);
    }
}
