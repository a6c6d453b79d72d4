use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::mle::{fit_mle_sample, MleOptions};
use crate::error::Result;
use crate::likelihood::Sample;
use crate::model::{EventStream, FitResult, HawkesParams, ModelShape, StateTrajectory};

/// A model in the selection grid: number of exponential terms and the
/// state columns used as covariates (empty for the standard Hawkes model).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub n_exp: usize,
    pub covariates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub candidate: Candidate,
    /// The fit, or the error message when fitting this candidate failed.
    pub result: std::result::Result<FitResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    /// One entry per candidate, in the order given.
    pub entries: Vec<SelectionEntry>,
    /// Indices of successful entries, best first.
    pub ranking: Vec<usize>,
}

impl ModelSelection {
    pub fn best(&self) -> Option<&SelectionEntry> {
        self.ranking.first().map(|&i| &self.entries[i])
    }
}

/// Options of a selection sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectOptions {
    pub mle: MleOptions,
    /// Random starts for a candidate that also gets nested starts from the
    /// fit with one term fewer; `None` keeps `mle.n_starts`.
    pub nested_random_starts: Option<usize>,
}

impl From<MleOptions> for SelectOptions {
    fn from(mle: MleOptions) -> Self {
        Self {
            mle,
            nested_random_starts: None,
        }
    }
}

const AIC_TIE: f64 = 1e-9;

fn compare(a: (&FitResult, &Candidate), b: (&FitResult, &Candidate)) -> Ordering {
    if (a.0.aic - b.0.aic).abs() > AIC_TIE {
        return a.0.aic.total_cmp(&b.0.aic);
    }
    a.0.n_params
        .cmp(&b.0.n_params)
        .then(a.1.n_exp.cmp(&b.1.n_exp))
}

/// Fit every candidate by maximum likelihood and rank by ascending AIC.
/// Ties within `1e-9` go to fewer parameters, then fewer exponential terms.
///
/// Candidates sharing a covariate set are fitted in increasing `n_exp`, and
/// the fit with `n_exp - 1` terms seeds two extra starts for the next one
/// (a slower and a faster term added to every kernel), so that the nested
/// likelihoods stay ordered in practice. A failing candidate is recorded
/// without stopping the sweep.
pub fn select_model(
    events: &EventStream,
    state: &StateTrajectory,
    candidates: &[Candidate],
    options: &MleOptions,
) -> Result<ModelSelection> {
    let n_types = events.n_types_observed().max(options.initial.first().map_or(0, |p| p.nu.len()));
    select_model_with(events, state, n_types, candidates, &options.clone().into())
}

/// [`select_model`] with an explicit number of event types and
/// [`SelectOptions`].
pub fn select_model_with(
    events: &EventStream,
    state: &StateTrajectory,
    n_types: usize,
    candidates: &[Candidate],
    select: &SelectOptions,
) -> Result<ModelSelection> {
    let options = &select.mle;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[a]
            .covariates
            .cmp(&candidates[b].covariates)
            .then(candidates[a].n_exp.cmp(&candidates[b].n_exp))
    });
    let mut results: Vec<Option<std::result::Result<FitResult, String>>> = vec![None; candidates.len()];
    let mut sample_cache: Option<(Vec<usize>, std::result::Result<Sample, String>)> = None;
    for &idx in &order {
        let cand = &candidates[idx];
        if sample_cache.as_ref().map(|(c, _)| c != &cand.covariates).unwrap_or(true) {
            let built = state
                .select_columns(&cand.covariates)
                .and_then(|st| Sample::new(events.clone(), st, n_types))
                .map_err(|e| e.to_string());
            sample_cache = Some((cand.covariates.clone(), built));
        }
        let sample = match &sample_cache.as_ref().unwrap().1 {
            Ok(s) => s,
            Err(msg) => {
                results[idx] = Some(Err(msg.clone()));
                continue;
            }
        };
        let shape = match ModelShape::new(n_types, cand.n_exp, cand.covariates.len()) {
            Ok(s) => s,
            Err(e) => {
                results[idx] = Some(Err(e.to_string()));
                continue;
            }
        };
        let mut opts = options.clone();
        opts.initial.retain(|p| p.shape() == shape);
        let smaller = order.iter().find_map(|&j| {
            let c = &candidates[j];
            if c.covariates == cand.covariates && c.n_exp + 1 == cand.n_exp {
                results[j].as_ref().and_then(|r| r.as_ref().ok())
            } else {
                None
            }
        });
        if let Some(prev) = smaller {
            opts.initial.extend(nested_starts(&prev.params, options));
            if let Some(n) = select.nested_random_starts {
                opts.n_starts = n;
            }
        }
        results[idx] = Some(fit_mle_sample(sample, shape, &opts).map_err(|e| e.to_string()));
    }
    let entries: Vec<SelectionEntry> = candidates
        .iter()
        .cloned()
        .zip(results)
        .map(|(candidate, r)| SelectionEntry {
            candidate,
            result: r.expect("every candidate visited"),
        })
        .collect();
    let mut ranking: Vec<usize> = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let Ok(fit) = &entry.result else { continue };
        if !fit.aic.is_finite() {
            continue;
        }
        // insertion keeps the tie tolerance well-defined
        let pos = ranking
            .iter()
            .position(|&j| {
                let other = entries[j].result.as_ref().unwrap();
                compare((fit, &entry.candidate), (other, &entries[j].candidate)) == Ordering::Less
            })
            .unwrap_or(ranking.len());
        ranking.insert(pos, i);
    }
    Ok(ModelSelection { entries, ranking })
}

/// Starts for `n_exp + 1` terms built from an `n_exp`-term fit.
fn nested_starts(prev: &HawkesParams, options: &MleOptions) -> Vec<HawkesParams> {
    let (blo, bhi) = options.bounds.beta;
    let grow = |slow: bool| {
        let mut p = prev.clone();
        for e in 0..p.nu.len() {
            for e2 in 0..p.nu.len() {
                let b = &p.beta[e][e2];
                let new_beta = if slow {
                    (b[b.len() - 1] / 10.0).max(blo * 2.0)
                } else {
                    (b[0] * 10.0).min(bhi / 2.0)
                };
                let new_alpha = if options.no_cross_excitation && e != e2 {
                    0.0
                } else {
                    0.05 * new_beta
                };
                if slow {
                    p.alpha[e][e2].push(new_alpha);
                    p.beta[e][e2].push(new_beta);
                } else {
                    p.alpha[e][e2].insert(0, new_alpha);
                    p.beta[e][e2].insert(0, new_beta);
                }
            }
        }
        p
    };
    vec![grow(true), grow(false)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{aic, FitMethod};

    fn fake(aic_value: f64, n_params: usize) -> FitResult {
        FitResult {
            shape: ModelShape::new(1, 1, 0).unwrap(),
            params: HawkesParams::poisson(vec![1.0], 0),
            log_likelihood: 0.0,
            aic: aic_value,
            n_params,
            per_coordinate_loglik: vec![0.0],
            method: FitMethod::Mle,
            starts_used: 1,
            converged: true,
            elapsed_secs: 0.0,
            iterations: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn ties_prefer_fewer_parameters() {
        let c1 = Candidate { n_exp: 1, covariates: vec![] };
        let c2 = Candidate { n_exp: 2, covariates: vec![] };
        let a = fake(10.0, 3);
        let b = fake(10.0 + 1e-12, 5);
        assert_eq!(compare((&b, &c2), (&a, &c1)), Ordering::Greater);
        assert_eq!(compare((&a, &c1), (&b, &c2)), Ordering::Less);
        assert_eq!(aic(3, -5.0), 16.0);
    }
}
