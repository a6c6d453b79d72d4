//! Estimation: multi-start maximum likelihood, the EM algorithm, branching
//! probabilities and AIC model selection.
//!
//! The log-likelihood is a sum of per-coordinate terms with disjoint
//! parameters, so every method fits each coordinate on its own.

mod branching;
mod em;
mod mle;
mod select;

pub use branching::{compute_branching, Ancestor, BranchingProbabilities};
pub use em::{fit_em, fit_em_with_trace, EmOptions};
pub use mle::{fit_mle, random_start, MleOptions, ParamBounds};
pub use select::{select_model, select_model_with, Candidate, ModelSelection, SelectOptions, SelectionEntry};

use crate::model::CoordinateParams;

/// Force strictly decreasing decay rates after sorting; ties can only come
/// from several terms stuck on the same bound.
pub(crate) fn finalize_coordinate(cp: &mut CoordinateParams) {
    cp.canonicalize();
    for b in &mut cp.beta {
        for n in 1..b.len() {
            if b[n] >= b[n - 1] {
                b[n] = b[n - 1] * (1.0 - 1e-9);
            }
        }
    }
}
