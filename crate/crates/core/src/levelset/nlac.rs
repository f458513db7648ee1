use super::descent::{descend, DescentSettings, Eval};
use super::energy::evaluate;
use super::{LevelSet, NlacParams, RunTrace};
use crate::error::Result;
use crate::eval::rfe;
use crate::grid::{BinaryMask, Field};
use crate::scalar::Scalar;
use crate::similarity::{NlWindow, PairWeights, PatchPmfField, DEFAULT_CACHE_BUDGET};

#[derive(Clone, Debug)]
pub struct NlacResult<T> {
    pub level_set: LevelSet<T>,
    pub trace: RunTrace,
    /// Time step actually used, in peak-normalized units (see
    /// [`XiPolicy`](super::XiPolicy)).
    pub xi: T,
    /// `true` if the energy change fell below `omega` before `max_iters`.
    pub converged: bool,
    /// Number of updates applied to the initial level set.
    pub iterations: usize,
}

/// Single-scale non-local active contour on a precomputed PMF field.
pub fn nlac_run<T: Scalar>(
    field: &PatchPmfField<T>,
    window: &NlWindow<T>,
    phi0: &Field<T>,
    params: &NlacParams<T>,
    gt: Option<&BinaryMask>,
) -> Result<NlacResult<T>> {
    params.validate()?;
    let pairs = PairWeights::new(field, window, params.kind, params.js_mode, DEFAULT_CACHE_BUDGET);
    nlac_run_with(&pairs, phi0, params, gt)
}

/// Like [`nlac_run`] but reuses an existing pair table.
pub fn nlac_run_with<T: Scalar>(
    pairs: &PairWeights<T>,
    phi0: &Field<T>,
    params: &NlacParams<T>,
    gt: Option<&BinaryMask>,
) -> Result<NlacResult<T>> {
    nlac_run_monitored(pairs, phi0, params, gt, &mut |_, _| {})
}

/// Like [`nlac_run_with`]; `on_iter(i, φ)` is called for every recorded
/// iterate, e.g. to dump snapshots.
pub fn nlac_run_monitored<T: Scalar>(
    pairs: &PairWeights<T>,
    phi0: &Field<T>,
    params: &NlacParams<T>,
    gt: Option<&BinaryMask>,
    on_iter: &mut dyn FnMut(usize, &Field<T>),
) -> Result<NlacResult<T>> {
    params.validate()?;
    if let Some(g) = gt {
        phi0.same_dims(g)?;
    }
    let unit = T::one() / pairs.peak();
    let applied = params.xi.scaled(unit);
    let settings = DescentSettings {
        xi: applied,
        omega: params.omega,
        max_iters: params.max_iters,
        clamp: params.clamp,
    };
    let eps = params.epsilon;
    let outcome = descend(
        phi0,
        &settings,
        |phi| {
            let (terms, grad) = evaluate(pairs, phi, params.lambda, eps)?;
            Ok(Eval::Ok(terms, grad))
        },
        |iter, phi| {
            on_iter(iter, phi);
            gt.and_then(|g| {
                let mask = params.polarity.apply(phi.map(|v| v > T::zero()));
                rfe(&mask, g).ok()
            })
        },
    )?;
    let iterations = outcome.trace.len().saturating_sub(1);
    Ok(NlacResult {
        level_set: LevelSet::new(outcome.phi, eps)?,
        trace: outcome.trace,
        // halvings are exact, so the ratio is a power of two
        xi: params.xi.nominal() * (outcome.xi / applied.nominal()),
        converged: outcome.converged,
        iterations,
    })
}
