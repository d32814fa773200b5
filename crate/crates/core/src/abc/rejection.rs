//! Rejection ABC.

use super::common::{check_prior, fit_scale, AbcConfig, AbcOutput, AbcSample, AbcSimulator, AcceptanceSummary, SummaryScale};
use crate::error::{Error, Result};
use crate::ndcore::RngStream;
use rayon::prelude::*;

/// A prior draw and the distance of its simulation to the observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub beta: Vec<f64>,
    pub distance: f64,
}

/// Simulates `n` prior candidates; candidate `i` uses stream `i` of `rng`.
pub fn simulate_candidates(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    scale: &SummaryScale,
    n: usize,
    rng: &RngStream,
) -> Result<Vec<Candidate>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.split(i as u64);
            let beta = sim.prior().sample(&mut r);
            let s = sim.simulate_summary(&beta, &mut r)?;
            Ok(Candidate {
                distance: scale.distance(&s, observed),
                beta,
            })
        })
        .collect()
}

/// Keeps the candidates within `tolerance`, in candidate order.
pub fn accept(candidates: &[Candidate], tolerance: f64) -> Vec<&Candidate> {
    candidates.iter().filter(|c| c.distance <= tolerance).collect()
}

pub(crate) fn rejection_with_scale(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    scale: SummaryScale,
    n_simulations: usize,
    tolerance: f64,
    rng: &RngStream,
) -> Result<AbcOutput> {
    let cands = simulate_candidates(sim, observed, &scale, n_simulations, rng)?;
    let kept = accept(&cands, tolerance);
    if kept.is_empty() {
        return Err(Error::NoAcceptances { tolerance });
    }
    let w = 1.0 / kept.len() as f64;
    let samples = kept
        .iter()
        .map(|c| AbcSample {
            beta: c.beta.clone(),
            weight: w,
            generation: 0,
        })
        .collect::<Vec<_>>();
    Ok(AbcOutput {
        summary: AcceptanceSummary::new(n_simulations, samples.len()),
        samples,
        scale,
    })
}

/// Draws `n_simulations` parameters from the prior and keeps those whose
/// simulated summaries fall within `tolerance` of `observed`.
pub fn rejection_abc(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<AbcOutput> {
    cfg.validate()?;
    check_prior(sim.prior())?;
    let scale = fit_scale(sim, observed, cfg, rng)?;
    rejection_with_scale(sim, observed, scale, cfg.n_simulations, cfg.tolerance, &rng.derive(&[1, 0]))
}
