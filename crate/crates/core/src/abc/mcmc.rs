//! MCMC-ABC with a spherical Gaussian random-walk proposal.

use super::common::{
    check_prior, fit_scale, from_unconstrained, to_unconstrained, unconstrained_logpdf, AbcConfig,
    AbcOutput, AbcSample, AbcSimulator, AcceptanceSummary, SummaryScale,
};
use crate::error::{Error, Result};
use crate::ndcore::RngStream;
use rayon::prelude::*;

struct Chain {
    kept: Vec<Vec<f64>>,
    sims: usize,
    moves: usize,
}

fn run_chain(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    scale: &SummaryScale,
    cfg: &AbcConfig,
    rng: &mut RngStream,
) -> Result<Chain> {
    let prior = sim.prior();
    let mut init = None;
    for _ in 0..cfg.mcmc.init_budget {
        let beta = prior.sample(rng);
        let s = sim.simulate_summary(&beta, rng)?;
        if scale.distance(&s, observed) <= cfg.tolerance {
            init = Some(beta);
            break;
        }
    }
    let beta = init.ok_or(Error::InitFailed(cfg.mcmc.init_budget))?;
    let mut u = to_unconstrained(prior, &beta);
    let mut lp = unconstrained_logpdf(prior, &u);
    let steps = cfg.mcmc.n_steps;
    let mut chain = Chain {
        kept: Vec::with_capacity(steps - cfg.mcmc.burn_in),
        sims: 0,
        moves: 0,
    };
    for t in 0..steps {
        let prop: Vec<f64> = u.iter().map(|v| v + cfg.mcmc.proposal_std * rng.normal()).collect();
        let lp_prop = unconstrained_logpdf(prior, &prop);
        let log_u = rng.uniform().ln();
        // The prior test comes first so rejected moves cost no simulation.
        if lp_prop.is_finite() && log_u <= lp_prop - lp {
            let beta_prop = from_unconstrained(prior, &prop);
            let s = sim.simulate_summary(&beta_prop, rng)?;
            chain.sims += 1;
            if scale.distance(&s, observed) <= cfg.tolerance {
                u = prop;
                lp = lp_prop;
                chain.moves += 1;
            }
        }
        if t >= cfg.mcmc.burn_in {
            chain.kept.push(from_unconstrained(prior, &u));
        }
    }
    Ok(chain)
}

/// Metropolis in parameter space (log space for positive priors) whose
/// moves additionally need a fresh simulation within `tolerance`. The
/// acceptance summary counts proposals and accepted moves.
pub fn mcmc_abc(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<AbcOutput> {
    cfg.validate()?;
    check_prior(sim.prior())?;
    let scale = fit_scale(sim, observed, cfg, rng)?;
    let chains: Vec<Chain> = (0..cfg.mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(sim, observed, &scale, cfg, &mut rng.derive(&[2, c as u64])))
        .collect::<Result<_>>()?;
    let n_kept: usize = chains.iter().map(|c| c.kept.len()).sum();
    let w = 1.0 / n_kept as f64;
    let proposals = cfg.mcmc.chains * cfg.mcmc.n_steps;
    let moves = chains.iter().map(|c| c.moves).sum();
    let samples = chains
        .into_iter()
        .flat_map(|c| c.kept)
        .map(|beta| AbcSample {
            beta,
            weight: w,
            generation: 0,
        })
        .collect();
    Ok(AbcOutput {
        samples,
        summary: AcceptanceSummary::new(proposals, moves),
        scale,
    })
}
