//! SMC-ABC (population Monte Carlo) over a decreasing tolerance schedule.

use super::common::{
    check_prior, fit_scale, from_unconstrained, to_unconstrained, unconstrained_logpdf, AbcConfig,
    AbcOutput, AbcSample, AbcSimulator, AcceptanceSummary,
};
use super::rejection::rejection_with_scale;
use crate::error::Result;
use crate::ndcore::scalar::{logsumexp, normal_logpdf};
use crate::ndcore::RngStream;
use rayon::prelude::*;

/// Populations below this effective sample size abort the run.
pub const MIN_ESS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub tolerance: f64,
    pub samples: Vec<AbcSample>,
    pub summary: AcceptanceSummary,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmcOutput {
    pub generations: Vec<Generation>,
    /// Index of the generation whose population collapsed, if any. Earlier
    /// generations are kept as partial output.
    pub collapsed: Option<usize>,
    pub scale: super::common::SummaryScale,
}

impl SmcOutput {
    /// The last completed population.
    pub fn final_output(&self) -> AbcOutput {
        let g = self.generations.last().expect("at least one generation");
        AbcOutput {
            samples: g.samples.clone(),
            summary: g.summary,
            scale: self.scale.clone(),
        }
    }

    /// Every generation's population.
    pub fn to_jsonl(&self) -> String {
        self.generations
            .iter()
            .flat_map(|g| &g.samples)
            .map(|s| serde_json::to_string(s).expect("sample serializes") + "\n")
            .collect()
    }
}

fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Weighted per-dimension standard deviation in sampling coordinates.
fn kernel_std(us: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let dim = us[0].len();
    (0..dim)
        .map(|d| {
            let m: f64 = us.iter().zip(w).map(|(u, w)| w * u[d]).sum();
            let v: f64 = us.iter().zip(w).map(|(u, w)| w * (u[d] - m).powi(2)).sum();
            v.sqrt().max(1e-9)
        })
        .collect()
}

fn draw_index(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|c| *c < u).min(cum.len() - 1)
}

/// Generation 1 is rejection ABC at the first tolerance with the same
/// streams as [`rejection_abc`](super::rejection_abc). Later generations
/// resample the previous population by weight, perturb with a Gaussian
/// kernel and reweight by prior over kernel mixture, until
/// `population_size` particles are accepted or `n_simulations` is spent.
pub fn smc_abc(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<SmcOutput> {
    cfg.validate()?;
    let prior = sim.prior();
    check_prior(prior)?;
    let tolerances = cfg.smc.tolerances();
    let scale = fit_scale(sim, observed, cfg, rng)?;
    let first = rejection_with_scale(sim, observed, scale.clone(), cfg.n_simulations, tolerances[0], &rng.derive(&[1, 0]))?;
    let mut out = SmcOutput {
        generations: vec![Generation {
            tolerance: tolerances[0],
            ess: ess(&first.samples.iter().map(|s| s.weight).collect::<Vec<_>>()),
            samples: first.samples,
            summary: first.summary,
        }],
        collapsed: None,
        scale,
    };
    let chunk = cfg.smc.population_size.max(64);
    for (g, &eps) in tolerances.iter().enumerate().skip(1) {
        let prev = &out.generations[g - 1].samples;
        let us: Vec<Vec<f64>> = prev.iter().map(|s| to_unconstrained(prior, &s.beta)).collect();
        let w: Vec<f64> = prev.iter().map(|s| s.weight).collect();
        let sigma = kernel_std(&us, &w);
        let mut cum = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for x in &w {
            acc += x;
            cum.push(acc);
        }
        let stream = rng.derive(&[3, g as u64]);
        let mut accepted: Vec<Vec<f64>> = Vec::new();
        let mut n_sims = 0;
        while accepted.len() < cfg.smc.population_size && n_sims < cfg.n_simulations {
            let lo = n_sims;
            let hi = (lo + chunk).min(cfg.n_simulations);
            let batch: Vec<Option<Vec<f64>>> = (lo..hi)
                .into_par_iter()
                .map(|i| {
                    let mut r = stream.split(i as u64);
                    let j = draw_index(&cum, r.uniform() * acc);
                    let u: Vec<f64> = us[j].iter().zip(&sigma).map(|(m, s)| m + s * r.normal()).collect();
                    if !unconstrained_logpdf(prior, &u).is_finite() {
                        return Ok(None);
                    }
                    let s = sim.simulate_summary(&from_unconstrained(prior, &u), &mut r)?;
                    Ok((out.scale.distance(&s, observed) <= eps).then_some(u))
                })
                .collect::<Result<_>>()?;
            n_sims = hi;
            for (k, b) in batch.into_iter().enumerate() {
                if let Some(u) = b {
                    accepted.push(u);
                    if accepted.len() == cfg.smc.population_size {
                        n_sims = lo + k + 1;
                        break;
                    }
                }
            }
        }
        let log_w: Vec<f64> = accepted
            .iter()
            .map(|u| {
                let terms: Vec<f64> = us
                    .iter()
                    .zip(&w)
                    .map(|(m, wj)| {
                        let k: f64 = (0..u.len()).map(|d| normal_logpdf(u[d], m[d], sigma[d])).sum();
                        wj.ln() + k
                    })
                    .collect();
                unconstrained_logpdf(prior, u) - logsumexp(&terms)
            })
            .collect();
        let weights: Vec<f64> = if log_w.is_empty() {
            Vec::new()
        } else {
            let z = logsumexp(&log_w);
            log_w.iter().map(|l| (l - z).exp()).collect()
        };
        let e = if weights.is_empty() { 0.0 } else { ess(&weights) };
        if e < MIN_ESS {
            out.collapsed = Some(g);
            break;
        }
        let samples = accepted
            .iter()
            .zip(&weights)
            .map(|(u, w)| AbcSample {
                beta: from_unconstrained(prior, u),
                weight: *w,
                generation: g,
            })
            .collect::<Vec<_>>();
        out.generations.push(Generation {
            tolerance: eps,
            summary: AcceptanceSummary::new(n_sims, samples.len()),
            samples,
            ess: e,
        });
    }
    Ok(out)
}
