//! Simulator interface, distance and output records shared by the samplers.

use crate::error::{contract, Result};
use crate::models::{Dataset, HimModel, Prior};
use crate::models::lotka_volterra::Series;
use crate::ndcore::{RngStream, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::summary_stats;

/// How a dataset is reduced to a summary vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    /// Column means of the data matrix.
    #[default]
    SampleMean,
    /// Predator-prey statistics, averaged over series.
    LotkaVolterra,
}

impl SummaryKind {
    pub fn apply(&self, x: &Tensor) -> Vec<f64> {
        let rows = x.rows().max(1) as f64;
        match self {
            SummaryKind::SampleMean => {
                let mut m = vec![0.0; x.cols()];
                for r in 0..x.rows() {
                    for (a, v) in m.iter_mut().zip(x.row_slice(r)) {
                        *a += v / rows;
                    }
                }
                m
            }
            SummaryKind::LotkaVolterra => {
                let mut m = vec![0.0; super::SUMMARY_DIM];
                for r in 0..x.rows() {
                    let s = summary_stats(&Series::from_flat(x.row_slice(r), 1.0));
                    for (a, v) in m.iter_mut().zip(s) {
                        *a += v / rows;
                    }
                }
                m
            }
        }
    }
}

/// Anything ABC can draw parameters for and simulate summaries from.
pub trait AbcSimulator: Sync {
    fn prior(&self) -> &Prior;
    fn simulate_summary(&self, beta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>>;
}

/// Simulates a dataset of the observed size from a hierarchical model and
/// summarises it.
pub struct DatasetSimulator<'a> {
    pub model: &'a dyn HimModel,
    pub n: usize,
    pub covariates: Option<Tensor>,
    pub summary: SummaryKind,
}

impl<'a> DatasetSimulator<'a> {
    pub fn for_data(model: &'a dyn HimModel, data: &Dataset, summary: SummaryKind) -> Self {
        Self {
            model,
            n: data.len(),
            covariates: data.covariates.clone(),
            summary,
        }
    }

    pub fn observed_summary(&self, data: &Dataset) -> Vec<f64> {
        self.summary.apply(&data.x)
    }
}

impl AbcSimulator for DatasetSimulator<'_> {
    fn prior(&self) -> &Prior {
        self.model.prior()
    }

    fn simulate_summary(&self, beta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        // Consumes `rng` so that repeated calls (as in MCMC) see fresh noise.
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| {
                let c = self.covariates.as_ref().map(|c| c.row_slice(i));
                self.model.simulate(beta, c, rng).0
            })
            .collect();
        Ok(self.summary.apply(&Tensor::from_rows(&rows)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    EuclideanOnStandardizedSummaries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    /// Proposal standard deviation; on `log β` for positive priors.
    pub proposal_std: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Independent chains, run in parallel and concatenated.
    pub chains: usize,
    /// Prior simulations allowed when searching for an initial point.
    pub init_budget: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            proposal_std: 0.1,
            n_steps: 10_000,
            burn_in: 2_000,
            chains: 1,
            init_budget: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    /// Explicit decreasing tolerances. When empty, `generations` values
    /// starting at `initial_tolerance` and shrinking by `decay` are used.
    pub schedule: Vec<f64>,
    pub initial_tolerance: f64,
    pub decay: f64,
    pub generations: usize,
    /// Particles kept in generations after the first.
    pub population_size: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            schedule: vec![1.0, 0.3, 0.05],
            initial_tolerance: 1.0,
            decay: 0.5,
            generations: 3,
            population_size: 1000,
        }
    }
}

impl SmcConfig {
    pub fn tolerances(&self) -> Vec<f64> {
        if !self.schedule.is_empty() {
            return self.schedule.clone();
        }
        (0..self.generations)
            .map(|g| self.initial_tolerance * self.decay.powi(g as i32))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbcConfig {
    /// Acceptance radius on the standardized distance.
    pub tolerance: f64,
    /// Simulations for rejection ABC and per SMC generation.
    pub n_simulations: usize,
    /// Prior simulations used to fit the summary scales.
    pub n_pilot: usize,
    /// Divide summaries by their pilot median absolute deviation.
    pub standardize: bool,
    pub distance: Distance,
    pub mcmc: McmcConfig,
    pub smc: SmcConfig,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            n_simulations: 100_000,
            n_pilot: 1000,
            standardize: true,
            distance: Distance::default(),
            mcmc: McmcConfig::default(),
            smc: SmcConfig::default(),
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(contract("tolerance must be positive"));
        }
        if self.n_simulations == 0 || (self.standardize && self.n_pilot == 0) {
            return Err(contract("simulation budgets must be positive"));
        }
        let m = &self.mcmc;
        if !(m.proposal_std >= 0.0) || m.chains == 0 || m.init_budget == 0 || m.burn_in >= m.n_steps {
            return Err(contract("mcmc needs proposal_std >= 0, chains > 0 and burn_in < n_steps"));
        }
        let t = self.smc.tolerances();
        if t.is_empty() || t.iter().any(|e| !(*e > 0.0)) || t.windows(2).any(|w| w[1] >= w[0]) {
            return Err(contract("the smc schedule must be positive and strictly decreasing"));
        }
        if self.smc.population_size == 0 {
            return Err(contract("population_size must be positive"));
        }
        Ok(())
    }
}

/// Per-summary divisors; distances are Euclidean after division.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryScale {
    pub scale: Vec<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SummaryScale {
    pub fn unit(dim: usize) -> Self {
        Self { scale: vec![1.0; dim] }
    }

    /// Median absolute deviation of each summary over prior simulations.
    /// Degenerate summaries keep scale 1.
    pub fn from_pilot(sim: &dyn AbcSimulator, n_pilot: usize, rng: &RngStream) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..n_pilot)
            .into_par_iter()
            .map(|i| {
                let mut r = rng.split(i as u64);
                let beta = sim.prior().sample(&mut r);
                sim.simulate_summary(&beta, &mut r)
            })
            .collect::<Result<_>>()?;
        let dim = rows[0].len();
        let scale = (0..dim)
            .map(|j| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
                if col.is_empty() {
                    return 1.0;
                }
                let m = median(&mut col);
                let mut dev: Vec<f64> = col.iter().map(|v| (v - m).abs()).collect();
                let mad = median(&mut dev);
                if mad > 0.0 {
                    mad
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { scale })
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a
            .iter()
            .zip(b)
            .zip(&self.scale)
            .map(|((x, y), s)| ((x - y) / s).powi(2))
            .sum::<f64>()
            .sqrt();
        if d.is_nan() {
            f64::INFINITY
        } else {
            d
        }
    }
}

/// One line of sampler output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcSample {
    pub beta: Vec<f64>,
    pub weight: f64,
    pub generation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub n_sims: usize,
    pub n_accepted: usize,
    pub rate: f64,
}

impl AcceptanceSummary {
    pub fn new(n_sims: usize, n_accepted: usize) -> Self {
        Self {
            n_sims,
            n_accepted,
            rate: if n_sims == 0 { 0.0 } else { n_accepted as f64 / n_sims as f64 },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbcOutput {
    pub samples: Vec<AbcSample>,
    pub summary: AcceptanceSummary,
    pub scale: SummaryScale,
}

impl AbcOutput {
    /// Weighted mean of the samples.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.samples.first().map_or(0, |s| s.beta.len());
        let total: f64 = self.samples.iter().map(|s| s.weight).sum();
        let mut m = vec![0.0; dim];
        for s in &self.samples {
            for (a, b) in m.iter_mut().zip(&s.beta) {
                *a += s.weight * b / total;
            }
        }
        m
    }

    pub fn to_jsonl(&self) -> String {
        self.samples
            .iter()
            .map(|s| serde_json::to_string(s).expect("sample serializes") + "\n")
            .collect()
    }
}

/// Fits the scale as configured; pilot draws use their own stream.
pub(crate) fn fit_scale(
    sim: &dyn AbcSimulator,
    observed: &[f64],
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<SummaryScale> {
    if cfg.standardize {
        SummaryScale::from_pilot(sim, cfg.n_pilot, &rng.derive(&[0]))
    } else {
        Ok(SummaryScale::unit(observed.len()))
    }
}

/// Sampling coordinates: `log β` for positive priors, `β` otherwise.
pub(crate) fn to_unconstrained(prior: &Prior, beta: &[f64]) -> Vec<f64> {
    if prior.is_positive() {
        beta.iter().map(|b| b.ln()).collect()
    } else {
        beta.to_vec()
    }
}

pub(crate) fn from_unconstrained(prior: &Prior, u: &[f64]) -> Vec<f64> {
    if prior.is_positive() {
        u.iter().map(|v| v.exp()).collect()
    } else {
        u.to_vec()
    }
}

/// Prior log density expressed in sampling coordinates.
pub(crate) fn unconstrained_logpdf(prior: &Prior, u: &[f64]) -> f64 {
    let beta = from_unconstrained(prior, u);
    let jac: f64 = if prior.is_positive() { u.iter().sum() } else { 0.0 };
    prior.logpdf(&beta) + jac
}

pub(crate) fn check_prior(prior: &Prior) -> Result<()> {
    if prior.is_flat() {
        return Err(contract("ABC needs a proper prior to sample from"));
    }
    Ok(())
}
