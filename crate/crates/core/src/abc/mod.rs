//! Approximate Bayesian computation baselines: rejection, MCMC and SMC
//! samplers over standardized summary statistics.

mod common;
mod mcmc;
mod rejection;
mod smc;
mod summary;

pub use common::{
    AbcConfig, AbcOutput, AbcSample, AbcSimulator, AcceptanceSummary, DatasetSimulator, Distance,
    McmcConfig, SmcConfig, SummaryKind, SummaryScale,
};
pub use mcmc::mcmc_abc;
pub use rejection::{accept, rejection_abc, simulate_candidates, Candidate};
pub use smc::{smc_abc, Generation, SmcOutput, MIN_ESS};
pub use summary::{autocorr, cross_corr, summary_stats, SUMMARY_DIM};
