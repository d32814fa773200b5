//! Conjugate Normal-Normal model: `β ~ N(m0, s0²)`, `x_n = β + σ ε_n`.

use super::{HimModel, Prior};
use crate::error::{contract, Result};

/// Exact posterior `(mean, var)` of a Gaussian mean under a Gaussian prior.
pub fn normal_normal_posterior(
    prior_mean: f64,
    prior_var: f64,
    lik_var: f64,
    observations: &[f64],
) -> Result<(f64, f64)> {
    if !(prior_var > 0.0 && lik_var > 0.0) {
        return Err(contract("variances must be positive"));
    }
    let n = observations.len() as f64;
    let precision = 1.0 / prior_var + n / lik_var;
    let sum: f64 = observations.iter().sum();
    let mean = (prior_mean / prior_var + sum / lik_var) / precision;
    Ok((mean, 1.0 / precision))
}

#[derive(Clone, Debug)]
pub struct NormalNormalModel {
    pub prior: Prior,
    pub lik_sd: f64,
}

impl NormalNormalModel {
    pub fn new(prior_mean: f64, prior_sd: f64, lik_sd: f64) -> Result<Self> {
        if !(prior_sd > 0.0 && lik_sd > 0.0) {
            return Err(contract("standard deviations must be positive"));
        }
        Ok(Self {
            prior: Prior::Normal {
                loc: vec![prior_mean],
                scale: vec![prior_sd],
            },
            lik_sd,
        })
    }

    pub fn standard() -> Self {
        Self::new(0.0, 1.0, 1.0).unwrap()
    }

    pub fn posterior(&self, observations: &[f64]) -> (f64, f64) {
        let Prior::Normal { loc, scale } = &self.prior else {
            unreachable!()
        };
        normal_normal_posterior(loc[0], scale[0] * scale[0], self.lik_sd * self.lik_sd, observations)
            .expect("validated at construction")
    }
}

impl HimModel for NormalNormalModel {
    fn global_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn simulate_local(&self, noise: &[f64], _z: &[f64], beta: &[f64], _c: Option<&[f64]>) -> Vec<f64> {
        vec![beta[0] + self.lik_sd * noise[0]]
    }

    fn loglik(&self, x: &[f64], beta: &[f64], _c: Option<&[f64]>) -> Option<f64> {
        Some(crate::ndcore::scalar::normal_logpdf(x[0], beta[0], self.lik_sd))
    }
}
