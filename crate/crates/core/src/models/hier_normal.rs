//! A model with local latents: `β ~ N(0, s0²)`, `z_n ~ N(β, τ²)`,
//! `x_n = z_n + σ ε_n`.

use super::{HimModel, Prior};
use crate::ndcore::RngStream;

#[derive(Clone, Debug)]
pub struct HierNormalModel {
    pub prior: Prior,
    pub tau: f64,
    pub sigma: f64,
}

impl HierNormalModel {
    pub fn new(prior_sd: f64, tau: f64, sigma: f64) -> Self {
        Self {
            prior: Prior::Normal {
                loc: vec![0.0],
                scale: vec![prior_sd],
            },
            tau,
            sigma,
        }
    }

    /// Exact `p(z_n | x_n, β)` as `(mean, var)`.
    pub fn local_posterior(&self, x: f64, beta: f64) -> (f64, f64) {
        let (t2, s2) = (self.tau * self.tau, self.sigma * self.sigma);
        let var = 1.0 / (1.0 / t2 + 1.0 / s2);
        (var * (beta / t2 + x / s2), var)
    }
}

impl HimModel for HierNormalModel {
    fn global_dim(&self) -> usize {
        1
    }

    fn local_dim(&self) -> usize {
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

    fn local_prior_sample(&self, beta: &[f64], rng: &mut RngStream) -> Vec<f64> {
        vec![beta[0] + self.tau * rng.normal()]
    }

    fn simulate_local(&self, noise: &[f64], z: &[f64], _beta: &[f64], _c: Option<&[f64]>) -> Vec<f64> {
        vec![z[0] + self.sigma * noise[0]]
    }

    /// `x_n | β ~ N(β, τ² + σ²)` once `z_n` is integrated out.
    fn loglik(&self, x: &[f64], beta: &[f64], _c: Option<&[f64]>) -> Option<f64> {
        let sd = (self.tau * self.tau + self.sigma * self.sigma).sqrt();
        Some(crate::ndcore::scalar::normal_logpdf(x[0], beta[0], sd))
    }
}
