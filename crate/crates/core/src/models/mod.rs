//! Hierarchical implicit models: a tractable prior over globals, per-datum
//! noise and a deterministic simulator.

pub mod gan_classifier;
pub mod grammar;
pub mod hier_normal;
pub mod linreg;
pub mod lotka_volterra;
pub mod normal_normal;
pub mod rnn;

use crate::error::{contract, Result};
use crate::ndcore::scalar::LN_SQRT_2PI;
use crate::ndcore::{RngStream, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

/// Prior over the global vector `β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Normal { loc: Vec<f64>, scale: Vec<f64> },
    LogNormal { loc: Vec<f64>, scale: Vec<f64> },
    /// Improper uniform density; `logpdf` is identically zero.
    Flat { dim: usize },
}

impl Prior {
    pub fn standard_normal(dim: usize) -> Self {
        Prior::Normal {
            loc: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Normal { loc, .. } | Prior::LogNormal { loc, .. } => loc.len(),
            Prior::Flat { dim } => *dim,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Prior::Flat { .. })
    }

    /// Whether the support is the positive orthant.
    pub fn is_positive(&self) -> bool {
        matches!(self, Prior::LogNormal { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Normal { loc, scale } | Prior::LogNormal { loc, scale } => {
                if loc.len() != scale.len() {
                    return Err(contract("prior loc and scale lengths differ"));
                }
                if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(contract("prior scales must be positive and finite"));
                }
                Ok(())
            }
            Prior::Flat { .. } => Ok(()),
        }
    }

    /// Log density at `beta`; `-inf` outside the support.
    pub fn logpdf(&self, beta: &[f64]) -> f64 {
        match self {
            Prior::Normal { loc, scale } => beta
                .iter()
                .zip(loc.iter().zip(scale))
                .map(|(&b, (&m, &s))| crate::ndcore::scalar::normal_logpdf(b, m, s))
                .sum(),
            Prior::LogNormal { loc, scale } => {
                if beta.iter().any(|&b| b <= 0.0) {
                    return f64::NEG_INFINITY;
                }
                beta.iter()
                    .zip(loc.iter().zip(scale))
                    .map(|(&b, (&m, &s))| {
                        let l = b.ln();
                        crate::ndcore::scalar::normal_logpdf(l, m, s) - l
                    })
                    .sum()
            }
            Prior::Flat { .. } => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        match self {
            Prior::Normal { loc, scale } => loc
                .iter()
                .zip(scale)
                .map(|(&m, &s)| m + s * rng.normal())
                .collect(),
            Prior::LogNormal { loc, scale } => loc
                .iter()
                .zip(scale)
                .map(|(&m, &s)| (m + s * rng.normal()).exp())
                .collect(),
            Prior::Flat { dim } => vec![0.0; *dim],
        }
    }

    /// Log density of a `[1, d]` tape variable, as a scalar node.
    pub fn logpdf_var(&self, tape: &mut Tape, beta: Var) -> Var {
        match self {
            Prior::Flat { .. } => tape.scalar(0.0),
            Prior::Normal { loc, scale } => gaussian_logpdf_var(tape, beta, loc, scale),
            Prior::LogNormal { loc, scale } => {
                let l = tape.log(beta);
                let g = gaussian_logpdf_var(tape, l, loc, scale);
                let jac = tape.sum(l);
                tape.sub(g, jac)
            }
        }
    }

    /// Location of the prior in the unconstrained space (log space for
    /// positive priors), used to centre variational initialisations.
    pub fn unconstrained_loc(&self) -> Vec<f64> {
        match self {
            Prior::Normal { loc, .. } | Prior::LogNormal { loc, .. } => loc.clone(),
            Prior::Flat { dim } => vec![0.0; *dim],
        }
    }
}

/// `Σ log N(x_i; loc_i, scale_i²)` for a `[1, d]` variable.
pub(crate) fn gaussian_logpdf_var(tape: &mut Tape, x: Var, loc: &[f64], scale: &[f64]) -> Var {
    let d = loc.len();
    let m = tape.constant(Tensor::row(loc.iter().map(|v| -v).collect()));
    let inv = tape.constant(Tensor::row(scale.iter().map(|s| 1.0 / s).collect()));
    let c: f64 = scale.iter().map(|s| -s.ln() - LN_SQRT_2PI).sum();
    let centred = tape.add(x, m);
    let z = tape.mul(centred, inv);
    let sq = tape.square(z);
    let s = tape.sum(sq);
    let h = tape.scale(s, -0.5);
    debug_assert_eq!(tape.value(x).len(), d);
    tape.add_scalar(h, c)
}

/// How the global vector enters a batch of ratio inputs.
#[derive(Clone, Copy, Debug)]
pub enum BetaInput {
    /// One `[1, d]` vector shared by every row.
    Shared(Var),
    /// A `[rows, d]` matrix, one vector per row.
    PerRow(Var),
}

/// Observed data: one row per datum, plus optional per-datum covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub covariates: Option<Tensor>,
}

impl Dataset {
    pub fn new(x: Tensor, covariates: Option<Tensor>) -> Result<Self> {
        if x.shape().len() != 2 || x.rows() == 0 {
            return Err(contract("dataset x must be a non-empty matrix"));
        }
        if let Some(c) = &covariates {
            if c.shape().len() != 2 || c.rows() != x.rows() {
                return Err(contract("covariate rows must match data rows"));
            }
        }
        Ok(Self { x, covariates })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn covariate(&self, n: usize) -> Option<&[f64]> {
        self.covariates.as_ref().map(|c| c.row_slice(n))
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            covariates: self.covariates.as_ref().map(|c| c.select_rows(idx)),
        }
    }
}

/// A hierarchical implicit model.
///
/// Data are produced as `x_n = simulate_local(ε_n, z_n, β, covariate_n)`
/// with `ε_n ~ N(0, I)`, `z_n` drawn from the local prior and `β` from the
/// global prior.
pub trait HimModel: Send + Sync {
    fn global_dim(&self) -> usize;
    fn local_dim(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize;
    fn data_dim(&self) -> usize;
    fn covariate_dim(&self) -> usize {
        0
    }
    fn prior(&self) -> &Prior;

    fn prior_logpdf(&self, beta: &[f64]) -> f64 {
        self.prior().logpdf(beta)
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.prior().sample(rng)
    }

    fn local_prior_sample(&self, _beta: &[f64], _rng: &mut RngStream) -> Vec<f64> {
        Vec::new()
    }

    /// Deterministic given its arguments.
    fn simulate_local(
        &self,
        noise: &[f64],
        z: &[f64],
        beta: &[f64],
        covariate: Option<&[f64]>,
    ) -> Vec<f64>;

    /// Draws `(x_n, z_n)` from `p(x_n, z_n | β)`.
    fn simulate(
        &self,
        beta: &[f64],
        covariate: Option<&[f64]>,
        rng: &mut RngStream,
    ) -> (Vec<f64>, Vec<f64>) {
        let z = self.local_prior_sample(beta, rng);
        let eps = rng.normals(self.noise_dim());
        (self.simulate_local(&eps, &z, beta, covariate), z)
    }

    /// Transformation applied to raw data rows before they reach the ratio
    /// estimator. Identity by default.
    fn data_features(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    fn data_feature_dim(&self) -> usize {
        self.data_dim()
    }

    /// Transformation of the global vector (`[rows, d]`) before it reaches
    /// the ratio estimator. Identity by default.
    fn beta_features(&self, _tape: &mut Tape, beta: Var) -> Var {
        beta
    }

    /// Assembles the ratio-estimator input for a batch. `x` holds
    /// [`data_features`](Self::data_features) rows.
    fn ratio_features(
        &self,
        tape: &mut Tape,
        x: Var,
        z: Option<Var>,
        beta: BetaInput,
        covariates: Option<Var>,
    ) -> Var {
        let rows = tape.value(x).rows();
        let b = match beta {
            BetaInput::Shared(b) => {
                let f = self.beta_features(tape, b);
                let d = tape.value(f).cols();
                tape.broadcast(f, rows, d)
            }
            BetaInput::PerRow(b) => self.beta_features(tape, b),
        };
        let mut parts = vec![x];
        parts.extend(covariates);
        parts.extend(z);
        parts.push(b);
        tape.concat_cols(&parts)
    }

    fn ratio_input_dim(&self) -> usize {
        self.data_feature_dim() + self.covariate_dim() + self.local_dim() + self.global_dim()
    }

    /// Exact `log p(x_n | β)` where the model admits one.
    fn loglik(&self, _x: &[f64], _beta: &[f64], _covariate: Option<&[f64]>) -> Option<f64> {
        None
    }
}

/// Simulates one datum per covariate row (or `n` data without covariates)
/// at a fixed `β`, on per-datum streams derived from `rng`.
pub fn simulate_dataset(
    model: &dyn HimModel,
    beta: &[f64],
    n: usize,
    covariates: Option<Tensor>,
    rng: &RngStream,
) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = rng.split(i as u64);
            model.simulate(beta, covariates.as_ref().map(|c| c.row_slice(i)), &mut r).0
        })
        .collect();
    Dataset::new(Tensor::from_rows(&rows)?, covariates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lognormal_logpdf_reference() {
        let p = Prior::LogNormal {
            loc: vec![0.0; 3],
            scale: vec![1.0; 3],
        };
        assert!((p.logpdf(&[1.0, 1.0, 1.0]) + 3.0 * 0.918_938_533_204_672_8).abs() < 1e-12);
        assert_eq!(p.logpdf(&[0.0, 1.0, 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn tape_logpdf_matches_scalar() {
        for p in [
            Prior::Normal {
                loc: vec![0.3, -1.0],
                scale: vec![2.0, 0.5],
            },
            Prior::LogNormal {
                loc: vec![-1.0, 0.2],
                scale: vec![1.0, 0.3],
            },
            Prior::Flat { dim: 2 },
        ] {
            let b = [0.7, 1.9];
            let mut tape = Tape::new();
            let v = tape.constant(Tensor::row(b.to_vec()));
            let l = p.logpdf_var(&mut tape, v);
            assert!((tape.value(l).item() - p.logpdf(&b)).abs() < 1e-12);
        }
    }
}
