//! Bayesian linear regression with Gaussian weights and noise:
//! `x_n = W^T c_n + σ ε_n`, with covariate `c_n` and `W ~ N(0, s0² I)`.
//! The global vector is `W` flattened row-major (`feature_dim × output_dim`).

use super::{BetaInput, Dataset, HimModel, Prior};
use serde::{Deserialize, Serialize};
use crate::error::{contract, Result};
use crate::ndcore::scalar::normal_logpdf;
use crate::ndcore::{RngStream, Tape, Tensor, Var};

/// What the ratio estimator sees of `(x_n, c_n, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinregFeatures {
    /// `[x, c, β]`.
    #[default]
    Raw,
    /// `[x, c, β, x − g(0; β, c)]`: adds the residual from the simulator run
    /// at zero noise.
    Residual,
}

#[derive(Clone, Debug)]
pub struct LinregModel {
    pub feature_dim: usize,
    pub output_dim: usize,
    pub prior_sd: f64,
    pub noise_sd: f64,
    pub features: LinregFeatures,
    prior: Prior,
}

/// Exact posterior over `W`: columns are independent and share one
/// `feature_dim × feature_dim` covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct LinregPosterior {
    /// Flattened like `β`.
    pub mean: Vec<f64>,
    pub column_cov: Vec<Vec<f64>>,
    pub output_dim: usize,
}

impl LinregPosterior {
    /// Marginal standard deviations, flattened like `β`.
    pub fn marginal_sd(&self) -> Vec<f64> {
        let f = self.column_cov.len();
        (0..f * self.output_dim)
            .map(|i| self.column_cov[i / self.output_dim][i / self.output_dim].sqrt())
            .collect()
    }
}

impl LinregModel {
    pub fn new(feature_dim: usize, output_dim: usize, prior_sd: f64, noise_sd: f64) -> Result<Self> {
        if feature_dim == 0 || output_dim == 0 || !(prior_sd > 0.0) || !(noise_sd > 0.0) {
            return Err(contract("linreg dimensions and scales must be positive"));
        }
        let d = feature_dim * output_dim;
        Ok(Self {
            feature_dim,
            output_dim,
            prior_sd,
            noise_sd,
            features: LinregFeatures::default(),
            prior: Prior::Normal {
                loc: vec![0.0; d],
                scale: vec![prior_sd; d],
            },
        })
    }

    fn mean_output(&self, beta: &[f64], c: &[f64]) -> Vec<f64> {
        (0..self.output_dim)
            .map(|k| (0..self.feature_dim).map(|i| c[i] * beta[i * self.output_dim + k]).sum())
            .collect()
    }

    /// Covariates drawn from `N(0, 1)`, data simulated at `beta`.
    pub fn generate(&self, n: usize, beta: &[f64], rng: &mut RngStream) -> Result<Dataset> {
        let cov = Tensor::matrix(n, self.feature_dim, rng.normals(n * self.feature_dim));
        super::simulate_dataset(self, beta, n, Some(cov), &rng.split(1))
    }

    /// Total `log p(x | β)` over a dataset.
    pub fn dataset_loglik(&self, data: &Dataset, beta: &[f64]) -> f64 {
        (0..data.len())
            .map(|n| self.loglik(data.x.row_slice(n), beta, data.covariate(n)).unwrap())
            .sum()
    }

    pub fn posterior(&self, data: &Dataset) -> Result<LinregPosterior> {
        let c = data
            .covariates
            .as_ref()
            .ok_or_else(|| contract("linreg needs covariates"))?;
        let f = self.feature_dim;
        let s2 = self.noise_sd * self.noise_sd;
        let mut prec = vec![vec![0.0; f]; f];
        for i in 0..f {
            prec[i][i] = 1.0 / (self.prior_sd * self.prior_sd);
        }
        for n in 0..data.len() {
            let row = c.row_slice(n);
            for i in 0..f {
                for j in 0..f {
                    prec[i][j] += row[i] * row[j] / s2;
                }
            }
        }
        let cov = invert_spd(&prec)?;
        let mut mean = vec![0.0; f * self.output_dim];
        for k in 0..self.output_dim {
            let rhs: Vec<f64> = (0..f)
                .map(|i| {
                    (0..data.len())
                        .map(|n| c.row_slice(n)[i] * data.x.row_slice(n)[k])
                        .sum::<f64>()
                        / s2
                })
                .collect();
            for i in 0..f {
                mean[i * self.output_dim + k] = (0..f).map(|j| cov[i][j] * rhs[j]).sum();
            }
        }
        Ok(LinregPosterior {
            mean,
            column_cov: cov,
            output_dim: self.output_dim,
        })
    }
}

/// Gauss-Jordan inverse of a small symmetric positive-definite matrix.
pub(crate) fn invert_spd(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[piv][col].abs() < 1e-300 {
            return Err(contract("singular matrix"));
        }
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

impl HimModel for LinregModel {
    fn global_dim(&self) -> usize {
        self.feature_dim * self.output_dim
    }

    fn noise_dim(&self) -> usize {
        self.output_dim
    }

    fn data_dim(&self) -> usize {
        self.output_dim
    }

    fn covariate_dim(&self) -> usize {
        self.feature_dim
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn simulate_local(&self, noise: &[f64], _z: &[f64], beta: &[f64], c: Option<&[f64]>) -> Vec<f64> {
        let c = c.expect("linreg needs a covariate");
        self.mean_output(beta, c)
            .into_iter()
            .zip(noise)
            .map(|(m, e)| m + self.noise_sd * e)
            .collect()
    }

    fn ratio_features(
        &self,
        tape: &mut Tape,
        x: Var,
        z: Option<Var>,
        beta: BetaInput,
        covariates: Option<Var>,
    ) -> Var {
        let cov = covariates.expect("linreg needs covariates");
        let rows = tape.value(x).rows();
        let b = match beta {
            BetaInput::Shared(b) => tape.broadcast(b, rows, self.global_dim()),
            BetaInput::PerRow(b) => b,
        };
        let mut parts = vec![x, cov];
        parts.extend(z);
        parts.push(b);
        if self.features == LinregFeatures::Residual {
            let o = self.output_dim;
            let mut mean: Option<Var> = None;
            for i in 0..self.feature_dim {
                let w = tape.slice_cols(b, i * o, (i + 1) * o);
                let c = tape.slice_cols(cov, i, i + 1);
                let t = tape.mul_bcast(w, c);
                mean = Some(match mean {
                    Some(m) => tape.add(m, t),
                    None => t,
                });
            }
            let resid = tape.sub(x, mean.expect("feature_dim > 0"));
            parts.push(resid);
        }
        tape.concat_cols(&parts)
    }

    fn ratio_input_dim(&self) -> usize {
        let base = self.data_dim() + self.covariate_dim() + self.global_dim();
        match self.features {
            LinregFeatures::Raw => base,
            LinregFeatures::Residual => base + self.output_dim,
        }
    }

    fn loglik(&self, x: &[f64], beta: &[f64], c: Option<&[f64]>) -> Option<f64> {
        let m = self.mean_output(beta, c?);
        Some(x.iter().zip(m).map(|(&xi, mi)| normal_logpdf(xi, mi, self.noise_sd)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_features_vanish_at_zero_noise() {
        let mut m = LinregModel::new(2, 2, 1.0, 1.0).unwrap();
        m.features = LinregFeatures::Residual;
        let beta = [1.0, 2.0, -1.0, 0.5];
        let c = [0.3, -2.0];
        let x = m.simulate_local(&[0.0, 0.0], &[], &beta, Some(&c));
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::row(x.clone()));
        let cv = tape.constant(Tensor::row(c.to_vec()));
        let bv = tape.constant(Tensor::row(beta.to_vec()));
        let f = m.ratio_features(&mut tape, xv, None, BetaInput::Shared(bv), Some(cv));
        let f = tape.value(f).data().to_vec();
        assert_eq!(f.len(), m.ratio_input_dim());
        assert_eq!(&f[..2], &x[..]);
        assert!(f[8..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn near_zero_noise_solves_normal_equations() {
        let m = LinregModel::new(2, 1, 1e6, 1e-6).unwrap();
        let c = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = Tensor::matrix(3, 1, vec![1.0, 2.0, 4.0]);
        // least squares: (XᵀX)⁻¹Xᵀy with XᵀX = [[2,1],[1,2]], Xᵀy = [5, 6]
        let expect = [4.0 / 3.0, 7.0 / 3.0];
        let post = m.posterior(&Dataset::new(x, Some(c)).unwrap()).unwrap();
        for (a, b) in post.mean.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_of_known_matrix() {
        let inv = invert_spd(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let expect = [[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
    }
}
