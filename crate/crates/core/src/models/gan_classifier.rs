//! Bayesian GAN classifier: `y_n = sign(MLP_θ([x_n, ε_n]))` with a standard
//! normal prior over every network parameter.

use super::{BetaInput, HimModel, Prior};
use crate::error::{contract, Result};
use crate::ndcore::{
    mlp_apply, Activation, InitMode, Mlp, MlpLayout, Normalize, RngStream, Tape, Tensor, Var,
};
use serde::{Deserialize, Serialize};

/// Noise values at which the network is probed for the `hidden` ratio
/// features: standard normal quantiles at 0.1, 0.3, 0.5, 0.7, 0.9.
pub const PROBE_NOISE: [f64; 5] = [
    -1.281_551_565_544_600_4,
    -0.524_400_512_708_040_7,
    0.0,
    0.524_400_512_708_040_7,
    1.281_551_565_544_600_4,
];

/// What the ratio estimator sees of `(x_n, y_n, θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GanRatioFeatures {
    /// The covariates, the label and the raw parameter vector.
    Raw,
    /// The covariates, the label, and the label times the network output at
    /// each probe noise value.
    #[default]
    Hidden,
}

#[derive(Clone, Debug)]
pub struct GanClassifierModel {
    pub feature_dim: usize,
    pub hidden: usize,
    pub normalize: Normalize,
    pub ratio_mode: GanRatioFeatures,
    layout: MlpLayout,
    prior: Prior,
}

/// `+1` for nonnegative logits, `-1` otherwise.
pub fn sign_label(logit: f64) -> f64 {
    if logit >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl GanClassifierModel {
    pub fn new(
        feature_dim: usize,
        hidden: usize,
        normalize: Normalize,
        ratio_mode: GanRatioFeatures,
    ) -> Result<Self> {
        if feature_dim == 0 || hidden == 0 {
            return Err(contract("feature_dim and hidden must be positive"));
        }
        let layout = Mlp::zeros(&[feature_dim + 1, hidden, 1], Activation::Relu, normalize).layout();
        let prior = Prior::standard_normal(layout.num_params());
        Ok(Self {
            feature_dim,
            hidden,
            normalize,
            ratio_mode,
            layout,
            prior,
        })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    /// Network with parameters `theta`.
    pub fn network(&self, theta: &[f64]) -> Mlp {
        let mut m = Mlp::zeros(&[self.feature_dim + 1, self.hidden, 1], Activation::Relu, self.normalize);
        m.set_from_flat(theta).expect("theta length");
        m
    }

    /// A parameter vector drawn like a freshly initialised network.
    pub fn init_theta(&self, init: InitMode, rng: &mut RngStream) -> Vec<f64> {
        Mlp::new(
            &[self.feature_dim + 1, self.hidden, 1],
            Activation::Relu,
            self.normalize,
            init,
            rng,
        )
        .flatten()
    }

    /// Logits for each `(x_i, ε_i)` pair.
    pub fn logits(&self, theta: &[f64], x: &Tensor, eps: &[f64]) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .map(|r| {
                let mut v = x.row_slice(r).to_vec();
                v.push(eps[r]);
                v
            })
            .collect();
        self.network(theta)
            .forward(&Tensor::from_rows(&rows).expect("rows"))
            .expect("shapes checked")
            .into_data()
    }

    pub fn classify(&self, theta: &[f64], x: &[f64], eps: f64) -> f64 {
        sign_label(self.logits(theta, &Tensor::row(x.to_vec()), &[eps])[0])
    }

    fn probe_outputs(&self, tape: &mut Tape, theta: Var, cov: &Tensor) -> Var {
        let net = self.layout.vars_from_flat(tape, theta, 0);
        let rows = cov.rows();
        let cols: Vec<Var> = PROBE_NOISE
            .iter()
            .map(|&e| {
                let mut input = Vec::with_capacity(rows * (self.feature_dim + 1));
                for r in 0..rows {
                    input.extend_from_slice(cov.row_slice(r));
                    input.push(e);
                }
                let inp = tape.constant(Tensor::matrix(rows, self.feature_dim + 1, input));
                mlp_apply(tape, &net, inp).expect("probe shapes")
            })
            .collect();
        tape.concat_cols(&cols)
    }
}

/// Majority vote over `n_draws` noise draws for each parameter sample.
/// Returns the label (ties go to `+1`) and the fraction of `+1` votes.
pub fn predictive_label(
    model: &GanClassifierModel,
    thetas: &[Vec<f64>],
    x: &[f64],
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if n_draws == 0 || thetas.is_empty() {
        return Err(contract("need at least one draw and one parameter sample"));
    }
    let xs = Tensor::from_rows(&vec![x.to_vec(); n_draws])?;
    let mut plus = 0usize;
    for th in thetas {
        let eps = rng.normals(n_draws);
        plus += model.logits(th, &xs, &eps).iter().filter(|&&l| l >= 0.0).count();
    }
    let frac = plus as f64 / (n_draws * thetas.len()) as f64;
    Ok((if frac >= 0.5 { 1.0 } else { -1.0 }, frac))
}

impl HimModel for GanClassifierModel {
    fn global_dim(&self) -> usize {
        self.layout.num_params()
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn covariate_dim(&self) -> usize {
        self.feature_dim
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn simulate_local(&self, noise: &[f64], _z: &[f64], beta: &[f64], c: Option<&[f64]>) -> Vec<f64> {
        vec![self.classify(beta, c.expect("classifier needs covariates"), noise[0])]
    }

    fn ratio_features(
        &self,
        tape: &mut Tape,
        x: Var,
        z: Option<Var>,
        beta: BetaInput,
        covariates: Option<Var>,
    ) -> Var {
        let cov = covariates.expect("classifier needs covariates");
        match self.ratio_mode {
            GanRatioFeatures::Raw => {
                let rows = tape.value(x).rows();
                let b = match beta {
                    BetaInput::Shared(b) => {
                        let d = tape.value(b).cols();
                        tape.broadcast(b, rows, d)
                    }
                    BetaInput::PerRow(b) => b,
                };
                let mut parts = vec![x, cov];
                parts.extend(z);
                parts.push(b);
                tape.concat_cols(&parts)
            }
            GanRatioFeatures::Hidden => {
                let cov_t = tape.value(cov).clone();
                let probes = match beta {
                    BetaInput::Shared(b) => self.probe_outputs(tape, b, &cov_t),
                    BetaInput::PerRow(b) => {
                        let rows: Vec<Var> = (0..cov_t.rows())
                            .map(|r| {
                                let th = tape.slice_rows(b, r, r + 1);
                                let c = cov_t.select_rows(&[r]);
                                self.probe_outputs(tape, th, &c)
                            })
                            .collect();
                        tape.concat_rows(&rows)
                    }
                };
                let signed = tape.mul_bcast(probes, x);
                tape.concat_cols(&[x, cov, signed])
            }
        }
    }

    fn ratio_input_dim(&self) -> usize {
        match self.ratio_mode {
            GanRatioFeatures::Raw => 1 + self.feature_dim + self.global_dim(),
            GanRatioFeatures::Hidden => 1 + self.feature_dim + PROBE_NOISE.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GanClassifierModel {
        GanClassifierModel::new(3, 4, Normalize::None, GanRatioFeatures::Hidden).unwrap()
    }

    #[test]
    fn zero_theta_labels_plus_one() {
        let m = model();
        let th = vec![0.0; m.global_dim()];
        assert_eq!(m.classify(&th, &[1.0, -2.0, 3.0], -0.7), 1.0);
    }

    #[test]
    fn flipping_output_weights_flips_labels() {
        let m = model();
        let mut rng = RngStream::new(9, 0);
        let th = m.init_theta(InitMode::StandardNormal, &mut rng);
        let mut net = m.network(&th);
        net.layers[1].weight = net.layers[1].weight.map(|w| -w);
        net.layers[1].bias = net.layers[1].bias.map(|w| -w);
        let flipped = net.flatten();
        for _ in 0..200 {
            let x = rng.normals(3);
            let e = rng.normal();
            let (a, b) = (
                m.logits(&th, &Tensor::row(x.clone()), &[e])[0],
                m.logits(&flipped, &Tensor::row(x), &[e])[0],
            );
            if a != 0.0 {
                assert_eq!(sign_label(a), -sign_label(b));
            }
        }
    }
}
