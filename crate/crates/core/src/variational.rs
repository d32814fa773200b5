//! Variational families: reparameterised mean-field globals, point masses,
//! and an implicit amortised local family.

use crate::error::{contract, Result};
use crate::models::{BetaInput, Prior};
use crate::ndcore::scalar::LN_SQRT_2PI;
use crate::ndcore::{
    mlp_apply, Activation, InitMode, Mlp, MlpVars, Normalize, RngStream, Tape, Tensor, Var,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GlobalKind {
    #[default]
    MeanfieldNormal,
    /// `β = exp(μ + σ δ)`, for positive parameters.
    MeanfieldLognormal,
    PointMass,
}

/// `q(β)`. For mean-field kinds `loc` and `log_scale` are the mean and log
/// standard deviation of `β` (or of `log β`); a point mass uses `loc` only.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalApprox {
    pub kind: GlobalKind,
    pub loc: Tensor,
    pub log_scale: Tensor,
}

/// A draw from `q(β)` recorded on a tape.
#[derive(Clone, Debug)]
pub struct GlobalDraw {
    /// `[1, d]`
    pub beta: Var,
    /// `log q(β)`, absent for a point mass.
    pub log_q: Option<Var>,
    /// Tape handles of `λ`, in [`GlobalApprox::params`] order.
    pub params: Vec<Var>,
}

impl GlobalApprox {
    pub fn meanfield(kind: GlobalKind, loc: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if kind == GlobalKind::PointMass {
            return Err(contract("use GlobalApprox::point_mass"));
        }
        if loc.len() != scale.len() || scale.iter().any(|&s| !(s > 0.0)) {
            return Err(contract("scales must be positive and match the location length"));
        }
        Ok(Self {
            kind,
            loc: Tensor::row(loc),
            log_scale: Tensor::row(scale.iter().map(|s| s.ln()).collect()),
        })
    }

    pub fn point_mass(value: Vec<f64>) -> Self {
        let d = value.len();
        Self {
            kind: GlobalKind::PointMass,
            loc: Tensor::row(value),
            log_scale: Tensor::zeros(&[1, d]),
        }
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self.kind {
            GlobalKind::PointMass => vec![&self.loc],
            _ => vec![&self.loc, &self.log_scale],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self.kind {
            GlobalKind::PointMass => vec![&mut self.loc],
            _ => vec![&mut self.loc, &mut self.log_scale],
        }
    }

    pub fn scale(&self) -> Vec<f64> {
        self.log_scale.data().iter().map(|v| v.exp()).collect()
    }

    /// Places `λ` on the tape.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    /// Reparameterised draw from `λ` handles returned by
    /// [`on_tape`](Self::on_tape), with standard normal `delta` (ignored for
    /// a point mass).
    pub fn draw(&self, tape: &mut Tape, params: &[Var], delta: &[f64]) -> GlobalDraw {
        let loc = params[0];
        if self.kind == GlobalKind::PointMass {
            return GlobalDraw {
                beta: loc,
                log_q: None,
                params: vec![loc],
            };
        }
        let ls = params[1];
        let d = tape.constant(Tensor::row(delta.to_vec()));
        let sd = tape.exp(ls);
        let noise = tape.mul(sd, d);
        let u = tape.add(loc, noise);
        // log N(u; loc, sd) written through δ so the pathwise gradient is exact
        let sq: f64 = delta.iter().map(|v| v * v).sum();
        let sum_ls = tape.sum(ls);
        let neg = tape.neg(sum_ls);
        let mut log_q = tape.add_scalar(neg, -0.5 * sq - LN_SQRT_2PI * self.dim() as f64);
        let beta = match self.kind {
            GlobalKind::MeanfieldNormal => u,
            GlobalKind::MeanfieldLognormal => {
                let jac = tape.sum(u);
                log_q = tape.sub(log_q, jac);
                tape.exp(u)
            }
            GlobalKind::PointMass => unreachable!(),
        };
        GlobalDraw {
            beta,
            log_q: Some(log_q),
            params: vec![loc, ls],
        }
    }

    pub fn sample_with(&self, tape: &mut Tape, delta: &[f64], trainable: bool) -> GlobalDraw {
        let params = self.on_tape(tape, trainable);
        self.draw(tape, &params, delta)
    }

    pub fn sample(&self, tape: &mut Tape, rng: &mut RngStream, trainable: bool) -> GlobalDraw {
        let delta = self.draw_delta(rng);
        self.sample_with(tape, &delta, trainable)
    }

    pub fn draw_delta(&self, rng: &mut RngStream) -> Vec<f64> {
        match self.kind {
            GlobalKind::PointMass => Vec::new(),
            _ => rng.normals(self.dim()),
        }
    }

    /// A draw of `β` as plain values.
    pub fn sample_value(&self, rng: &mut RngStream) -> Vec<f64> {
        let delta = self.draw_delta(rng);
        self.transform(&delta)
    }

    fn transform(&self, delta: &[f64]) -> Vec<f64> {
        let loc = self.loc.data();
        match self.kind {
            GlobalKind::PointMass => loc.to_vec(),
            _ => {
                let u = loc
                    .iter()
                    .zip(self.scale())
                    .zip(delta)
                    .map(|((m, s), d)| m + s * d);
                if self.kind == GlobalKind::MeanfieldLognormal {
                    u.map(f64::exp).collect()
                } else {
                    u.collect()
                }
            }
        }
    }

    /// `log q(β)`; `None` for a point mass.
    pub fn logpdf(&self, beta: &[f64]) -> Option<f64> {
        let prior_like = match self.kind {
            GlobalKind::PointMass => return None,
            GlobalKind::MeanfieldNormal => Prior::Normal {
                loc: self.loc.data().to_vec(),
                scale: self.scale(),
            },
            GlobalKind::MeanfieldLognormal => Prior::LogNormal {
                loc: self.loc.data().to_vec(),
                scale: self.scale(),
            },
        };
        Some(prior_like.logpdf(beta))
    }

    /// Marginal `p`-quantile of each component.
    pub fn quantile(&self, p: f64) -> Vec<f64> {
        let z = crate::diagnostics::normal_quantile(p);
        self.transform(&vec![z; self.dim()])
    }

    /// Marginal means of `β`.
    pub fn mean(&self) -> Vec<f64> {
        let loc = self.loc.data();
        match self.kind {
            GlobalKind::PointMass | GlobalKind::MeanfieldNormal => loc.to_vec(),
            GlobalKind::MeanfieldLognormal => loc
                .iter()
                .zip(self.scale())
                .map(|(m, s)| (m + 0.5 * s * s).exp())
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loc.all_finite() && self.log_scale.all_finite()
    }
}

/// `log p(β) − log q(β)` for mean-field kinds; `log p(β)` for a point mass
/// (zero under a flat prior).
pub fn entropy_term(tape: &mut Tape, draw: &GlobalDraw, prior: &Prior) -> Var {
    let lp = prior.logpdf_var(tape, draw.beta);
    match draw.log_q {
        Some(lq) => tape.sub(lp, lq),
        None => lp,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub family: GlobalKind,
    /// Initial location (unconstrained space); defaults to the prior's.
    pub init_loc: Option<Vec<f64>>,
    /// Standard deviation of the random perturbation of the initial location.
    pub init_jitter: f64,
    /// Initial scale of mean-field kinds.
    pub init_scale: f64,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            family: GlobalKind::MeanfieldNormal,
            init_loc: None,
            init_jitter: 0.1,
            init_scale: 0.5,
        }
    }
}

impl GlobalConfig {
    pub fn build(&self, prior: &Prior, rng: &mut RngStream) -> Result<GlobalApprox> {
        let d = prior.dim();
        let loc = self.init_loc.clone().unwrap_or_else(|| prior.unconstrained_loc());
        if loc.len() != d {
            return Err(contract("init_loc length does not match the global dimension"));
        }
        if self.family == GlobalKind::MeanfieldNormal && prior.is_positive() {
            return Err(contract(
                "a positive-support prior needs the meanfield_lognormal or point_mass family",
            ));
        }
        let loc: Vec<f64> = loc.iter().map(|m| m + self.init_jitter * rng.normal()).collect();
        match self.family {
            GlobalKind::PointMass => {
                let v = if prior.is_positive() {
                    loc.iter().map(|v| v.exp()).collect()
                } else {
                    loc
                };
                Ok(GlobalApprox::point_mass(v))
            }
            kind => GlobalApprox::meanfield(kind, loc, vec![self.init_scale; d]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalConfig {
    pub hidden: Vec<usize>,
    /// Width of `δ_n`; defaults to the local dimension.
    pub noise_dim: Option<usize>,
    pub init: InitMode,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            noise_dim: None,
            init: InitMode::Scaled,
        }
    }
}

/// Implicit `q(z_n | x_n, β)`: `z_n = MLP_φ([δ_n, x_n, β])` with
/// `δ_n ~ N(0, I)`. It exposes no density.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalApprox {
    pub net: Mlp,
    pub noise_dim: usize,
    pub data_dim: usize,
    pub global_dim: usize,
}

impl LocalApprox {
    pub fn new(
        data_dim: usize,
        global_dim: usize,
        local_dim: usize,
        cfg: &LocalConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if local_dim == 0 {
            return Err(contract("a local family needs local_dim > 0"));
        }
        let noise_dim = cfg.noise_dim.unwrap_or(local_dim);
        let mut sizes = vec![noise_dim + data_dim + global_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(local_dim);
        Ok(Self {
            net: Mlp::new(&sizes, Activation::Relu, Normalize::None, cfg.init, rng),
            noise_dim,
            data_dim,
            global_dim,
        })
    }

    pub fn local_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// `z` for a batch given `φ` handles from `self.net.on_tape`: `x` is
    /// `[rows, data_dim]`, `delta` is `[rows, noise_dim]`.
    pub fn apply(
        &self,
        tape: &mut Tape,
        vars: &MlpVars,
        x: Var,
        beta: BetaInput,
        delta: &Tensor,
    ) -> Result<Var> {
        let rows = tape.value(x).rows();
        if delta.rows() != rows || delta.cols() != self.noise_dim {
            return Err(contract("local noise shape mismatch"));
        }
        let b = match beta {
            BetaInput::Shared(b) => tape.broadcast(b, rows, self.global_dim),
            BetaInput::PerRow(b) => b,
        };
        let d = tape.constant(delta.clone());
        let inp = tape.concat_cols(&[d, x, b]);
        mlp_apply(tape, vars, inp)
    }

    pub fn sample_with(
        &self,
        tape: &mut Tape,
        x: Var,
        beta: BetaInput,
        delta: &Tensor,
        trainable: bool,
    ) -> Result<(Var, MlpVars)> {
        let vars = self.net.on_tape(tape, trainable);
        Ok((self.apply(tape, &vars, x, beta, delta)?, vars))
    }

    pub fn sample(
        &self,
        tape: &mut Tape,
        x: Var,
        beta: BetaInput,
        rng: &mut RngStream,
        trainable: bool,
    ) -> Result<(Var, MlpVars)> {
        let rows = tape.value(x).rows();
        let delta = Tensor::matrix(rows, self.noise_dim, rng.normals(rows * self.noise_dim));
        self.sample_with(tape, x, beta, &delta, trainable)
    }
}
