//! Likelihood-free variational inference: alternate ratio-estimator steps
//! with ascent steps on the surrogate ELBO
//! `log p(β) − log q(β) + (N/M) Σ_m r(x_m, z_m, β)`.

use crate::error::{contract, Error, Result};
use crate::models::{BetaInput, Dataset, HimModel};
use crate::ndcore::{
    clip_grad_norm, AdamConfig, AdamState, MlpVars, RngStream, StepOutcome, Tape, Tensor, Var,
};
use crate::ratio::{LossKind, RatioConfig, RatioEstimator};
use crate::variational::{
    entropy_term, GlobalApprox, GlobalConfig, GlobalKind, LocalApprox, LocalConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfviConfig {
    pub n_iterations: usize,
    /// Data minibatch size `M` of the variational step.
    pub batch_size: usize,
    /// Number of `(p, q)` sample pairs per ratio step.
    pub ratio_batch_size: usize,
    /// Reparameterised draws of `β` per variational step.
    pub mc_samples: usize,
    pub ratio_steps_per_q_step: usize,
    /// Ratio steps taken before the first variational step.
    pub ratio_warmup: usize,
    pub loss: LossKind,
    /// Optimiser of `λ` and `φ`.
    pub optimizer: AdamConfig,
    pub ratio: RatioConfig,
    pub global: GlobalConfig,
    pub local: LocalConfig,
    /// Gradient-norm bound applied during the first `clip_iterations`.
    pub clip_norm: f64,
    pub clip_iterations: usize,
    /// Draw a fresh `β` for every pair in a ratio batch (otherwise one draw
    /// is shared by the batch).
    pub beta_per_pair: bool,
    pub seed: u64,
}

impl Default for LfviConfig {
    fn default() -> Self {
        Self {
            n_iterations: 2000,
            batch_size: 64,
            ratio_batch_size: 128,
            mc_samples: 1,
            ratio_steps_per_q_step: 1,
            ratio_warmup: 0,
            loss: LossKind::Log,
            optimizer: AdamConfig::with_lr(1e-2),
            ratio: RatioConfig::default(),
            global: GlobalConfig::default(),
            local: LocalConfig::default(),
            clip_norm: 10.0,
            clip_iterations: 500,
            beta_per_pair: true,
            seed: 0,
        }
    }
}

impl LfviConfig {
    pub fn validate(&self, n_data: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n_data {
            return Err(contract(format!(
                "batch_size must be in 1..={n_data}, got {}",
                self.batch_size
            )));
        }
        if self.ratio_batch_size == 0 || self.mc_samples == 0 || self.ratio_steps_per_q_step == 0 {
            return Err(contract("batch and step counts must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(contract("clip_norm must be positive"));
        }
        Ok(())
    }
}

/// `(N / M) Σ values`.
pub fn minibatch_estimate(values: &[f64], n: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(contract("empty minibatch"));
    }
    Ok(n as f64 / values.len() as f64 * values.iter().sum::<f64>())
}

/// Anything that maps ratio features (`[rows, width]`) to logits
/// (`[rows, 1]`) on a tape without exposing trainable parameters.
pub trait RatioFn {
    fn logits(&self, tape: &mut Tape, features: Var) -> Result<Var>;
}

impl RatioFn for RatioEstimator {
    fn logits(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        Ok(self.apply(tape, features, false)?.0)
    }
}

/// A ratio given by a closure, e.g. an exact log ratio in tests.
pub struct ClosureRatio<F>(pub F);

impl<F: Fn(&mut Tape, Var) -> Var> RatioFn for ClosureRatio<F> {
    fn logits(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        Ok((self.0)(tape, features))
    }
}

/// Handles of a surrogate-ELBO evaluation.
pub struct Surrogate {
    pub value: Var,
    pub global_params: Vec<Var>,
    pub local_params: Option<MlpVars>,
}

/// Draws for one surrogate evaluation: a `δ_global` per Monte Carlo sample
/// and, with a local family, `δ_n` rows per sample.
pub struct SurrogateNoise {
    pub global: Vec<Vec<f64>>,
    pub local: Vec<Tensor>,
}

/// Records the surrogate ELBO for the data rows `batch` on `tape`, averaged
/// over the Monte Carlo draws in `noise`. `data_features` holds the ratio
/// features of every datum.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_elbo(
    tape: &mut Tape,
    model: &dyn HimModel,
    q_global: &GlobalApprox,
    q_local: Option<&LocalApprox>,
    ratio: &dyn RatioFn,
    data: &Dataset,
    data_features: &Tensor,
    batch: &[usize],
    noise: &SurrogateNoise,
) -> Result<Surrogate> {
    if batch.is_empty() {
        return Err(contract("empty minibatch"));
    }
    let n = data.len() as f64;
    let m = batch.len() as f64;
    let global_params = q_global.on_tape(tape, true);
    let local_params = q_local.map(|l| l.net.on_tape(tape, true));
    let x = tape.constant(data_features.select_rows(batch));
    let cov = data
        .covariates
        .as_ref()
        .map(|c| tape.constant(c.select_rows(batch)));
    let mut total: Option<Var> = None;
    for (s, delta) in noise.global.iter().enumerate() {
        let draw = q_global.draw(tape, &global_params, delta);
        let ent = entropy_term(tape, &draw, model.prior());
        let z = match (q_local, &local_params) {
            (Some(l), Some(vars)) => {
                Some(l.apply(tape, vars, x, BetaInput::Shared(draw.beta), &noise.local[s])?)
            }
            _ => None,
        };
        let feats = model.ratio_features(tape, x, z, BetaInput::Shared(draw.beta), cov);
        let r = ratio.logits(tape, feats)?;
        let rs = tape.sum(r);
        let scaled = tape.scale(rs, n / m);
        let v = tape.add(ent, scaled);
        total = Some(match total {
            Some(t) => tape.add(t, v),
            None => v,
        });
    }
    let value = tape.scale(total.expect("at least one draw"), 1.0 / noise.global.len() as f64);
    Ok(Surrogate {
        value,
        global_params,
        local_params,
    })
}

/// One row of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub ratio_loss: f64,
    pub surrogate_elbo: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub q_global: GlobalApprox,
    pub q_local: Option<LocalApprox>,
    pub ratio: RatioEstimator,
    pub trace: Vec<TraceRecord>,
    /// Steps rejected for non-finite values.
    pub skipped_steps: usize,
    /// Set when optimisation diverged; the trace is then partial.
    pub diverged: Option<String>,
}

/// Hash of the bit patterns of a set of tensors.
pub fn param_hash<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for t in params {
        t.shape().hash(&mut h);
        for v in t.data() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// The alternating optimisation state.
pub struct Lfvi<'a> {
    pub model: &'a dyn HimModel,
    pub data: &'a Dataset,
    data_features: Tensor,
    pub q_global: GlobalApprox,
    pub q_local: Option<LocalApprox>,
    pub ratio: RatioEstimator,
    q_opt: AdamState,
    pub cfg: LfviConfig,
    root: RngStream,
    pub iteration: usize,
    pub skipped_steps: usize,
    ratio_calls: usize,
}

/// Samples used in one ratio step, as ratio features.
pub struct RatioBatch {
    pub p: Tensor,
    pub q: Tensor,
}

impl<'a> Lfvi<'a> {
    pub fn new(model: &'a dyn HimModel, data: &'a Dataset, cfg: LfviConfig) -> Result<Self> {
        cfg.validate(data.len())?;
        if data.x.cols() != model.data_dim() {
            return Err(contract(format!(
                "data width {} does not match the model's {}",
                data.x.cols(),
                model.data_dim()
            )));
        }
        if data.covariates.as_ref().map_or(0, |c| c.cols()) != model.covariate_dim() {
            return Err(contract("covariate width does not match the model"));
        }
        let root = RngStream::new(cfg.seed, 0);
        let q_global = cfg.global.build(model.prior(), &mut root.derive(&[0, 0]))?;
        let data_features = model.data_features(&data.x);
        let q_local = if model.local_dim() > 0 {
            Some(LocalApprox::new(
                data_features.cols(),
                model.global_dim(),
                model.local_dim(),
                &cfg.local,
                &mut root.derive(&[0, 1]),
            )?)
        } else {
            None
        };
        let ratio = RatioEstimator::new(
            model.ratio_input_dim(),
            &cfg.ratio,
            cfg.loss,
            &mut root.derive(&[0, 2]),
        )?;
        Ok(Self::assemble(model, data, data_features, q_global, q_local, ratio, cfg, root))
    }

    /// Starts from given approximations (e.g. to freeze `q` at a known value).
    pub fn with_state(
        model: &'a dyn HimModel,
        data: &'a Dataset,
        cfg: LfviConfig,
        q_global: GlobalApprox,
        q_local: Option<LocalApprox>,
        ratio: RatioEstimator,
    ) -> Result<Self> {
        cfg.validate(data.len())?;
        let root = RngStream::new(cfg.seed, 0);
        let data_features = model.data_features(&data.x);
        Ok(Self::assemble(model, data, data_features, q_global, q_local, ratio, cfg, root))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: &'a dyn HimModel,
        data: &'a Dataset,
        data_features: Tensor,
        q_global: GlobalApprox,
        q_local: Option<LocalApprox>,
        ratio: RatioEstimator,
        cfg: LfviConfig,
        root: RngStream,
    ) -> Self {
        let mut qp: Vec<&Tensor> = q_global.params();
        if let Some(l) = &q_local {
            qp.extend(l.net.params());
        }
        let q_opt = AdamState::new(cfg.optimizer, qp);
        Self {
            model,
            data,
            data_features,
            q_global,
            q_local,
            ratio,
            q_opt,
            cfg,
            root,
            iteration: 0,
            skipped_steps: 0,
            ratio_calls: 0,
        }
    }

    pub fn data_features(&self) -> &Tensor {
        &self.data_features
    }

    fn clip(&self) -> Option<f64> {
        (self.iteration < self.cfg.clip_iterations).then_some(self.cfg.clip_norm)
    }

    /// Hash of `λ` and `φ`.
    pub fn q_hash(&self) -> u64 {
        let mut p = self.q_global.params();
        if let Some(l) = &self.q_local {
            p.extend(l.net.params());
        }
        param_hash(p)
    }

    /// Hash of `θ`.
    pub fn ratio_hash(&self) -> u64 {
        param_hash(self.ratio.net.params())
    }

    /// Simulates a ratio batch. Pair `m` shares one `β_m ~ q`: the
    /// p-sample is simulated from the model at `β_m` (with datum `m`'s
    /// covariate), the q-sample pairs observed datum `m` with
    /// `z ~ q(z | x, β_m)`.
    pub fn ratio_batch(&self, call: usize) -> Result<RatioBatch> {
        let b = self.cfg.ratio_batch_size;
        let n = self.data.len();
        let mut rng = self.root.derive(&[1, call as u64]);
        let idx: Vec<usize> = (0..b).map(|_| rng.below(n)).collect();
        let shared = !self.cfg.beta_per_pair || self.q_global.kind == GlobalKind::PointMass;
        let betas: Vec<Vec<f64>> = if shared {
            vec![self.q_global.sample_value(&mut rng); b]
        } else {
            (0..b).map(|_| self.q_global.sample_value(&mut rng)).collect()
        };
        if betas.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite draw from q(β)".into()));
        }
        let sim_root = self.root.derive(&[2, call as u64]);
        let sims: Vec<(Vec<f64>, Vec<f64>)> = (0..b)
            .into_par_iter()
            .map(|m| {
                let mut r = sim_root.split(m as u64);
                self.model
                    .simulate(&betas[m], self.data.covariate(idx[m]), &mut r)
            })
            .collect();
        let px = Tensor::from_rows(&sims.iter().map(|s| s.0.clone()).collect::<Vec<_>>())?;
        let p_feat = self.model.data_features(&px);
        let q_feat = self.data_features.select_rows(&idx);
        let cov = self.data.covariates.as_ref().map(|c| c.select_rows(&idx));

        let mut tape = Tape::new();
        let beta_in = if shared {
            BetaInput::Shared(tape.constant(Tensor::row(betas[0].clone())))
        } else {
            BetaInput::PerRow(tape.constant(Tensor::from_rows(&betas)?))
        };
        let covv = cov.map(|c| tape.constant(c));
        let pxv = tape.constant(p_feat);
        let qxv = tape.constant(q_feat);
        let (pz, qz) = if let Some(l) = &self.q_local {
            let pz = Tensor::from_rows(&sims.iter().map(|s| s.1.clone()).collect::<Vec<_>>())?;
            let delta = Tensor::matrix(b, l.noise_dim, rng.normals(b * l.noise_dim));
            let (qz, _) = l.sample_with(&mut tape, qxv, beta_in, &delta, false)?;
            (Some(tape.constant(pz)), Some(qz))
        } else {
            (None, None)
        };
        let pf = self.model.ratio_features(&mut tape, pxv, pz, beta_in, covv);
        let qf = self.model.ratio_features(&mut tape, qxv, qz, beta_in, covv);
        Ok(RatioBatch {
            p: tape.value(pf).clone(),
            q: tape.value(qf).clone(),
        })
    }

    /// One ratio-estimator update; `λ` and `φ` are untouched.
    pub fn ratio_step(&mut self) -> Result<f64> {
        let batch = self.ratio_batch(self.ratio_calls)?;
        self.ratio_calls += 1;
        let clip = self.clip();
        let step = self.ratio.train_step(&batch.p, &batch.q, clip)?;
        if !step.applied {
            self.skipped_steps += 1;
        }
        Ok(step.loss)
    }

    /// Noise for the variational step of `iteration`.
    fn q_noise(&self, rng: &mut RngStream, m: usize) -> SurrogateNoise {
        let s = self.cfg.mc_samples;
        let global = (0..s).map(|_| self.q_global.draw_delta(rng)).collect();
        let local = match &self.q_local {
            Some(l) => (0..s)
                .map(|_| Tensor::matrix(m, l.noise_dim, rng.normals(m * l.noise_dim)))
                .collect(),
            None => Vec::new(),
        };
        SurrogateNoise { global, local }
    }

    /// Gradient of the surrogate ELBO with respect to `λ` (then `φ`) on a
    /// given minibatch, with `θ` held fixed. Returns `(value, gradients)`.
    pub fn surrogate_grad(&self, batch: &[usize], noise: &SurrogateNoise) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let s = surrogate_elbo(
            &mut tape,
            self.model,
            &self.q_global,
            self.q_local.as_ref(),
            &self.ratio,
            self.data,
            &self.data_features,
            batch,
            noise,
        )?;
        let mut params = s.global_params.clone();
        if let Some(l) = &s.local_params {
            params.extend(l.vars());
        }
        let g = tape.grad(s.value, &params)?;
        Ok((tape.value(s.value).item(), g))
    }

    /// One ascent step on `λ` and `φ` against the surrogate ELBO; `θ` is
    /// untouched. Returns the surrogate value before the step.
    pub fn q_step(&mut self) -> Result<f64> {
        let mut rng = self.root.derive(&[3, self.iteration as u64]);
        let batch = rng.sample_indices(self.data.len(), self.cfg.batch_size);
        let noise = self.q_noise(&mut rng, batch.len());
        let (value, mut grads) = self.surrogate_grad(&batch, &noise)?;
        if !value.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            self.skipped_steps += 1;
            return Ok(value);
        }
        for g in grads.iter_mut() {
            *g = g.map(|v| -v);
        }
        if let Some(c) = self.clip() {
            clip_grad_norm(&mut grads, c);
        }
        let mut params = self.q_global.params_mut();
        if let Some(l) = &mut self.q_local {
            params.extend(l.net.params_mut());
        }
        if self.q_opt.step(&mut params, &grads)? == StepOutcome::Rejected {
            self.skipped_steps += 1;
        }
        Ok(value)
    }

    /// One iteration: ratio steps, then a variational step.
    pub fn iterate(&mut self) -> Result<TraceRecord> {
        let start = Instant::now();
        let mut ratio_loss = f64::NAN;
        for _ in 0..self.cfg.ratio_steps_per_q_step {
            ratio_loss = self.ratio_step()?;
        }
        let surrogate_elbo = self.q_step()?;
        let rec = TraceRecord {
            iteration: self.iteration,
            ratio_loss,
            surrogate_elbo,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        self.iteration += 1;
        if !self.q_global.is_finite()
            || self
                .q_local
                .as_ref()
                .is_some_and(|l| l.net.params().iter().any(|p| !p.all_finite()))
        {
            return Err(Error::Divergence(format!(
                "non-finite variational parameters at iteration {}",
                rec.iteration
            )));
        }
        Ok(rec)
    }

    pub fn warmup(&mut self) -> Result<()> {
        for _ in 0..self.cfg.ratio_warmup {
            self.ratio_step()?;
        }
        Ok(())
    }

    /// Runs warm-up and `n_iterations` iterations. Divergence ends the run
    /// early with the partial trace.
    pub fn fit(mut self) -> Result<FitResult> {
        let mut trace = Vec::with_capacity(self.cfg.n_iterations);
        let mut diverged = None;
        match self.warmup() {
            Err(Error::Divergence(m)) => diverged = Some(m),
            Err(e) => return Err(e),
            Ok(()) => {
                for _ in 0..self.cfg.n_iterations {
                    match self.iterate() {
                        Ok(r) => trace.push(r),
                        Err(Error::Divergence(m)) => {
                            diverged = Some(m);
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(FitResult {
            q_global: self.q_global,
            q_local: self.q_local,
            ratio: self.ratio,
            trace,
            skipped_steps: self.skipped_steps,
            diverged,
        })
    }
}

/// Convenience wrapper: builds the state and fits.
pub fn lfvi_fit(model: &dyn HimModel, data: &Dataset, cfg: LfviConfig) -> Result<FitResult> {
    Lfvi::new(model, data, cfg)?.fit()
}
