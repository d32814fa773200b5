//! Class-probability ratio estimation: a network `r(x, z, β; θ)` trained to
//! separate samples of `p` from samples of `q`, so that at the optimum it
//! equals `log p − log q`.

use crate::error::{contract, Result};
use crate::ndcore::{
    clip_grad_norm, mlp_apply, Activation, AdamConfig, AdamState, InitMode, Mlp, MlpVars,
    Normalize, RngStream, StepOutcome, Tape, Tensor, Var,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Log,
    Hinge,
}

/// Mean of `-log σ(r)` over `p` plus mean of `-log(1 - σ(r))` over `q`.
pub fn log_loss(r_p: &[f64], r_q: &[f64]) -> Result<f64> {
    nonempty(r_p, r_q)?;
    use crate::ndcore::scalar::softplus;
    Ok(mean(r_p.iter().map(|&r| softplus(-r))) + mean(r_q.iter().map(|&r| softplus(r))))
}

/// Mean of `max(0, 1 - r)` over `p` plus mean of `max(0, 1 + r)` over `q`.
pub fn hinge_loss(r_p: &[f64], r_q: &[f64]) -> Result<f64> {
    nonempty(r_p, r_q)?;
    Ok(mean(r_p.iter().map(|&r| (1.0 - r).max(0.0))) + mean(r_q.iter().map(|&r| (1.0 + r).max(0.0))))
}

pub fn loss_value(kind: LossKind, r_p: &[f64], r_q: &[f64]) -> Result<f64> {
    match kind {
        LossKind::Log => log_loss(r_p, r_q),
        LossKind::Hinge => hinge_loss(r_p, r_q),
    }
}

fn nonempty(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(contract("both sample sets must be nonempty"));
    }
    Ok(())
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len() as f64;
    it.sum::<f64>() / n
}

/// The loss on the tape for `[rows, 1]` logits.
pub fn loss_var(tape: &mut Tape, kind: LossKind, r_p: Var, r_q: Var) -> Var {
    let (a, b) = match kind {
        LossKind::Log => {
            let np = tape.neg(r_p);
            (tape.softplus(np), tape.softplus(r_q))
        }
        LossKind::Hinge => {
            let np = tape.neg(r_p);
            let hp = tape.add_scalar(np, 1.0);
            let hq = tape.add_scalar(r_q, 1.0);
            (tape.relu(hp), tape.relu(hq))
        }
    };
    let ma = tape.mean(a);
    let mb = tape.mean(b);
    tape.add(ma, mb)
}

/// `log p(point) − log q(point)`.
pub fn optimal_ratio_oracle(
    p_logpdf: impl Fn(&[f64]) -> f64,
    q_logpdf: impl Fn(&[f64]) -> f64,
    point: &[f64],
) -> f64 {
    p_logpdf(point) - q_logpdf(point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioConfig {
    /// Hidden layer widths; empty gives a linear function of the
    /// standardised inputs.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: AdamConfig,
    /// Momentum of the running input statistics.
    pub momentum: f64,
    pub init: InitMode,
}

impl Default for RatioConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            optimizer: AdamConfig::default(),
            momentum: 0.99,
            init: InitMode::Scaled,
        }
    }
}

/// Running per-column mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub initialized: bool,
}

impl Standardizer {
    pub fn new(dim: usize, momentum: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            momentum,
            initialized: false,
        }
    }

    /// The first batch sets the statistics; later batches are blended in
    /// with weight `1 − momentum`.
    pub fn update(&mut self, batch: &Tensor) {
        let (rows, cols) = (batch.rows(), batch.cols());
        if rows == 0 {
            return;
        }
        let mut m = vec![0.0; cols];
        for r in 0..rows {
            for (a, b) in m.iter_mut().zip(batch.row_slice(r)) {
                *a += b / rows as f64;
            }
        }
        let mut v = vec![0.0; cols];
        for r in 0..rows {
            for ((a, b), mu) in v.iter_mut().zip(batch.row_slice(r)).zip(&m) {
                *a += (b - mu) * (b - mu) / rows as f64;
            }
        }
        if !m.iter().chain(&v).all(|x| x.is_finite()) {
            return;
        }
        if self.initialized {
            let k = self.momentum;
            for i in 0..cols {
                self.mean[i] = k * self.mean[i] + (1.0 - k) * m[i];
                self.var[i] = k * self.var[i] + (1.0 - k) * v[i];
            }
        } else {
            self.mean = m;
            self.var = v;
            self.initialized = true;
        }
    }

    pub fn scale(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt().max(1e-6)).collect()
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        let m = tape.constant(Tensor::row(self.mean.iter().map(|v| -v).collect()));
        let s = tape.constant(Tensor::row(self.scale().iter().map(|v| 1.0 / v).collect()));
        let c = tape.add_bcast(x, m);
        tape.mul_bcast(c, s)
    }
}

/// Outcome of one ratio training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioStep {
    pub loss: f64,
    pub applied: bool,
}

#[derive(Clone, Debug)]
pub struct RatioEstimator {
    pub net: Mlp,
    pub standardizer: Standardizer,
    pub opt: AdamState,
    pub loss: LossKind,
}

impl RatioEstimator {
    pub fn new(input_dim: usize, cfg: &RatioConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        if input_dim == 0 {
            return Err(contract("ratio input width must be positive"));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(contract("momentum must be in [0, 1)"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let net = Mlp::new(&sizes, cfg.activation, Normalize::None, cfg.init, rng);
        let opt = AdamState::new(cfg.optimizer, net.params());
        Ok(Self {
            net,
            standardizer: Standardizer::new(input_dim, cfg.momentum),
            opt,
            loss,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Logits `[rows, 1]` for raw features on `tape`. With `trainable` the
    /// network parameters are tape params, otherwise constants.
    pub fn apply(&self, tape: &mut Tape, features: Var, trainable: bool) -> Result<(Var, MlpVars)> {
        let vars = self.net.on_tape(tape, trainable);
        let s = self.standardizer.apply(tape, features);
        let out = mlp_apply(tape, &vars, s)?;
        Ok((out, vars))
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>> {
        if features.shape().len() != 2 || features.cols() != self.input_dim() {
            return Err(contract("ratio feature width mismatch"));
        }
        let (m, s) = (&self.standardizer.mean, self.standardizer.scale());
        let x = Tensor::matrix(
            features.rows(),
            features.cols(),
            features
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - m[i % m.len()]) / s[i % s.len()])
                .collect(),
        );
        Ok(self.net.forward(&x)?.into_data())
    }

    /// Loss and gradient for fixed feature batches, without updating anything.
    pub fn loss_and_grad(&self, p: &Tensor, q: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let pv = tape.constant(p.clone());
        let qv = tape.constant(q.clone());
        let both = tape.concat_rows(&[pv, qv]);
        let (out, vars) = self.apply(&mut tape, both, true)?;
        let rp = tape.slice_rows(out, 0, p.rows());
        let rq = tape.slice_rows(out, p.rows(), p.rows() + q.rows());
        let l = loss_var(&mut tape, self.loss, rp, rq);
        let g = tape.grad(l, &vars.vars())?;
        Ok((tape.value(l).item(), g))
    }

    /// One optimiser step on fixed `p` and `q` feature batches. Running
    /// statistics absorb the union of both batches first. A non-finite loss
    /// or gradient skips the step.
    pub fn train_step(&mut self, p: &Tensor, q: &Tensor, clip: Option<f64>) -> Result<RatioStep> {
        if p.rows() == 0 || q.rows() == 0 {
            return Err(contract("both sample sets must be nonempty"));
        }
        if p.cols() != self.input_dim() || q.cols() != self.input_dim() {
            return Err(contract(format!(
                "ratio feature width {} / {}, expected {}",
                p.cols(),
                q.cols(),
                self.input_dim()
            )));
        }
        let mut both = p.data().to_vec();
        both.extend_from_slice(q.data());
        self.standardizer
            .update(&Tensor::matrix(p.rows() + q.rows(), p.cols(), both));
        let (loss, mut grads) = self.loss_and_grad(p, q)?;
        if !loss.is_finite() {
            return Ok(RatioStep {
                loss,
                applied: false,
            });
        }
        if let Some(c) = clip {
            clip_grad_norm(&mut grads, c);
        }
        let mut params = self.net.params_mut();
        let outcome = self.opt.step(&mut params, &grads)?;
        Ok(RatioStep {
            loss,
            applied: outcome == StepOutcome::Applied,
        })
    }

    /// For a network without hidden layers: `(weights, bias)` of the affine
    /// map in raw input units.
    pub fn affine_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        if self.net.layers.len() != 1 {
            return None;
        }
        let l = &self.net.layers[0];
        let (m, s) = (&self.standardizer.mean, self.standardizer.scale());
        let w: Vec<f64> = l.weight.data().iter().zip(&s).map(|(w, s)| w / s).collect();
        let b = l.bias.data()[0] - w.iter().zip(m).map(|(w, m)| w * m).sum::<f64>();
        Some((w, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_reference_values() {
        assert!((log_loss(&[0.0; 4], &[0.0; 3]).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_loss(&[2.0], &[2.0]).unwrap() - 2.253_856_198_495_4).abs() < 1e-6);
        assert!(log_loss(&[700.0], &[-700.0]).unwrap() < 1e-300);
        assert_eq!(hinge_loss(&[0.0], &[0.0]).unwrap(), 2.0);
        assert_eq!(hinge_loss(&[2.0], &[-2.0]).unwrap(), 0.0);
        assert_eq!(hinge_loss(&[0.5], &[-1.0]).unwrap(), 0.5);
        assert!(log_loss(&[], &[1.0]).is_err());
    }

    #[test]
    fn tape_loss_matches_scalar() {
        for kind in [LossKind::Log, LossKind::Hinge] {
            let (p, q) = (vec![0.3, -1.2, 2.0], vec![0.7, -0.4]);
            let mut tape = Tape::new();
            let a = tape.constant(Tensor::matrix(3, 1, p.clone()));
            let b = tape.constant(Tensor::matrix(2, 1, q.clone()));
            let l = loss_var(&mut tape, kind, a, b);
            assert!((tape.value(l).item() - loss_value(kind, &p, &q).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn oracle_reference_values() {
        let p = |x: &[f64]| crate::ndcore::scalar::normal_logpdf(x[0], 1.0, 1.0);
        let q = |x: &[f64]| crate::ndcore::scalar::normal_logpdf(x[0], 0.0, 1.0);
        assert_eq!(optimal_ratio_oracle(q, q, &[0.3]), 0.0);
        assert!(optimal_ratio_oracle(p, q, &[0.5]).abs() < 1e-15);
        assert!((optimal_ratio_oracle(p, q, &[2.0]) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn first_standardizer_batch_sets_statistics() {
        let mut s = Standardizer::new(1, 0.99);
        s.update(&Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(s.mean, vec![2.5]);
        assert_eq!(s.var, vec![1.25]);
        s.update(&Tensor::matrix(2, 1, vec![10.0, 10.0]));
        assert!((s.mean[0] - (0.99 * 2.5 + 0.01 * 10.0)).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch_is_error() {
        let mut r = RatioEstimator::new(2, &RatioConfig::default(), LossKind::Log, &mut RngStream::new(1, 0)).unwrap();
        let bad = Tensor::matrix(1, 3, vec![0.0; 3]);
        assert!(r.train_step(&bad, &bad, None).is_err());
    }
}
