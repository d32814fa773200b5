use super::tensor::Tensor;
use crate::error::{contract, Result};
use serde::{Deserialize, Serialize};

/// ADAM hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Outcome of one [`AdamState::step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; nothing was changed.
    Rejected,
}

/// Bias-corrected ADAM moments for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        let v = m.clone();
        Self {
            config,
            step_count: 0,
            m,
            v,
        }
    }

    /// Applies one descent step `p <- p - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<StepOutcome> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(contract(format!(
                "adam: {} moments, {} params, {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || m.shape() != g.shape() {
                return Err(contract(format!(
                    "adam: shape {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Ok(StepOutcome::Rejected);
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps_hat,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                let mi = &mut m.data_mut()[i];
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                pd[i] -= learning_rate * mhat / (vhat.sqrt() + eps_hat);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one(1.5);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        for _ in 0..3 {
            st.step(&mut [&mut p], &[one(0.0)]).unwrap();
        }
        assert_eq!(p.item(), 1.5);
        assert_eq!(st.m[0].item(), 0.0);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = one(1.5);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        st.m[0] = one(0.2);
        st.v[0] = one(0.1);
        st.step(&mut [&mut p], &[one(0.0)]).unwrap();
        assert!((st.m[0].item() - 0.18).abs() < 1e-15);
        assert!((st.v[0].item() - 0.0999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.01] {
            let mut p = one(0.0);
            let mut st = AdamState::new(AdamConfig::default(), [&p]);
            st.step(&mut [&mut p], &[one(g)]).unwrap();
            let expected = -1e-3 * g.signum();
            assert!((p.item() - expected).abs() < 1e-8, "{} vs {}", p.item(), expected);
            assert_eq!(st.step_count, 1);
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut p = one(0.0);
        let mut st = AdamState::new(AdamConfig::with_lr(0.05), [&p]);
        let mut hit = None;
        for i in 0..2000 {
            let g = 2.0 * (p.item() - 2.0);
            st.step(&mut [&mut p], &[one(g)]).unwrap();
            if hit.is_none() && (p.item() - 2.0).abs() < 0.01 {
                hit = Some(i);
            }
        }
        assert!(hit.is_some());
        assert!((p.item() - 2.0).abs() < 0.01);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = one(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let out = st.step(&mut [&mut p], &[one(f64::NAN)]).unwrap();
        assert_eq!(out, StepOutcome::Rejected);
        assert_eq!(p.item(), 1.0);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Tensor::row(vec![1.0, 2.0]);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        assert!(st.step(&mut [&mut p], &[one(1.0)]).is_err());
    }
}
