//! Recovering the noise behind an observation by nonlinear least squares:
//! `ε ← ε − ρ_t J(ε)ᵀ (g(ε) − x)`.

use crate::error::{contract, Result};
use crate::ndcore::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Fixed { rho: f64 },
    /// Start at `rho0` and halve until the residual decreases.
    Backtracking { rho0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvertConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub rule: StepRule,
}

impl Default for InvertConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            rule: StepRule::Backtracking { rho0: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub eps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖g(ε) − x‖` before the first step and after every step.
    pub residuals: Vec<f64>,
}

/// Residual norm and `Jᵀ(g(ε) − x)` for a simulator recorded on a tape.
fn residual_and_step(
    g: &dyn Fn(&mut Tape, Var) -> Var,
    eps: &[f64],
    target: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let e = tape.param(Tensor::row(eps.to_vec()));
    let out = g(&mut tape, e);
    if tape.value(out).len() != target.len() {
        return Err(contract("simulator output does not match the target length"));
    }
    let t = tape.constant(Tensor::new(tape.shape(out).to_vec(), target.to_vec())?);
    let d = tape.sub(out, t);
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let half = tape.scale(s, 0.5);
    let grad = tape.grad(half, &[e])?.remove(0).into_data();
    Ok(((2.0 * tape.value(half).item()).sqrt(), grad))
}

fn residual(g: &dyn Fn(&mut Tape, Var) -> Var, eps: &[f64], target: &[f64]) -> Result<f64> {
    Ok(residual_and_step(g, eps, target)?.0)
}

/// Inverts `g` at `target` from `eps0`. Reports `converged` iff the final
/// residual is within `tol`; a zero gradient or a failed backtracking search
/// stops early without convergence.
pub fn noise_invert(
    g: &dyn Fn(&mut Tape, Var) -> Var,
    eps0: &[f64],
    target: &[f64],
    cfg: &InvertConfig,
) -> Result<Inversion> {
    let mut eps = eps0.to_vec();
    let (mut res, mut step) = residual_and_step(g, &eps, target)?;
    let mut residuals = vec![res];
    let mut iterations = 0;
    while res > cfg.tol && iterations < cfg.max_iters {
        if step.iter().all(|&v| v == 0.0) {
            break;
        }
        let moved = |rho: f64| -> Vec<f64> { eps.iter().zip(&step).map(|(e, s)| e - rho * s).collect() };
        let next = match cfg.rule {
            StepRule::Fixed { rho } => Some(moved(rho)),
            StepRule::Backtracking { rho0 } => {
                let mut rho = rho0;
                let mut found = None;
                for _ in 0..60 {
                    let cand = moved(rho);
                    if residual(g, &cand, target)? < res {
                        found = Some(cand);
                        break;
                    }
                    rho *= 0.5;
                }
                found
            }
        };
        let Some(next) = next else { break };
        eps = next;
        iterations += 1;
        (res, step) = residual_and_step(g, &eps, target)?;
        residuals.push(res);
    }
    Ok(Inversion {
        eps,
        converged: res <= cfg.tol,
        iterations,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inverts_in_one_step() {
        let g = |_: &mut Tape, e: Var| e;
        let cfg = InvertConfig {
            rule: StepRule::Fixed { rho: 1.0 },
            ..Default::default()
        };
        let r = noise_invert(&g, &[0.0], &[3.0], &cfg).unwrap();
        assert_eq!(r.eps, vec![3.0]);
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn linear_contraction() {
        let g = |t: &mut Tape, e: Var| t.scale(e, 2.0);
        let cfg = InvertConfig {
            max_iters: 200,
            tol: 1e-9,
            rule: StepRule::Fixed { rho: 0.2 },
        };
        let r = noise_invert(&g, &[0.0], &[4.0], &cfg).unwrap();
        assert!(r.converged && (r.eps[0] - 2.0).abs() < 1e-8 && r.iterations <= 200);
    }

    #[test]
    fn zero_gradient_stalls() {
        let g = |t: &mut Tape, e: Var| t.relu(e);
        let r = noise_invert(&g, &[-1.0], &[2.0], &InvertConfig::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
    }
}
