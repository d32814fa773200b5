//! Stochastic Lotka-Volterra predator-prey simulator.

use super::{HimModel, Prior};
use crate::error::{contract, Result};
use crate::ndcore::{RngStream, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LotkaVolterraConfig {
    /// `(β1, β2, β3)`, or `(β1, β2, β3, β4)` when `four_params` is set.
    pub beta: Vec<f64>,
    pub init_prey: f64,
    pub init_predator: f64,
    pub t_end: f64,
    pub inner_dt: f64,
    pub record_every: f64,
    /// Standard deviation of the noise added at each integer time.
    pub noise_scale: f64,
    /// Use a separate predator death rate `β4` instead of reusing `β2`.
    pub four_params: bool,
}

impl Default for LotkaVolterraConfig {
    fn default() -> Self {
        Self {
            beta: vec![2.5, 0.05, 0.001],
            init_prey: 50.0,
            init_predator: 100.0,
            t_end: 30.0,
            inner_dt: 0.1,
            record_every: 0.2,
            noise_scale: 10.0,
            four_params: false,
        }
    }
}

impl LotkaVolterraConfig {
    pub fn n_params(&self) -> usize {
        if self.four_params {
            4
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.n_params() {
            return Err(contract(format!(
                "lotka-volterra expects {} parameters, got {}",
                self.n_params(),
                self.beta.len()
            )));
        }
        if !(self.inner_dt > 0.0 && self.record_every > 0.0 && self.t_end >= 0.0) {
            return Err(contract("t_end, inner_dt and record_every must be positive"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(contract("noise_scale must be nonnegative"));
        }
        if !(self.init_prey >= 0.0 && self.init_predator >= 0.0) {
            return Err(contract("initial populations must be nonnegative"));
        }
        let ratio = self.record_every / self.inner_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(contract("record_every must be an integer multiple of inner_dt"));
        }
        Ok(())
    }

    fn steps_per_record(&self) -> usize {
        (self.record_every / self.inner_dt).round() as usize
    }

    /// Number of recorded points per species.
    pub fn n_records(&self) -> usize {
        (self.t_end / self.record_every + 1e-9).floor() as usize + 1
    }

    /// Number of integer times in `(0, t_end]`, each receiving two noise draws.
    pub fn n_noise_times(&self) -> usize {
        (self.t_end + 1e-9).floor() as usize
    }
}

/// A recorded pair of population trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub prey: Vec<f64>,
    pub predator: Vec<f64>,
    /// Set when the state overflowed and the series was truncated.
    pub diverged: bool,
}

impl Series {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,prey,predator\n");
        for i in 0..self.len() {
            let _ = writeln!(s, "{},{},{}", self.times[i], self.prey[i], self.predator[i]);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Series> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("t,prey,predator") => {}
            other => {
                return Err(crate::Error::Parse(format!(
                    "expected header t,prey,predator, got {other:?}"
                )))
            }
        }
        let mut out = Series {
            times: vec![],
            prey: vec![],
            predator: vec![],
            diverged: false,
        };
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| crate::Error::Parse(format!("line {}: {e}", i + 2)))?;
            if vals.len() != 3 {
                return Err(crate::Error::Parse(format!("line {}: expected 3 fields", i + 2)));
            }
            out.times.push(vals[0]);
            out.prey.push(vals[1]);
            out.predator.push(vals[2]);
        }
        Ok(out)
    }

    /// `[prey.., predator..]`, each padded with its last value to `n` points.
    pub fn flatten_padded(&self, n: usize) -> Vec<f64> {
        let pad = |v: &[f64]| -> Vec<f64> {
            let last = v.last().copied().unwrap_or(0.0);
            (0..n).map(|i| v.get(i).copied().unwrap_or(last)).collect()
        };
        let mut out = pad(&self.prey);
        out.extend(pad(&self.predator));
        out
    }

    pub fn from_flat(flat: &[f64], record_every: f64) -> Series {
        let n = flat.len() / 2;
        Series {
            times: (0..n).map(|i| i as f64 * record_every).collect(),
            prey: flat[..n].to_vec(),
            predator: flat[n..2 * n].to_vec(),
            diverged: false,
        }
    }
}

/// Euler integration with noise injected at integer times. `noise` holds two
/// draws (prey, predator) per integer time and is scaled by `noise_scale`.
pub fn lv_simulate_with_noise(cfg: &LotkaVolterraConfig, beta: &[f64], noise: &[f64]) -> Series {
    let (b1, b2, b3) = (beta[0], beta[1], beta[2]);
    let b4 = if cfg.four_params { beta[3] } else { b2 };
    let dt = cfg.inner_dt;
    let total = (cfg.t_end / dt + 1e-9).round() as usize;
    let per_rec = cfg.steps_per_record();
    let n_rec = cfg.n_records();
    let (mut x1, mut x2) = (cfg.init_prey, cfg.init_predator);
    let mut out = Series {
        times: vec![0.0],
        prey: vec![x1],
        predator: vec![x2],
        diverged: false,
    };
    let mut noise_idx = 0;
    for k in 1..=total {
        let (d1, d2) = (b1 * x1 - b2 * x1 * x2, -b4 * x2 + b3 * x1 * x2);
        x1 += dt * d1;
        x2 += dt * d2;
        let (t_prev, t) = ((k - 1) as f64 * dt, k as f64 * dt);
        if (t + 1e-9).floor() > (t_prev + 1e-9).floor() {
            if let (Some(e1), Some(e2)) = (noise.get(noise_idx), noise.get(noise_idx + 1)) {
                x1 += cfg.noise_scale * e1;
                x2 += cfg.noise_scale * e2;
            }
            noise_idx += 2;
        }
        if !(x1.is_finite() && x2.is_finite()) {
            out.diverged = true;
            break;
        }
        x1 = x1.max(0.0);
        x2 = x2.max(0.0);
        if k % per_rec == 0 && out.len() < n_rec {
            out.times.push(out.len() as f64 * cfg.record_every);
            out.prey.push(x1);
            out.predator.push(x2);
        }
    }
    out
}

/// Simulates with `cfg.beta`.
pub fn lv_simulate(cfg: &LotkaVolterraConfig, rng: &mut RngStream) -> Result<Series> {
    cfg.validate()?;
    let noise = rng.normals(2 * cfg.n_noise_times());
    Ok(lv_simulate_with_noise(cfg, &cfg.beta, &noise))
}

/// Default log-normal prior: location −1, scale 1 per component.
pub fn lv_default_prior(n_params: usize) -> Prior {
    Prior::LogNormal {
        loc: vec![-1.0; n_params],
        scale: vec![1.0; n_params],
    }
}

/// What the ratio estimator sees of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LvFeatures {
    /// The padded prey and predator trajectories.
    Raw,
    /// The nine ABC summary statistics.
    #[default]
    Summary,
}

/// Lotka-Volterra as a hierarchical implicit model: each datum is a whole
/// series flattened as `[prey.., predator..]`; there are no local latents.
#[derive(Clone, Debug)]
pub struct LotkaVolterraModel {
    pub cfg: LotkaVolterraConfig,
    pub prior: Prior,
    pub features: LvFeatures,
}

impl LotkaVolterraModel {
    pub fn new(cfg: LotkaVolterraConfig, prior: Prior, features: LvFeatures) -> Result<Self> {
        cfg.validate()?;
        prior.validate()?;
        if prior.dim() != cfg.n_params() {
            return Err(contract("prior dimension does not match the parameter count"));
        }
        Ok(Self {
            cfg,
            prior,
            features,
        })
    }

    pub fn series(&self, flat: &[f64]) -> Series {
        Series::from_flat(flat, self.cfg.record_every)
    }
}

impl HimModel for LotkaVolterraModel {
    fn global_dim(&self) -> usize {
        self.cfg.n_params()
    }

    fn noise_dim(&self) -> usize {
        2 * self.cfg.n_noise_times()
    }

    fn data_dim(&self) -> usize {
        2 * self.cfg.n_records()
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn simulate_local(&self, noise: &[f64], _z: &[f64], beta: &[f64], _c: Option<&[f64]>) -> Vec<f64> {
        lv_simulate_with_noise(&self.cfg, beta, noise).flatten_padded(self.cfg.n_records())
    }

    fn data_features(&self, x: &Tensor) -> Tensor {
        match self.features {
            LvFeatures::Raw => x.clone(),
            LvFeatures::Summary => {
                let rows: Vec<Vec<f64>> = (0..x.rows())
                    .map(|r| crate::abc::summary_stats(&self.series(x.row_slice(r))).to_vec())
                    .collect();
                Tensor::from_rows(&rows).expect("summary rows")
            }
        }
    }

    fn data_feature_dim(&self) -> usize {
        match self.features {
            LvFeatures::Raw => self.data_dim(),
            LvFeatures::Summary => crate::abc::SUMMARY_DIM,
        }
    }

    /// Rates enter the ratio estimator on the log scale.
    fn beta_features(&self, tape: &mut Tape, beta: Var) -> Var {
        tape.log(beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(beta: Vec<f64>) -> LotkaVolterraConfig {
        LotkaVolterraConfig {
            beta,
            noise_scale: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let s = lv_simulate(&quiet(vec![0.0; 3]), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(s.len(), 151);
        assert!(s.prey.iter().all(|&v| v == 50.0));
        assert!(s.predator.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn prey_growth_matches_euler_closed_form() {
        let cfg = LotkaVolterraConfig {
            inner_dt: 0.2,
            ..quiet(vec![0.1, 0.0, 0.0])
        };
        let s = lv_simulate(&cfg, &mut RngStream::new(1, 0)).unwrap();
        assert!((s.prey[5] - 50.0 * 1.02f64.powi(5)).abs() < 1e-9);
        assert!((s.prey[5] - 55.20404).abs() < 1e-5);
        assert!(s.predator.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn record_every_must_be_multiple_of_inner_dt() {
        let cfg = LotkaVolterraConfig {
            record_every: 0.25,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn four_param_variant_reduces_to_three() {
        let three = LotkaVolterraConfig::default();
        let four = LotkaVolterraConfig {
            beta: vec![2.5, 0.05, 0.001, 0.05],
            four_params: true,
            ..Default::default()
        };
        let a = lv_simulate(&three, &mut RngStream::new(4, 0)).unwrap();
        let b = lv_simulate(&four, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overflow_truncates_and_flags() {
        let cfg = quiet(vec![50.0, 0.0, 50.0]);
        let s = lv_simulate(&cfg, &mut RngStream::new(1, 0)).unwrap();
        assert!(s.diverged);
        assert!(s.len() < cfg.n_records());
        assert_eq!(s.flatten_padded(cfg.n_records()).len(), 2 * cfg.n_records());
    }

    #[test]
    fn csv_round_trip() {
        let s = lv_simulate(&LotkaVolterraConfig::default(), &mut RngStream::new(2, 0)).unwrap();
        let back = Series::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
    }
}
