//! Stochastic RNN over the grammar alphabet with noise injected into both
//! the hidden-state update `g_z` and the token emission `g_x`.
//!
//! `z_t = g_z([onehot(x_{t-1}), z_{t-1}, ε_{t,z}])` is one layer-normalised
//! ReLU layer; `g_x([z_t, ε_{t,x}])` has one layer-normalised ReLU hidden
//! layer and a linear score layer. The emitted token is the arg-max score
//! (lowest index on ties); emitting the end marker stops the sequence.

use super::grammar::{END, START, VOCAB};
use super::{BetaInput, HimModel, Prior};
use crate::error::{contract, Result};
use crate::ndcore::{
    mlp_apply, Activation, InitMode, Mlp, MlpLayout, Normalize, RngStream, Tape, Tensor,
    Var,
};

const INPUT_VOCAB: usize = VOCAB + 1;

#[derive(Clone, Debug)]
pub struct StochasticRnnModel {
    pub hidden_dim: usize,
    /// Width of each injected noise vector.
    pub noise_width: usize,
    pub noise_scale: f64,
    pub max_len: usize,
    prior: Prior,
}

/// The two networks of a [`StochasticRnnModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    pub g_z: Mlp,
    pub g_x: Mlp,
}

impl RnnParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.g_z.flatten();
        v.extend(self.g_x.flatten());
        v
    }
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl StochasticRnnModel {
    pub fn new(hidden_dim: usize, noise_width: usize, noise_scale: f64, max_len: usize) -> Result<Self> {
        if hidden_dim == 0 || max_len == 0 {
            return Err(contract("hidden_dim and max_len must be positive"));
        }
        let mut m = Self {
            hidden_dim,
            noise_width,
            noise_scale,
            max_len,
            prior: Prior::Flat { dim: 0 },
        };
        m.prior = Prior::Flat {
            dim: m.zero_params().flatten().len(),
        };
        Ok(m)
    }

    pub fn with_prior(mut self, prior: Prior) -> Result<Self> {
        if prior.dim() != self.prior.dim() {
            return Err(contract("prior dimension does not match the parameter count"));
        }
        self.prior = prior;
        Ok(self)
    }

    fn gz_in(&self) -> usize {
        INPUT_VOCAB + self.hidden_dim + self.noise_width
    }

    fn gx_in(&self) -> usize {
        self.hidden_dim + self.noise_width
    }

    pub fn init_params(&self, init: InitMode, rng: &mut RngStream) -> RnnParams {
        let mut g_z = Mlp::new(
            &[self.gz_in(), self.hidden_dim],
            Activation::Relu,
            Normalize::LayerNorm,
            init,
            rng,
        );
        let l = &mut g_z.layers[0];
        l.norm = Some((
            Tensor::full(&[1, self.hidden_dim], 1.0),
            Tensor::zeros(&[1, self.hidden_dim]),
        ));
        l.activate = true;
        let g_x = Mlp::new(
            &[self.gx_in(), self.hidden_dim, VOCAB],
            Activation::Relu,
            Normalize::LayerNorm,
            init,
            rng,
        );
        RnnParams { g_z, g_x }
    }

    pub fn zero_params(&self) -> RnnParams {
        let mut p = self.init_params(InitMode::Scaled, &mut RngStream::new(0, 0));
        for t in p.g_z.params_mut().into_iter().chain(p.g_x.params_mut()) {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        p
    }

    pub fn params_from_flat(&self, flat: &[f64]) -> Result<RnnParams> {
        let mut p = self.zero_params();
        let nz = p.g_z.num_params();
        if flat.len() != nz + p.g_x.num_params() {
            return Err(contract("rnn parameter vector has the wrong length"));
        }
        p.g_z.set_from_flat(&flat[..nz])?;
        p.g_x.set_from_flat(&flat[nz..])?;
        Ok(p)
    }

    fn layouts(&self) -> (MlpLayout, MlpLayout) {
        let p = self.zero_params();
        (p.g_z.layout(), p.g_x.layout())
    }

    /// Generates up to `len` tokens; `noise` supplies `2 * noise_width`
    /// standard normal draws per step (missing draws count as zero).
    pub fn generate_with_noise(&self, params: &RnnParams, noise: &[f64], len: usize) -> Vec<usize> {
        let e = self.noise_width;
        let mut z = vec![0.0; self.hidden_dim];
        let mut prev = START;
        let mut out = Vec::new();
        let draw = |i: usize| noise.get(i).copied().unwrap_or(0.0) * self.noise_scale;
        for t in 0..len.min(self.max_len) {
            let base = t * 2 * e;
            let mut inp = vec![0.0; INPUT_VOCAB];
            inp[prev] = 1.0;
            inp.extend_from_slice(&z);
            inp.extend((0..e).map(|i| draw(base + i)));
            z = params.g_z.forward_row(&inp);
            let mut xin = z.clone();
            xin.extend((0..e).map(|i| draw(base + e + i)));
            let tok = argmax_lowest(&params.g_x.forward_row(&xin));
            if tok == END {
                break;
            }
            out.push(tok);
            prev = tok;
        }
        out
    }

    pub fn rnn_generate(&self, params: &RnnParams, rng: &mut RngStream, len: usize) -> Result<Vec<usize>> {
        if len > self.max_len {
            return Err(contract(format!("len {len} exceeds max_len {}", self.max_len)));
        }
        let noise = rng.normals(len * 2 * self.noise_width);
        Ok(self.generate_with_noise(params, &noise, len))
    }

    /// Token ids padded with the end marker to `max_len`.
    pub fn encode(&self, tokens: &[usize]) -> Vec<f64> {
        (0..self.max_len)
            .map(|i| tokens.get(i).copied().unwrap_or(END) as f64)
            .collect()
    }

    pub fn decode(&self, row: &[f64]) -> Vec<usize> {
        row.iter()
            .map(|&v| v as usize)
            .take_while(|&t| t != END)
            .collect()
    }

    /// Teacher-forced, noise-free log-probabilities of each observed token
    /// (the end marker included) under the softmax of the scores,
    /// `[rows, max_len]`, zero after the end marker.
    fn teacher_forced(&self, tape: &mut Tape, theta: Var, tokens: &Tensor) -> Var {
        let (lz, lx) = self.layouts();
        let gz = lz.vars_from_flat(tape, theta, 0);
        let gx = lx.vars_from_flat(tape, theta, lz.num_params());
        let rows = tokens.rows();
        let zeros_e = tape.constant(Tensor::zeros(&[rows, self.noise_width]));
        let mut z = tape.constant(Tensor::zeros(&[rows, self.hidden_dim]));
        let mut cols = Vec::with_capacity(self.max_len);
        let tok = |r: usize, t: usize| tokens.row_slice(r)[t] as usize;
        for t in 0..self.max_len {
            let mut prev = vec![0.0; rows * INPUT_VOCAB];
            let mut target = vec![0.0; rows * VOCAB];
            for r in 0..rows {
                let p = if t == 0 { START } else { tok(r, t - 1) };
                prev[r * INPUT_VOCAB + p] = 1.0;
                let alive = t == 0 || tok(r, t - 1) != END;
                if alive {
                    target[r * VOCAB + tok(r, t)] = 1.0;
                }
            }
            let prev = tape.constant(Tensor::matrix(rows, INPUT_VOCAB, prev));
            let zin = tape.concat_cols(&[prev, z, zeros_e]);
            z = mlp_apply(tape, &gz, zin).expect("g_z shapes");
            let xin = tape.concat_cols(&[z, zeros_e]);
            let scores = mlp_apply(tape, &gx, xin).expect("g_x shapes");
            let lp = tape.log_softmax_rows(scores);
            let mask = tape.constant(Tensor::matrix(rows, VOCAB, target));
            let picked = tape.mul(lp, mask);
            cols.push(tape.row_sum(picked));
        }
        tape.concat_cols(&cols)
    }
}

impl HimModel for StochasticRnnModel {
    fn global_dim(&self) -> usize {
        self.prior.dim()
    }

    fn noise_dim(&self) -> usize {
        self.max_len * 2 * self.noise_width
    }

    fn data_dim(&self) -> usize {
        self.max_len
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn simulate_local(&self, noise: &[f64], _z: &[f64], beta: &[f64], _c: Option<&[f64]>) -> Vec<f64> {
        let p = self.params_from_flat(beta).expect("beta length");
        self.encode(&self.generate_with_noise(&p, noise, self.max_len))
    }

    /// Per-step teacher-forced log-probabilities under `β`, followed by the
    /// one-hot tokens. Consumes raw token rows.
    fn ratio_features(
        &self,
        tape: &mut Tape,
        x: Var,
        _z: Option<Var>,
        beta: BetaInput,
        _covariates: Option<Var>,
    ) -> Var {
        let tokens = tape.value(x).clone();
        let rows = tokens.rows();
        let scores = match beta {
            BetaInput::Shared(b) => self.teacher_forced(tape, b, &tokens),
            BetaInput::PerRow(b) => {
                let parts: Vec<Var> = (0..rows)
                    .map(|r| {
                        let th = tape.slice_rows(b, r, r + 1);
                        self.teacher_forced(tape, th, &tokens.select_rows(&[r]))
                    })
                    .collect();
                tape.concat_rows(&parts)
            }
        };
        let mut onehot = vec![0.0; rows * self.max_len * VOCAB];
        for r in 0..rows {
            for t in 0..self.max_len {
                let k = tokens.row_slice(r)[t] as usize;
                onehot[(r * self.max_len + t) * VOCAB + k] = 1.0;
            }
        }
        let oh = tape.constant(Tensor::matrix(rows, self.max_len * VOCAB, onehot));
        tape.concat_cols(&[scores, oh])
    }

    fn ratio_input_dim(&self) -> usize {
        self.max_len * (1 + VOCAB)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_emits_constant_sequence() {
        let m = StochasticRnnModel::new(8, 3, 0.0, 15).unwrap();
        let p = m.zero_params();
        let s = m.rnn_generate(&p, &mut RngStream::new(1, 0), 10).unwrap();
        assert_eq!(s, vec![0; 10]);
    }

    #[test]
    fn same_seed_same_sequence() {
        let m = StochasticRnnModel::new(8, 3, 1.0, 15).unwrap();
        let p = m.init_params(InitMode::Scaled, &mut RngStream::new(2, 0));
        let a = m.rnn_generate(&p, &mut RngStream::new(7, 1), 15).unwrap();
        let b = m.rnn_generate(&p, &mut RngStream::new(7, 1), 15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_round_trip() {
        let m = StochasticRnnModel::new(5, 2, 1.0, 15).unwrap();
        let p = m.init_params(InitMode::Scaled, &mut RngStream::new(2, 0));
        assert_eq!(m.params_from_flat(&p.flatten()).unwrap(), p);
        assert_eq!(p.flatten().len(), m.global_dim());
    }

    #[test]
    fn too_long_is_rejected() {
        let m = StochasticRnnModel::new(5, 2, 1.0, 15).unwrap();
        assert!(m.rnn_generate(&m.zero_params(), &mut RngStream::new(0, 0), 16).is_err());
    }

    #[test]
    fn teacher_forcing_matches_plain_softmax() {
        let m = StochasticRnnModel::new(4, 2, 1.0, 3).unwrap();
        let p = m.init_params(InitMode::StandardNormal, &mut RngStream::new(3, 0));
        let seq = [0usize, 1, 0];
        let mut tape = Tape::new();
        let th = tape.constant(Tensor::row(p.flatten()));
        let x = tape.constant(Tensor::row(m.encode(&seq)));
        let f = m.ratio_features(&mut tape, x, None, BetaInput::Shared(th), None);
        let got = tape.value(f).data()[..3].to_vec();
        let mut z = vec![0.0; 4];
        let mut prev = START;
        for (t, &tok) in seq.iter().enumerate() {
            let mut inp = vec![0.0; INPUT_VOCAB];
            inp[prev] = 1.0;
            inp.extend_from_slice(&z);
            inp.extend([0.0, 0.0]);
            z = p.g_z.forward_row(&inp);
            let mut xin = z.clone();
            xin.extend([0.0, 0.0]);
            let s = p.g_x.forward_row(&xin);
            let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + s.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            assert!((got[t] - (s[tok] - lse)).abs() < 1e-10);
            prev = tok;
        }
    }
}
