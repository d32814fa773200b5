//! Multilayer perceptrons recorded on a [`Tape`].

use super::rng::RngStream;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{contract, Result};
use serde::{Deserialize, Serialize};

/// Variance floor used by layer normalisation.
pub const LAYER_NORM_FLOOR: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    #[default]
    None,
    LayerNorm,
}

/// How fresh weights are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `N(0, 1) / sqrt(fan_in)` weights, zero biases.
    #[default]
    Scaled,
    /// Every weight and bias drawn from `N(0, 1)`.
    StandardNormal,
}

/// One affine layer, optionally followed by layer norm and the activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `[fan_in, fan_out]`
    pub weight: Tensor,
    /// `[1, fan_out]`
    pub bias: Tensor,
    /// Layer-norm gain and shift, each `[1, fan_out]`.
    pub norm: Option<(Tensor, Tensor)>,
    pub activate: bool,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Hidden layers get normalisation
    /// and the activation; the last layer is linear.
    pub fn new(
        sizes: &[usize],
        activation: Activation,
        normalize: Normalize,
        init: InitMode,
        rng: &mut RngStream,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fi, fo) = (sizes[i], sizes[i + 1]);
                let hidden = i + 1 < n;
                let (wscale, bias) = match init {
                    InitMode::Scaled => (1.0 / (fi.max(1) as f64).sqrt(), vec![0.0; fo]),
                    InitMode::StandardNormal => (1.0, rng.normals(fo)),
                };
                let w: Vec<f64> = rng.normals(fi * fo).into_iter().map(|v| v * wscale).collect();
                Layer {
                    weight: Tensor::matrix(fi, fo, w),
                    bias: Tensor::row(bias),
                    norm: (hidden && normalize == Normalize::LayerNorm)
                        .then(|| (Tensor::full(&[1, fo], 1.0), Tensor::zeros(&[1, fo]))),
                    activate: hidden,
                }
            })
            .collect();
        Self { layers, activation }
    }

    /// Same architecture as [`Mlp::new`] with every parameter zero
    /// (layer-norm gains included).
    pub fn zeros(sizes: &[usize], activation: Activation, normalize: Normalize) -> Self {
        let mut m = Self::new(
            sizes,
            activation,
            normalize,
            InitMode::Scaled,
            &mut RngStream::new(0, 0),
        );
        for p in m.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some((g, s)) = &l.norm {
                out.push(g);
                out.push(s);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some((g, s)) = &mut l.norm {
                out.push(g);
                out.push(s);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Places the parameters on `tape`, as params if `trainable` else as constants.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| LayerVars {
                weight: leaf(&l.weight),
                bias: leaf(&l.bias),
                norm: l.norm.as_ref().map(|(g, s)| (leaf(g), leaf(s))),
                activate: l.activate,
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
            })
            .collect();
        MlpVars {
            layers,
            activation: self.activation,
        }
    }

    /// The layout of this network's flattened parameter vector.
    pub fn layout(&self) -> MlpLayout {
        MlpLayout {
            layers: self
                .layers
                .iter()
                .map(|l| (l.fan_in(), l.fan_out(), l.norm.is_some(), l.activate))
                .collect(),
            activation: self.activation,
        }
    }

    /// Forward pass on a `[rows, input_dim]` matrix without recording a tape.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape().len() != 2 || input.cols() != self.input_dim() {
            return Err(contract(format!(
                "mlp input shape {:?}, expected [_, {}]",
                input.shape(),
                self.input_dim()
            )));
        }
        let rows = input.rows();
        let mut h = input.data().to_vec();
        let mut width = self.input_dim();
        for l in &self.layers {
            let fo = l.fan_out();
            let mut z = super::tape::matmul_raw(&h, l.weight.data(), rows, width, fo);
            for r in 0..rows {
                let row = &mut z[r * fo..(r + 1) * fo];
                for (v, b) in row.iter_mut().zip(l.bias.data()) {
                    *v += b;
                }
                if let Some((g, s)) = &l.norm {
                    let mu = row.iter().sum::<f64>() / fo as f64;
                    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / fo as f64;
                    let inv = 1.0 / (var + LAYER_NORM_FLOOR).sqrt();
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (*v - mu) * inv * g.data()[j] + s.data()[j];
                    }
                }
                if l.activate {
                    for v in row.iter_mut() {
                        *v = match self.activation {
                            Activation::Relu => v.max(0.0),
                            Activation::Tanh => v.tanh(),
                        };
                    }
                }
            }
            h = z;
            width = fo;
        }
        Ok(Tensor::matrix(rows, width, h))
    }

    /// Forward pass on a single input vector.
    pub fn forward_row(&self, input: &[f64]) -> Vec<f64> {
        self.forward(&Tensor::row(input.to_vec()))
            .expect("input width")
            .into_data()
    }
}

/// Shapes of a network whose parameters live in one flat vector, in the
/// order produced by [`Mlp::flatten`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayout {
    /// `(fan_in, fan_out, layer_norm, activate)` per layer.
    pub layers: Vec<(usize, usize, bool, bool)>,
    pub activation: Activation,
}

impl MlpLayout {
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|&(i, o, ln, _)| i * o + o + if ln { 2 * o } else { 0 })
            .sum()
    }

    /// Carves network parameters out of a `[1, P]` tape variable starting at
    /// column `offset`.
    pub fn vars_from_flat(&self, tape: &mut Tape, flat: Var, offset: usize) -> MlpVars {
        let mut off = offset;
        let mut take = |tape: &mut Tape, rows: usize, cols: usize| {
            let s = tape.slice_cols(flat, off, off + rows * cols);
            off += rows * cols;
            if rows == 1 {
                s
            } else {
                tape.reshape(s, vec![rows, cols])
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|&(fi, fo, ln, act)| {
                let weight = take(tape, fi, fo);
                let bias = take(tape, 1, fo);
                let norm = ln.then(|| (take(tape, 1, fo), take(tape, 1, fo)));
                LayerVars {
                    weight,
                    bias,
                    norm,
                    activate: act,
                    fan_in: fi,
                    fan_out: fo,
                }
            })
            .collect();
        MlpVars {
            layers,
            activation: self.activation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
    pub norm: Option<(Var, Var)>,
    pub activate: bool,
    fan_in: usize,
    fan_out: usize,
}

/// Tape handles for an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<LayerVars>,
    pub activation: Activation,
}

impl MlpVars {
    /// Handles in the same order as [`Mlp::params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight);
            out.push(l.bias);
            if let Some((g, s)) = l.norm {
                out.push(g);
                out.push(s);
            }
        }
        out
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }
}

/// Forward pass of `input` (`[rows, input_dim]`) through the network.
pub fn mlp_apply(tape: &mut Tape, net: &MlpVars, input: Var) -> Result<Var> {
    let shape = tape.shape(input).to_vec();
    if shape.len() != 2 || shape[1] != net.input_dim() {
        return Err(contract(format!(
            "mlp input shape {:?}, expected [_, {}]",
            shape,
            net.input_dim()
        )));
    }
    let mut h = input;
    for l in &net.layers {
        let z = tape.matmul(h, l.weight);
        let mut z = tape.add_bcast(z, l.bias);
        if let Some((g, s)) = l.norm {
            z = tape.layer_norm(z, g, s, LAYER_NORM_FLOOR);
        }
        h = if l.activate {
            match net.activation {
                Activation::Relu => tape.relu(z),
                Activation::Tanh => tape.tanh(z),
            }
        } else {
            z
        };
    }
    Ok(h)
}
