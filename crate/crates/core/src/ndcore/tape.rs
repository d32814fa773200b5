//! Reverse-mode gradient tape.
//!
//! Operations are recorded in an append-only node list while the forward
//! values are computed eagerly, so every node only ever references earlier
//! nodes. [`Tape::grad`] walks the list once in reverse.
//!
//! The arithmetic primitives are `add`, `mul`, `matmul`, `relu`, `exp`, `log`,
//! `softplus`, `tanh`, `sum`, `mean` and `broadcast`. Layout-only operations
//! (`concat_cols`, `concat_rows`, `slice_cols`, `slice_rows`, `reshape`) move
//! values around without arithmetic. Everything else (`sub`, `sigmoid`,
//! `layer_norm`, ...) is composed from these.
//!
//! ```
//! use lfvi::ndcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x);
//! let g = tape.grad(y, &[x]).unwrap();
//! assert_eq!(g[0].item(), 6.0);
//! ```

use super::scalar::{sigmoid, softplus};
use super::tensor::Tensor;
use crate::error::{contract, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Broadcast(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), data).unwrap();
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(va.shape().to_vec(), data).unwrap();
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Mul(a, b), rg)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims2(self.value(a));
        let (k2, n) = dims2(self.value(b));
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Sum of all elements, shape `[]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all elements, shape `[]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.sum() / v.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Broadcasts a `[1, c]`, `[r, 1]` or one-element tensor to `[rows, cols]`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a);
        let (ar, ac) = if v.is_scalar() { (1, 1) } else { dims2(v) };
        assert!(
            (ar == 1 || ar == rows) && (ac == 1 || ac == cols),
            "broadcast: cannot expand {:?} to [{rows}, {cols}]",
            v.shape()
        );
        let src = v.data();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let rr = if ar == 1 { 0 } else { r };
            for c in 0..cols {
                let cc = if ac == 1 { 0 } else { c };
                out.push(src[rr * ac + cc]);
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(rows, cols, out), Op::Broadcast(a), rg)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "concat_cols: row mismatch");
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::matrix(rows, total, out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows: column mismatch");
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::matrix(rows, cols, out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        assert!(start <= end && end <= cols, "slice_cols: {start}..{end} of {cols}");
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let rg = self.rg(a);
        self.push(
            Tensor::matrix(rows, end - start, out),
            Op::SliceCols(a, start),
            rg,
        )
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        assert!(start <= end && end <= rows, "slice_rows: {start}..{end} of {rows}");
        let out = v.data()[start * cols..end * cols].to_vec();
        let rg = self.rg(a);
        self.push(
            Tensor::matrix(end - start, cols, out),
            Op::SliceRows(a, start),
            rg,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self
            .value(a)
            .clone()
            .reshaped(shape)
            .expect("reshape: element count mismatch");
        let rg = self.rg(a);
        self.push(t, Op::Reshape(a), rg)
    }

    // ---- composed operations -------------------------------------------

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let shape = self.shape(a).to_vec();
        let k = self.constant(Tensor::full(&shape, c));
        self.mul(a, k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let shape = self.shape(a).to_vec();
        let k = self.constant(Tensor::full(&shape, c));
        self.add(a, k)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// `exp(-log(a))`; `a` must be positive.
    pub fn recip(&mut self, a: Var) -> Var {
        let l = self.log(a);
        let nl = self.neg(l);
        self.exp(nl)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let r = self.recip(b);
        self.mul(a, r)
    }

    /// `exp(0.5 log(a))`; `a` must be positive.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let l = self.log(a);
        let h = self.scale(l, 0.5);
        self.exp(h)
    }

    /// `σ(a) = exp(-softplus(-a))`.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ls = self.log_sigmoid(a);
        self.exp(ls)
    }

    /// `log σ(a) = -softplus(-a)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let na = self.neg(a);
        let sp = self.softplus(na);
        self.neg(sp)
    }

    /// Adds `b` to `a`, broadcasting `b` up to `a`'s shape.
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Var {
        let b = self.expand_like(b, a);
        self.add(a, b)
    }

    /// Multiplies `a` by `b`, broadcasting `b` up to `a`'s shape.
    pub fn mul_bcast(&mut self, a: Var, b: Var) -> Var {
        let b = self.expand_like(b, a);
        self.mul(a, b)
    }

    fn expand_like(&mut self, b: Var, a: Var) -> Var {
        if self.shape(a) == self.shape(b) {
            return b;
        }
        let va = self.value(a);
        let (r, c) = (va.rows(), va.cols());
        let bb = self.broadcast(b, r, c);
        if self.shape(a).len() == 2 {
            bb
        } else {
            let shape = self.shape(a).to_vec();
            self.reshape(bb, shape)
        }
    }

    /// Per-row mean of a `[rows, cols]` matrix as `[rows, 1]`.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let c = self.value(a).cols();
        let ones = self.constant(Tensor::full(&[c, 1], 1.0 / c as f64));
        self.matmul(a, ones)
    }

    /// Per-row sum as `[rows, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let c = self.value(a).cols();
        let ones = self.constant(Tensor::full(&[c, 1], 1.0));
        self.matmul(a, ones)
    }

    /// Per-column sum of a `[rows, cols]` matrix as `[1, cols]`.
    pub fn col_sum(&mut self, a: Var) -> Var {
        let r = self.value(a).rows();
        let ones = self.constant(Tensor::full(&[1, r], 1.0));
        self.matmul(ones, a)
    }

    /// Row-wise log-softmax. The row maximum is subtracted as a constant,
    /// which leaves values and gradients unchanged.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let rows = v.rows();
        let maxes: Vec<f64> = (0..rows)
            .map(|i| v.row_slice(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let m = self.constant(Tensor::matrix(rows, 1, maxes));
        let nm = self.neg(m);
        let s = self.add_bcast(a, nm);
        let e = self.exp(s);
        let z = self.row_sum(e);
        let lz = self.log(z);
        let nlz = self.neg(lz);
        self.add_bcast(s, nlz)
    }

    /// Normalises each row to zero mean and unit variance (variance floored
    /// at `floor`), then applies `gain` and `shift` (both `[1, cols]`).
    pub fn layer_norm(&mut self, a: Var, gain: Var, shift: Var, floor: f64) -> Var {
        let mu = self.row_mean(a);
        let centred = {
            let nmu = self.neg(mu);
            self.add_bcast(a, nmu)
        };
        let sq = self.square(centred);
        let var = self.row_mean(sq);
        let var = self.add_scalar(var, floor);
        let sd = self.sqrt(var);
        let inv = self.recip(sd);
        let normed = self.mul_bcast(centred, inv);
        let scaled = self.mul_bcast(normed, gain);
        self.add_bcast(scaled, shift)
    }

    // ---- backward ---------------------------------------------------------

    /// Gradient of the scalar `output` with respect to each of `params`.
    ///
    /// Parameters with no path to `output` get zero gradients. Fails if
    /// `output` holds more than one element.
    pub fn grad(&self, output: Var, params: &[Var]) -> Result<Vec<Tensor>> {
        let out = &self.nodes[output.0].value;
        if !out.is_scalar() {
            return Err(contract(format!(
                "grad of non-scalar output with shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(params
            .iter()
            .map(|p| {
                grads
                    .get(p.0)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros_like(&self.nodes[p.0].value))
            })
            .collect())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign_scaled(&g, 1.0),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let vb = self.value(*b);
                    self.accumulate(grads, *a, zip_with(g, vb, |x, y| x * y));
                }
                if self.rg(*b) {
                    let va = self.value(*a);
                    self.accumulate(grads, *b, zip_with(g, va, |x, y| x * y));
                }
            }
            Op::MatMul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let (m, k) = dims2(va);
                let n = dims2(vb).1;
                if self.rg(*a) {
                    // dA = G B^T
                    let mut da = vec![0.0; m * k];
                    let gd = g.data();
                    let bd = vb.data();
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        let drow = &mut da[i * k..(i + 1) * k];
                        for (kk, d) in drow.iter_mut().enumerate() {
                            let brow = &bd[kk * n..(kk + 1) * n];
                            *d = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    let t = Tensor::new(va.shape().to_vec(), da).unwrap();
                    self.accumulate(grads, *a, t);
                }
                if self.rg(*b) {
                    // dB = A^T G
                    let mut db = vec![0.0; k * n];
                    let gd = g.data();
                    let ad = va.data();
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = ad[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let drow = &mut db[kk * n..(kk + 1) * n];
                            for (d, &x) in drow.iter_mut().zip(grow) {
                                *d += aik * x;
                            }
                        }
                    }
                    let t = Tensor::new(vb.shape().to_vec(), db).unwrap();
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                let t = zip_with(g, va, |gx, x| if x > 0.0 { gx } else { 0.0 });
                self.accumulate(grads, *a, t);
            }
            Op::Exp(a) => {
                let t = zip_with(g, &node.value, |gx, y| gx * y);
                self.accumulate(grads, *a, t);
            }
            Op::Log(a) => {
                let t = zip_with(g, self.value(*a), |gx, x| gx / x);
                self.accumulate(grads, *a, t);
            }
            Op::Softplus(a) => {
                let t = zip_with(g, self.value(*a), |gx, x| gx * sigmoid(x));
                self.accumulate(grads, *a, t);
            }
            Op::Tanh(a) => {
                let t = zip_with(g, &node.value, |gx, y| gx * (1.0 - y * y));
                self.accumulate(grads, *a, t);
            }
            Op::Sum(a) => {
                let t = Tensor::full(self.shape(*a), g.item());
                self.accumulate(grads, *a, t);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let t = Tensor::full(self.shape(*a), g.item() / n);
                self.accumulate(grads, *a, t);
            }
            Op::Broadcast(a) => {
                let va = self.value(*a);
                let (ar, ac) = if va.is_scalar() { (1, 1) } else { dims2(va) };
                let (rows, cols) = dims2(g);
                let mut out = vec![0.0; ar * ac];
                let gd = g.data();
                for r in 0..rows {
                    let rr = if ar == 1 { 0 } else { r };
                    for c in 0..cols {
                        let cc = if ac == 1 { 0 } else { c };
                        out[rr * ac + cc] += gd[r * cols + c];
                    }
                }
                let t = Tensor::new(va.shape().to_vec(), out).unwrap();
                self.accumulate(grads, *a, t);
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut out = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            out.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        let t = Tensor::new(self.shape(p).to_vec(), out).unwrap();
                        self.accumulate(grads, p, t);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        let out = g.data()[offset..offset + n].to_vec();
                        let t = Tensor::new(self.shape(p).to_vec(), out).unwrap();
                        self.accumulate(grads, p, t);
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let (rows, cols) = (va.rows(), va.cols());
                let w = g.cols();
                let mut out = vec![0.0; rows * cols];
                for r in 0..rows {
                    out[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                }
                let t = Tensor::new(va.shape().to_vec(), out).unwrap();
                self.accumulate(grads, *a, t);
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let cols = va.cols();
                let mut out = vec![0.0; va.len()];
                out[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                let t = Tensor::new(va.shape().to_vec(), out).unwrap();
                self.accumulate(grads, *a, t);
            }
            Op::Reshape(a) => {
                let t = Tensor::new(self.shape(*a).to_vec(), g.data().to_vec()).unwrap();
                self.accumulate(grads, *a, t);
            }
        }
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    match t.shape().len() {
        0 => (1, 1),
        1 => (1, t.shape()[0]),
        2 => (t.shape()[0], t.shape()[1]),
        _ => panic!("expected a matrix, got shape {:?}", t.shape()),
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(b.shape().to_vec(), data).unwrap()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x);
        assert_eq!(t.grad(y, &[x]).unwrap()[0].item(), 6.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(0.0));
        let y = t.sigmoid(x);
        let g = t.grad(y, &[x]).unwrap()[0].item();
        assert!((g - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Tensor::row(vec![1.0, 2.0]));
        let y = t.relu(x);
        assert!(t.grad(y, &[x]).is_err());
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor::row(vec![1.0, 2.0]));
        let w = t.param(Tensor::row(vec![5.0, 5.0]));
        let y = t.sum(x);
        let g = t.grad(y, &[x, w]).unwrap();
        assert_eq!(g[1].data(), &[0.0, 0.0]);
        assert_eq!(g[0].data(), &[1.0, 1.0]);
    }

    #[test]
    fn layout_ops_route_gradients() {
        let mut t = Tape::new();
        let a = t.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = t.param(Tensor::matrix(2, 1, vec![5.0, 6.0]));
        let c = t.concat_cols(&[a, b]);
        let s = t.slice_cols(c, 1, 3);
        let r = t.slice_rows(s, 1, 2);
        let w = t.constant(Tensor::matrix(1, 2, vec![10.0, 100.0]));
        let p = t.mul(r, w);
        let y = t.sum(p);
        assert_eq!(t.value(y).item(), 4.0 * 10.0 + 6.0 * 100.0);
        let g = t.grad(y, &[a, b]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 0.0, 10.0]);
        assert_eq!(g[1].data(), &[0.0, 100.0]);
    }

    #[test]
    fn broadcast_sums_back() {
        let mut t = Tape::new();
        let b = t.param(Tensor::row(vec![1.0, 2.0]));
        let bb = t.broadcast(b, 3, 2);
        let y = t.sum(bb);
        assert_eq!(t.grad(y, &[b]).unwrap()[0].data(), &[3.0, 3.0]);
    }
}
