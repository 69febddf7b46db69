//! A small tape-based reverse-mode differentiator.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep over
//! the tape visits every node after all of its consumers. Only the
//! operations the encoder and its losses need are supported.

use std::sync::Arc;

use super::tensor::{self, gemm, Tensor};
use crate::{Error, Result};

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
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Softplus(Var),
    SegmentPool { x: Var, offsets: Arc<Vec<usize>>, mean: bool },
    GatherRows(Var, Arc<Vec<usize>>),
    RowNorm(Var),
    Square(Var),
    SumAll(Var),
    MeanAll(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Shape { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) })
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// Parameters and constants alike enter as leaves.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient slot of `v`, populated by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x + bias` with a `1 x cols` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = tensor::add_row(self.value(x), self.value(bias))?;
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(va.rows(), va.cols(), data)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = tensor::map(self.value(x), |v| c * v);
        self.push(out, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = tensor::map(self.value(x), f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = tensor::map(self.value(x), tensor::softplus);
        self.push(out, Op::Softplus(x))
    }

    /// Pool row segments `[offsets[s], offsets[s+1])` into row `s`.
    pub fn segment_pool(&mut self, x: Var, offsets: Arc<Vec<usize>>, mean: bool) -> Result<Var> {
        let out = tensor::segment_pool(self.value(x), &offsets, mean)?;
        Ok(self.push(out, Op::SegmentPool { x, offsets, mean }))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let v = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::Shape { op: "gather_rows", detail: format!("row {bad} of {}", v.rows()) });
        }
        let mut data = Vec::with_capacity(idx.len() * v.cols());
        for &i in idx.iter() {
            data.extend_from_slice(v.row_slice(i));
        }
        let out = Tensor::new(idx.len(), v.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(x, idx)))
    }

    /// Euclidean norm of every row, as a column.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let cols = v.cols().max(1);
        let norms = v.data().chunks(cols).map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt()).collect();
        self.push(Tensor::column(norms), Op::RowNorm(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = tensor::map(self.value(x), |v| v * v);
        self.push(out, Op::Square(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Empty("mean_all input"));
        }
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::MeanAll(x)))
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        let slot = &mut self.nodes[v.0].grad;
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar `loss`, filling every reachable gradient slot.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    let mut ga = Tensor::zeros(m, k);
                    gemm(m, n, k, g.data(), false, vb.data(), true, ga.data_mut(), 0.0);
                    let mut gb = Tensor::zeros(k, n);
                    gemm(k, m, n, va.data(), true, g.data(), false, gb.data_mut(), 0.0);
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::AddRow(x, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *acc += v;
                        }
                    }
                    self.accumulate(bias, gb);
                    self.accumulate(x, g.clone());
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate(b, tensor::map(&g, |v| -v));
                    self.accumulate(a, g.clone());
                }
                Op::Scale(x, c) => self.accumulate(x, tensor::map(&g, |v| c * v)),
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    let data = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    let gx = Tensor::new(y.rows(), y.cols(), data)?;
                    self.accumulate(x, gx);
                }
                Op::Softplus(x) => {
                    let v = self.value(x);
                    let data = g.data().iter().zip(v.data()).map(|(gv, xv)| gv * sigmoid(*xv)).collect();
                    let gx = Tensor::new(v.rows(), v.cols(), data)?;
                    self.accumulate(x, gx);
                }
                Op::SegmentPool { x, offsets, mean } => {
                    let cols = g.cols();
                    let mut gx = Tensor::zeros(self.value(x).rows(), cols);
                    for s in 0..offsets.len() - 1 {
                        let (lo, hi) = (offsets[s], offsets[s + 1]);
                        let scale = if mean { 1.0 / (hi - lo) as f64 } else { 1.0 };
                        let gs = g.row_slice(s);
                        for r in lo..hi {
                            for (dst, v) in gx.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(gs) {
                                *dst = scale * v;
                            }
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::GatherRows(x, idx_rows) => {
                    let cols = g.cols();
                    let mut gx = Tensor::zeros(self.value(x).rows(), cols);
                    for (r, &src) in idx_rows.iter().enumerate() {
                        for (dst, v) in gx.data_mut()[src * cols..(src + 1) * cols].iter_mut().zip(g.row_slice(r)) {
                            *dst += v;
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::RowNorm(x) => {
                    let vx = self.value(x);
                    let norms = &self.nodes[idx].value;
                    let cols = vx.cols();
                    let mut data = vec![0.0; vx.len()];
                    for r in 0..vx.rows() {
                        let nr = norms.get(r, 0);
                        if nr > 0.0 {
                            let f = g.get(r, 0) / nr;
                            for (dst, v) in data[r * cols..(r + 1) * cols].iter_mut().zip(vx.row_slice(r)) {
                                *dst = f * v;
                            }
                        }
                    }
                    let gx = Tensor::new(vx.rows(), cols, data)?;
                    self.accumulate(x, gx);
                }
                Op::Square(x) => {
                    let vx = self.value(x);
                    let data = g.data().iter().zip(vx.data()).map(|(gv, xv)| 2.0 * gv * xv).collect();
                    let gx = Tensor::new(vx.rows(), vx.cols(), data)?;
                    self.accumulate(x, gx);
                }
                Op::SumAll(x) => {
                    let (r, c) = self.value(x).shape();
                    let gx = Tensor::new(r, c, vec![g.item(); r * c])?;
                    self.accumulate(x, gx);
                }
                Op::MeanAll(x) => {
                    let (r, c) = self.value(x).shape();
                    let gx = Tensor::new(r, c, vec![g.item() / (r * c) as f64; r * c])?;
                    self.accumulate(x, gx);
                }
            }
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_norm_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row(vec![3.0, 4.0]));
        let n = t.row_norm(w);
        let l = t.square(n);
        let l = t.sum_all(l);
        t.backward(l).unwrap();
        assert_eq!(t.value(l).item(), 25.0);
        let g = t.grad(w).unwrap().data();
        assert!((g[0] - 6.0).abs() < 1e-12 && (g[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row(vec![1.0, -2.0]));
        let c = t.leaf(Tensor::scalar(3.5));
        let zero = t.scale(w, 0.0);
        let s = t.sum_all(zero);
        let l = t.add(s, c).unwrap();
        t.backward(l).unwrap();
        assert!(t.grad(w).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(t.backward(w), Err(Error::NonScalarLoss { rows: 1, cols: 2 })));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(2, 3));
        let b = t.leaf(Tensor::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        let bias = t.leaf(Tensor::zeros(1, 2));
        assert!(t.add_row(a, bias).is_err());
        let c = t.leaf(Tensor::zeros(3, 2));
        assert!(t.add(a, c).is_err());
        assert!(t.gather_rows(a, Arc::new(vec![5])).is_err());
        assert!(t.segment_pool(a, Arc::new(vec![0, 1]), true).is_err());
    }
}
