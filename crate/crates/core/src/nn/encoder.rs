//! DeepSets encoder `H(S) = rho(pool_{x in S} phi(x))`.
//!
//! Points are put into a canonical (lexicographic) order before the per-point
//! network runs, so pooling always accumulates in the same order and the
//! output is bit-identical for every permutation of the input set.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Var};
use super::tensor::{self, Tensor};
use crate::dist::SampleSet;
use crate::exec::Exec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    fn apply(self, x: Tensor) -> Tensor {
        match self {
            Activation::Tanh => tensor::map(&x, f64::tanh),
            Activation::Softplus => tensor::map(&x, tensor::softplus),
            Activation::Identity => x,
        }
    }

    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Softplus => tape.softplus(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub input_dim: usize,
    /// Output width of every per-point layer.
    pub phi_widths: Vec<usize>,
    /// Hidden widths after pooling; a final linear layer maps to `output_dim`.
    pub rho_hidden: Vec<usize>,
    pub output_dim: usize,
    pub pooling: Pooling,
    pub activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            phi_widths: vec![128, 128, 128],
            rho_hidden: vec![64],
            output_dim: 2,
            pooling: Pooling::Mean,
            activation: Activation::Softplus,
        }
    }
}

impl ArchConfig {
    pub fn with_input_dim(mut self, d: usize) -> Self {
        self.input_dim = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.phi_widths.is_empty() {
            return Err(Error::InvalidArgument(
                "architecture needs input_dim, output_dim >= 1 and at least one phi layer".into(),
            ));
        }
        if self.phi_widths.iter().chain(&self.rho_hidden).any(|&w| w == 0) {
            return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Glorot-uniform weights, zero biases.
    Xavier,
    Zero,
    /// Identity-like weights (ones on the diagonal), zero biases.
    Identity,
}

/// Affine layer `y = x W + b`, `W` is `in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub arch: ArchConfig,
    pub phi: Vec<Dense>,
    pub rho: Vec<Dense>,
}

/// Tape handles for every parameter tensor, in [`EncoderParams::tensors`] order.
pub struct ParamVars {
    pub vars: Vec<Var>,
}

fn init_dense(fan_in: usize, fan_out: usize, mode: InitMode, rng: &mut ChaCha8Rng) -> Dense {
    let weight = match mode {
        InitMode::Zero => Tensor::zeros(fan_in, fan_out),
        InitMode::Identity => {
            let mut w = Tensor::zeros(fan_in, fan_out);
            for i in 0..fan_in.min(fan_out) {
                w.data_mut()[i * fan_out + i] = 1.0;
            }
            w
        }
        InitMode::Xavier => {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(fan_in, fan_out, data).expect("shape by construction")
        }
    };
    Dense { weight, bias: Tensor::zeros(1, fan_out) }
}

impl EncoderParams {
    /// Deterministic initialization per `(arch, seed, mode)`.
    pub fn init(arch: &ArchConfig, seed: u64, mode: InitMode) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phi = Vec::new();
        let mut fan_in = arch.input_dim;
        for &w in &arch.phi_widths {
            phi.push(init_dense(fan_in, w, mode, &mut rng));
            fan_in = w;
        }
        let mut rho = Vec::new();
        for &w in arch.rho_hidden.iter().chain(std::iter::once(&arch.output_dim)) {
            rho.push(init_dense(fan_in, w, mode, &mut rng));
            fan_in = w;
        }
        Ok(Self { arch: arch.clone(), phi, rho })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.phi.iter().chain(&self.rho).flat_map(|d| [&d.weight, &d.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.phi.iter_mut().chain(self.rho.iter_mut()).flat_map(|d| [&mut d.weight, &mut d.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    /// Check that layer shapes chain from `input_dim` to `output_dim`.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let mut fan_in = self.arch.input_dim;
        let expected_out =
            self.arch.phi_widths.iter().chain(&self.arch.rho_hidden).chain(std::iter::once(&self.arch.output_dim));
        let layers = self.phi.iter().chain(&self.rho);
        if self.phi.len() != self.arch.phi_widths.len() || self.rho.len() != self.arch.rho_hidden.len() + 1 {
            return Err(Error::Shape { op: "encoder", detail: "layer count does not match architecture".into() });
        }
        for (layer, &out) in layers.zip(expected_out) {
            if layer.weight.shape() != (fan_in, out) || layer.bias.shape() != (1, out) {
                return Err(Error::Shape {
                    op: "encoder",
                    detail: format!("layer {:?} does not map {fan_in} -> {out}", layer.weight.shape()),
                });
            }
            fan_in = out;
        }
        if !self.is_finite() {
            return Err(Error::InvalidArgument("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars { vars: self.tensors().map(|t| tape.leaf(t.clone())).collect() }
    }

    fn check_set(&self, s: &SampleSet) -> Result<()> {
        if s.dim != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, got: s.dim });
        }
        if s.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        Ok(())
    }

    /// Stack the canonicalized points of every set plus segment offsets.
    pub fn stack_sets(&self, sets: &[&SampleSet]) -> Result<(Tensor, Arc<Vec<usize>>)> {
        let d = self.arch.input_dim;
        let mut data = Vec::with_capacity(sets.iter().map(|s| s.points.len()).sum());
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        offsets.push(0);
        for s in sets {
            self.check_set(s)?;
            data.extend(canonical_points(s));
            offsets.push(data.len() / d);
        }
        Ok((Tensor::new(data.len() / d, d, data)?, Arc::new(offsets)))
    }

    /// Forward pass for many sets on a tape; returns a `sets x output_dim` node.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &ParamVars, sets: &[&SampleSet]) -> Result<Var> {
        if sets.is_empty() {
            return Err(Error::Empty("encoder batch"));
        }
        let (x, offsets) = self.stack_sets(sets)?;
        let mut h = tape.leaf(x);
        let mut v = vars.vars.iter();
        let act = self.arch.activation;
        for _ in &self.phi {
            let (w, b) = (*v.next().unwrap(), *v.next().unwrap());
            let z = tape.matmul(h, w)?;
            let z = tape.add_row(z, b)?;
            h = act.apply_tape(tape, z);
        }
        h = tape.segment_pool(h, offsets, self.arch.pooling == Pooling::Mean)?;
        let last = self.rho.len() - 1;
        for k in 0..self.rho.len() {
            let (w, b) = (*v.next().unwrap(), *v.next().unwrap());
            let z = tape.matmul(h, w)?;
            let z = tape.add_row(z, b)?;
            h = if k < last { act.apply_tape(tape, z) } else { z };
        }
        Ok(h)
    }

    /// Tape-free forward pass over a batch, `sets x output_dim`.
    pub fn forward(&self, sets: &[&SampleSet]) -> Result<Tensor> {
        if sets.is_empty() {
            return Ok(Tensor::zeros(0, self.arch.output_dim));
        }
        let (x, offsets) = self.stack_sets(sets)?;
        let act = self.arch.activation;
        let mut h = x;
        for layer in &self.phi {
            h = act.apply(tensor::add_row(&tensor::matmul(&h, &layer.weight)?, &layer.bias)?);
        }
        h = tensor::segment_pool(&h, &offsets, self.arch.pooling == Pooling::Mean)?;
        let last = self.rho.len() - 1;
        for (k, layer) in self.rho.iter().enumerate() {
            let z = tensor::add_row(&tensor::matmul(&h, &layer.weight)?, &layer.bias)?;
            h = if k < last { act.apply(z) } else { z };
        }
        Ok(h)
    }

    /// `H(S)`.
    pub fn encode(&self, s: &SampleSet) -> Result<Vec<f64>> {
        Ok(self.forward(&[s])?.into_data())
    }

    /// `encode` for every set, fanned out over `exec`; elementwise equal to `encode`.
    pub fn encode_batch(&self, sets: &[SampleSet], exec: Exec) -> Result<Vec<Vec<f64>>> {
        exec.try_map(sets, |s| self.encode(s))
    }
}

/// Points of `s` sorted lexicographically (by `f64::total_cmp`), flattened.
pub fn canonical_points(s: &SampleSet) -> Vec<f64> {
    let d = s.dim;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| {
        s.point(a)
            .iter()
            .zip(s.point(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Vec::with_capacity(s.points.len());
    for i in idx {
        out.extend_from_slice(&s.points[i * d..(i + 1) * d]);
    }
    out
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
