//! Siamese distance-regression losses.
//!
//! `loss_wass` is the mean over sampled pairs of
//! `(|H(S_X) - H(S_Y)| - SD(X, Y))^2`. The regularized loss adds the
//! translation residual `|H(S_X + t) - H(S_Y + t)| - |H(S_X) - H(S_Y)|` and
//! the scaling residual `|H(a S_X) - H(a S_Y)| - |a| |H(S_X) - H(S_Y)|`,
//! each squared and averaged over the same pairs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::SampleSet;
use crate::nn::{EncoderParams, ParamVars, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    None,
    ScalingOnly,
    Full,
}

impl RegMode {
    pub const ALL: [RegMode; 3] = [RegMode::Full, RegMode::ScalingOnly, RegMode::None];

    pub fn name(self) -> &'static str {
        match self {
            RegMode::None => "none",
            RegMode::ScalingOnly => "scaling_only",
            RegMode::Full => "full",
        }
    }

    pub fn uses_translation(self) -> bool {
        self == RegMode::Full
    }

    pub fn uses_scaling(self) -> bool {
        self != RegMode::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegWeights {
    pub translation: f64,
    pub scaling: f64,
}

impl Default for RegWeights {
    fn default() -> Self {
        Self { translation: 1.0, scaling: 1.0 }
    }
}

/// A minibatch of sets, the pairs compared within it, and their targets.
#[derive(Clone, Debug)]
pub struct PairBatch {
    pub sets: Vec<SampleSet>,
    /// Indices into `sets`; never `(i, i)`.
    pub pairs: Vec<(usize, usize)>,
    pub targets: Vec<f64>,
    /// `sets` translated by a common vector.
    pub translated: Option<Vec<SampleSet>>,
    /// `sets` scaled by a common factor, and that factor.
    pub scaled: Option<(Vec<SampleSet>, f64)>,
}

impl PairBatch {
    pub fn new(sets: Vec<SampleSet>, pairs: Vec<(usize, usize)>, targets: Vec<f64>) -> Result<Self> {
        if pairs.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: pairs.len(), got: targets.len() });
        }
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i == j || i >= sets.len() || j >= sets.len()) {
            return Err(Error::InvalidArgument(format!("invalid pair ({i}, {j})")));
        }
        if targets.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("targets must be finite and >= 0".into()));
        }
        Ok(Self { sets, pairs, targets, translated: None, scaled: None })
    }

    pub fn with_translation(mut self, t: &[f64]) -> Result<Self> {
        self.translated = Some(self.sets.iter().map(|s| s.translate(t)).collect::<Result<_>>()?);
        Ok(self)
    }

    pub fn with_scaling(mut self, a: f64) -> Result<Self> {
        let scaled = self.sets.iter().map(|s| s.scale(a)).collect::<Result<_>>()?;
        self.scaled = Some((scaled, a));
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub wass: f64,
    pub translation: f64,
    pub scaling: f64,
}

pub struct LossGraph {
    pub total: Var,
    pub wass: Var,
    pub translation: Option<Var>,
    pub scaling: Option<Var>,
}

impl LossGraph {
    pub fn terms(&self, tape: &Tape) -> LossTerms {
        LossTerms {
            total: tape.value(self.total).item(),
            wass: tape.value(self.wass).item(),
            translation: self.translation.map_or(0.0, |v| tape.value(v).item()),
            scaling: self.scaling.map_or(0.0, |v| tape.value(v).item()),
        }
    }
}

/// Record the loss for `batch` under `mode` on `tape`.
pub fn build_loss(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &EncoderParams,
    batch: &PairBatch,
    mode: RegMode,
    weights: RegWeights,
) -> Result<LossGraph> {
    if batch.pairs.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    let m = batch.sets.len();
    let mut all: Vec<&SampleSet> = batch.sets.iter().collect();
    let translated = if mode.uses_translation() {
        let t = batch
            .translated
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("translation regularizer needs translated variants".into()))?;
        if t.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: t.len() });
        }
        all.extend(t.iter());
        Some(m)
    } else {
        None
    };
    let scaled = if mode.uses_scaling() {
        let (s, a) = batch
            .scaled
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("scaling regularizer needs scaled variants".into()))?;
        if s.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: s.len() });
        }
        let offset = all.len();
        all.extend(s.iter());
        Some((offset, a.abs()))
    } else {
        None
    };
    let emb = params.forward_tape(tape, vars, &all)?;
    let distances = |tape: &mut Tape, offset: usize| -> Result<Var> {
        let left = Arc::new(batch.pairs.iter().map(|&(i, _)| offset + i).collect::<Vec<_>>());
        let right = Arc::new(batch.pairs.iter().map(|&(_, j)| offset + j).collect::<Vec<_>>());
        let l = tape.gather_rows(emb, left)?;
        let r = tape.gather_rows(emb, right)?;
        let diff = tape.sub(l, r)?;
        Ok(tape.row_norm(diff))
    };
    let mean_sq = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        let d = tape.sub(a, b)?;
        let sq = tape.square(d);
        tape.mean_all(sq)
    };

    let base = distances(tape, 0)?;
    let targets = tape.leaf(Tensor::column(batch.targets.clone()));
    let wass = mean_sq(tape, base, targets)?;
    let mut total = wass;
    let translation = match translated {
        Some(offset) => {
            let moved = distances(tape, offset)?;
            let term = mean_sq(tape, moved, base)?;
            let weighted = tape.scale(term, weights.translation);
            total = tape.add(total, weighted)?;
            Some(term)
        }
        None => None,
    };
    let scaling = match scaled {
        Some((offset, abs_a)) => {
            let stretched = distances(tape, offset)?;
            let expected = tape.scale(base, abs_a);
            let term = mean_sq(tape, stretched, expected)?;
            let weighted = tape.scale(term, weights.scaling);
            total = tape.add(total, weighted)?;
            Some(term)
        }
        None => None,
    };
    Ok(LossGraph { total, wass, translation, scaling })
}

pub fn loss_full(params: &EncoderParams, batch: &PairBatch, mode: RegMode, weights: RegWeights) -> Result<LossTerms> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let g = build_loss(&mut tape, &vars, params, batch, mode, weights)?;
    Ok(g.terms(&tape))
}

pub fn loss_wass(params: &EncoderParams, batch: &PairBatch) -> Result<f64> {
    Ok(loss_full(params, batch, RegMode::None, RegWeights::default())?.total)
}

/// Loss terms plus gradients in [`EncoderParams::tensors`] order.
pub fn loss_and_grad(
    params: &EncoderParams,
    batch: &PairBatch,
    mode: RegMode,
    weights: RegWeights,
) -> Result<(LossTerms, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let g = build_loss(&mut tape, &vars, params, batch, mode, weights)?;
    tape.backward(g.total)?;
    let terms = g.terms(&tape);
    let grads = vars
        .vars
        .iter()
        .zip(params.tensors())
        .map(|(&v, p)| tape.take_grad(v).unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();
    Ok((terms, grads))
}
