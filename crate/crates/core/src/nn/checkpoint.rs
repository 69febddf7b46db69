//! Versioned JSON checkpoints. Weight arrays are row-major little-endian
//! `f64`, base64 encoded, so `load(save(params))` is bit-identical.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::encoder::{ArchConfig, Dense, EncoderParams};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "wembed-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adam moment estimates, one flat vector per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub seed: u64,
    /// Digest of the training config that produced these weights.
    pub config_digest: String,
    /// Completed epochs.
    pub epoch: usize,
    pub optimizer: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct ArrayFile {
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weight: ArrayFile,
    bias: ArrayFile,
}

#[derive(Serialize, Deserialize)]
struct OptimizerFile {
    step: u64,
    m: Vec<String>,
    v: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    arch: ArchConfig,
    seed: u64,
    config_digest: String,
    epoch: usize,
    phi: Vec<LayerFile>,
    rho: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerFile>,
}

fn encode_f64s(xs: &[f64]) -> String {
    let bytes: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f64s(s: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(s).map_err(|e| Error::Format(format!("base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("weight blob is not a whole number of f64".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn array_out(t: &Tensor) -> ArrayFile {
    ArrayFile { rows: t.rows(), cols: t.cols(), data: encode_f64s(t.data()) }
}

fn array_in(a: &ArrayFile) -> Result<Tensor> {
    Tensor::new(a.rows, a.cols, decode_f64s(&a.data)?)
}

fn layer_out(d: &Dense) -> LayerFile {
    LayerFile { weight: array_out(&d.weight), bias: array_out(&d.bias) }
}

fn layer_in(l: &LayerFile) -> Result<Dense> {
    Ok(Dense { weight: array_in(&l.weight)?, bias: array_in(&l.bias)? })
}

impl Checkpoint {
    pub fn new(params: EncoderParams, seed: u64) -> Self {
        Self { params, seed, config_digest: String::new(), epoch: 0, optimizer: None }
    }

    pub fn to_json(&self) -> Result<String> {
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.params.arch.clone(),
            seed: self.seed,
            config_digest: self.config_digest.clone(),
            epoch: self.epoch,
            phi: self.params.phi.iter().map(layer_out).collect(),
            rho: self.params.rho.iter().map(layer_out).collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerFile {
                step: o.step,
                m: o.m.iter().map(|x| encode_f64s(x)).collect(),
                v: o.v.iter().map(|x| encode_f64s(x)).collect(),
            }),
        };
        Ok(serde_json::to_string_pretty(&manifest)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", m.format)));
        }
        if m.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", m.version)));
        }
        let params = EncoderParams {
            arch: m.arch,
            phi: m.phi.iter().map(layer_in).collect::<Result<_>>()?,
            rho: m.rho.iter().map(layer_in).collect::<Result<_>>()?,
        };
        params.validate()?;
        let optimizer = match m.optimizer {
            Some(o) => Some(AdamState {
                step: o.step,
                m: o.m.iter().map(|s| decode_f64s(s)).collect::<Result<_>>()?,
                v: o.v.iter().map(|s| decode_f64s(s)).collect::<Result<_>>()?,
            }),
            None => None,
        };
        Ok(Self { params, seed: m.seed, config_digest: m.config_digest, epoch: m.epoch, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
