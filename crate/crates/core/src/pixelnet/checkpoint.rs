//! Checkpoint container.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format": "boxsup-checkpoint",
//!   "version": 1,
//!   "config": <NetConfig>,
//!   "epoch": <completed epochs>,
//!   "params": [[f32, ...], ...],
//!   "velocity": [[f32, ...], ...] | null,
//!   "extra": <any JSON> | null
//! }
//! ```
//!
//! `params` and `velocity` list one flat array per tensor in declared layer
//! order: for each convolution its weights (`[out][in][ky][kx]`, row-major)
//! followed by its biases. Floats are written in shortest round-trip form,
//! so a save/load cycle is lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, NetConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "boxsup-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub epoch: usize,
    pub params: ModelParams<f32>,
    pub velocity: Option<ModelParams<f32>>,
    pub extra: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    format: String,
    version: u32,
    config: NetConfig,
    epoch: usize,
    params: Vec<Vec<f32>>,
    velocity: Option<Vec<Vec<f32>>>,
    extra: Option<serde_json::Value>,
}

fn flatten(p: &ModelParams<f32>) -> Vec<Vec<f32>> {
    p.tensors().map(<[f32]>::to_vec).collect()
}

fn unflatten(config: &NetConfig, arrays: Vec<Vec<f32>>) -> Result<ModelParams<f32>> {
    let mut p = ModelParams::zeros(config);
    let expected = p.tensors().count();
    if arrays.len() != expected {
        return Err(Error::Shape(format!(
            "checkpoint holds {} tensors, config needs {expected}",
            arrays.len()
        )));
    }
    for (i, (dst, src)) in p.tensors_mut().zip(arrays).enumerate() {
        if dst.len() != src.len() {
            return Err(Error::Shape(format!(
                "tensor {i} has {} values, expected {}",
                src.len(),
                dst.len()
            )));
        }
        *dst = src;
    }
    Ok(p)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let wire = Wire {
        format: CHECKPOINT_FORMAT.into(),
        version: VERSION,
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        params: flatten(&ckpt.params),
        velocity: ckpt.velocity.as_ref().map(flatten),
        extra: ckpt.extra.clone(),
    };
    let json = serde_json::to_vec(&wire).map_err(|e| Error::parse(path, e))?;
    crate::datasets::write_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let wire: Wire = serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e))?;
    if wire.format != CHECKPOINT_FORMAT || wire.version != VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported checkpoint {} v{}", wire.format, wire.version),
        ));
    }
    wire.config.validate()?;
    let params = unflatten(&wire.config, wire.params)?;
    let velocity = wire
        .velocity
        .map(|v| unflatten(&wire.config, v))
        .transpose()?;
    Ok(Checkpoint {
        config: wire.config,
        epoch: wire.epoch,
        params,
        velocity,
        extra: wire.extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let config = NetConfig {
            seed: 11,
            ..NetConfig::default()
        };
        let params = ModelParams::<f32>::init(&config).unwrap();
        let ckpt = Checkpoint {
            config,
            epoch: 3,
            velocity: Some(params.clone()),
            params,
            extra: Some(serde_json::json!({"k": 1})),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }
}
