//! JSON checkpoints of parameter blocks with an integrity hash.
//!
//! Values are stored as 17-significant-digit decimals, which round-trip
//! `f64` exactly and `f32` exactly after widening. Loading an `f32`
//! checkpoint into an `f64` model widens every value; the reverse
//! direction is refused.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::to_json_string;
use crate::error::{ensure, Error, Result};
use crate::nn::ParamBlock;
use crate::rl::Janus;
use crate::scalar::Scalar;
use crate::victim::{VictimMeta, VictimModel};

pub const FORMAT: &str = "janus-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn of<T: Scalar>() -> Self {
        if T::PRECISION == "f32" {
            Precision::F32
        } else {
            Precision::F64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub seed: u64,
    pub epoch: usize,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub victim: Option<VictimMeta>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shape: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub format: String,
    pub precision: Precision,
    pub meta: CheckpointMeta,
    pub blocks: Vec<Vec<TensorRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope {
    sha256: String,
    payload: Payload,
}

pub fn block_records<T: Scalar>(p: &ParamBlock<T>) -> Vec<TensorRecord> {
    p.names()
        .iter()
        .zip(p.tensors())
        .map(|(name, t)| TensorRecord {
            name: name.clone(),
            shape: [t.nrows(), t.ncols()],
            data: t.iter().map(|x| x.as_f64()).collect(),
        })
        .collect()
}

/// Overwrites every tensor of `p` from `records`, matching names and shapes.
pub fn restore_block<T: Scalar>(p: &mut ParamBlock<T>, records: &[TensorRecord], precision: Precision) -> Result<()> {
    ensure!(
        precision == Precision::of::<T>() || precision == Precision::F32,
        Validation,
        "cannot narrow a {precision:?} checkpoint into {:?}",
        Precision::of::<T>()
    );
    ensure!(records.len() == p.len(), Validation, "checkpoint has {} tensors, model has {}", records.len(), p.len());
    for (i, r) in records.iter().enumerate() {
        ensure!(r.name == p.names()[i], Validation, "tensor {i} is `{}`, expected `{}`", r.name, p.names()[i]);
        ensure!(r.data.len() == r.shape[0] * r.shape[1], Shape, "tensor `{}` data does not fill its shape", r.name);
        let t = Array2::from_shape_vec((r.shape[0], r.shape[1]), r.data.iter().map(|&x| T::of(x)).collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        p.set(i, t)?;
    }
    Ok(())
}

fn digest(p: &Payload) -> Result<String> {
    Ok(hex::encode(Sha256::digest(to_json_string(p)?.as_bytes())))
}

pub fn write_checkpoint(payload: &Payload, path: &Path) -> Result<()> {
    let env = Envelope {
        sha256: digest(payload)?,
        payload: payload.clone(),
    };
    std::fs::write(path, to_json_string(&env)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Payload> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    ensure!(env.payload.format == FORMAT, Validation, "unknown checkpoint format `{}`", env.payload.format);
    let found = digest(&env.payload)?;
    if found != env.sha256 {
        return Err(Error::HashMismatch {
            expected: env.sha256,
            found,
        });
    }
    Ok(env.payload)
}

pub fn victim_payload<T: Scalar>(m: &VictimModel<T>, config_hash: &str) -> Payload {
    Payload {
        format: FORMAT.into(),
        precision: Precision::of::<T>(),
        meta: CheckpointMeta {
            kind: "victim".into(),
            seed: m.meta.seed,
            epoch: m.meta.config.epochs,
            config_hash: config_hash.into(),
            victim: Some(m.meta.clone()),
            shape: Some(vec![m.input_dim(), m.num_classes()]),
        },
        blocks: vec![block_records(m.params())],
    }
}

pub fn victim_from_payload<T: Scalar>(p: &Payload) -> Result<VictimModel<T>> {
    ensure!(p.meta.kind == "victim", Validation, "checkpoint holds a `{}`, not a victim", p.meta.kind);
    let meta = p.meta.victim.clone().ok_or_else(|| Error::Validation("victim checkpoint without metadata".into()))?;
    let shape = p.meta.shape.as_deref().unwrap_or_default();
    ensure!(shape.len() == 2 && p.blocks.len() == 1, Validation, "malformed victim checkpoint");
    let (dim, classes) = (shape[0], shape[1]);
    let mut params = VictimModel::<T>::layout(&meta, dim, classes);
    restore_block(&mut params, &p.blocks[0], p.precision)?;
    VictimModel::from_parts(params, meta, dim, classes)
}

pub fn save_victim<T: Scalar>(m: &VictimModel<T>, config_hash: &str, path: &Path) -> Result<()> {
    write_checkpoint(&victim_payload(m, config_hash), path)
}

pub fn load_victim<T: Scalar>(path: &Path) -> Result<VictimModel<T>> {
    victim_from_payload(&read_checkpoint(path)?)
}

pub fn attacker_payload<T: Scalar>(m: &Janus<T>, seed: u64, epoch: usize, config_hash: &str) -> Payload {
    Payload {
        format: FORMAT.into(),
        precision: Precision::of::<T>(),
        meta: CheckpointMeta {
            kind: "attacker".into(),
            seed,
            epoch,
            config_hash: config_hash.into(),
            victim: None,
            shape: None,
        },
        blocks: vec![
            block_records(&m.generator.params),
            block_records(&m.critic.params),
            block_records(&m.discriminator.params),
        ],
    }
}

/// Loads parameters into `model`, which must have been built with the
/// same configuration.
pub fn restore_attacker<T: Scalar>(model: &mut Janus<T>, p: &Payload) -> Result<()> {
    ensure!(p.meta.kind == "attacker", Validation, "checkpoint holds a `{}`, not an attacker", p.meta.kind);
    ensure!(p.blocks.len() == 3, Validation, "attacker checkpoint needs 3 blocks, has {}", p.blocks.len());
    restore_block(&mut model.generator.params, &p.blocks[0], p.precision)?;
    restore_block(&mut model.critic.params, &p.blocks[1], p.precision)?;
    restore_block(&mut model.discriminator.params, &p.blocks[2], p.precision)
}
