//! Self-describing binary checkpoints.
//!
//! ```text
//! "WUYUNCKP" | u32 version | u32 header_len | header JSON
//! | [u8; 32] vocabulary hash | u64 seed | u64 step
//! | u64 n | n x f32 parameters
//! | u8 has_optimizer [ | u64 t | n x f32 m | n x f32 v ]
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::NeuroError;
use crate::model::{Model, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::params::{ParamSpec, ParamStore};
use crate::train::Trainer;

pub const MAGIC: &[u8; 8] = b"WUYUNCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamSpec>,
    adam: Option<AdamConfig>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub specs: Vec<ParamSpec>,
    pub vocab_hash: [u8; 32],
    pub seed: u64,
    pub step: u64,
    pub params: Vec<f32>,
    pub optimizer: Option<Adam>,
    /// Free-form build and run metadata.
    pub provenance: BTreeMap<String, String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuroError> {
        if self.bytes.len() - self.at < n {
            return Err(NeuroError::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuroError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuroError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NeuroError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NeuroError::Checkpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, vocab_hash: [u8; 32], seed: u64, step: u64) -> Self {
        Checkpoint {
            config: model.config.clone(),
            specs: model.params.specs(),
            vocab_hash,
            seed,
            step,
            params: model.params.flat(),
            optimizer: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint { optimizer: Some(t.adam.clone()), ..Checkpoint::from_model(&t.model, t.vocab_hash, t.seed, t.step) }
    }

    pub fn model(&self) -> Result<Model<f32>, NeuroError> {
        let fresh = Model::<f32>::new(self.config.clone(), 0)?;
        if fresh.params.specs() != self.specs {
            return Err(NeuroError::Checkpoint("parameter layout does not match the configuration".into()));
        }
        let mut store: ParamStore<f32> = fresh.params.clone();
        store.set_flat(&self.params);
        Model::with_params(self.config.clone(), store)
    }

    /// Resume training from this checkpoint.
    pub fn trainer(&self) -> Result<Trainer, NeuroError> {
        let model = self.model()?;
        let n = model.params.count();
        let adam = self.optimizer.clone().unwrap_or_else(|| Adam::new(AdamConfig::default(), n));
        Ok(Trainer { model, adam, seed: self.seed, step: self.step, vocab_hash: self.vocab_hash })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            params: self.specs.clone(),
            adam: self.optimizer.as_ref().map(|a| a.config),
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(64 + json.len() + self.params.len() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.vocab_hash);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        put_f32s(&mut out, &self.params);
        match &self.optimizer {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.t.to_le_bytes());
                put_f32s(&mut out, &a.m);
                put_f32s(&mut out, &a.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuroError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(NeuroError::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NeuroError::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| NeuroError::Checkpoint(format!("header: {e}")))?;
        header.config.validate()?;
        let vocab_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let seed = r.u64()?;
        let step = r.u64()?;
        let n = r.u64()? as usize;
        if n != header.config.param_count() {
            return Err(NeuroError::Checkpoint(format!(
                "{n} parameters, configuration needs {}",
                header.config.param_count()
            )));
        }
        let params = r.f32s(n)?;
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let t = r.u64()?;
                let m = r.f32s(n)?;
                let v = r.f32s(n)?;
                Some(Adam { config: header.adam.unwrap_or_default(), m, v, t })
            }
            x => return Err(NeuroError::Checkpoint(format!("bad optimizer flag {x}"))),
        };
        if r.at != bytes.len() {
            return Err(NeuroError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config: header.config,
            specs: header.params,
            vocab_hash,
            seed,
            step,
            params,
            optimizer,
            provenance: header.provenance,
        })
    }

    pub fn check_vocab(&self, hash: [u8; 32]) -> Result<(), NeuroError> {
        if hash != self.vocab_hash {
            let hex = |b: &[u8]| b.iter().map(|x| format!("{x:02x}")).collect::<String>();
            return Err(NeuroError::VocabMismatch { expected: hex(&self.vocab_hash), found: hex(&hash) });
        }
        Ok(())
    }
}
