//! Trained-model file.
//!
//! `LVRM`, a little-endian u32 version, a u64 length and that many bytes of
//! JSON describing the model, then a u64 parameter count and the parameters
//! as little-endian f64.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec};
use crate::reduce::ModelKind;

pub const MODEL_MAGIC: &[u8; 4] = b"LVRM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: Option<ModelKind>,
    pub spec: NetworkSpec,
    pub rng_seed: u64,
    /// Names of the input columns, in model order.
    pub feature_names: Vec<String>,
    pub timesteps: usize,
    pub normalization: Option<NormStats>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub descriptor: ModelDescriptor,
    pub network: Network,
}

impl ModelArtifact {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let json = serde_json::to_vec(&self.descriptor)?;
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let params = self.network.params();
        out.write_all(&(params.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(params.len() * 8);
        for p in params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<ModelArtifact> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let mut v = [0u8; 4];
        input.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file version {version}")));
        }
        let len = read_u64(&mut input)? as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let descriptor: ModelDescriptor = serde_json::from_slice(&json)?;
        let n = read_u64(&mut input)? as usize;
        let mut buf = vec![0u8; n * 8];
        input.read_exact(&mut buf)?;
        let params = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let network = Network::from_params(descriptor.spec.clone(), params, descriptor.rng_seed)?;
        Ok(ModelArtifact { descriptor, network })
    }
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
