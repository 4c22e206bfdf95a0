//! Model files: magic `FMNW1`, u32 little-endian length of the JSON config,
//! the config, then every parameter as little-endian f32 in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::network::Network;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"FMNW1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    seed: u64,
    parameter_count: usize,
}

impl Network<f32> {
    pub fn to_bytes(&self, seed: u64) -> Vec<u8> {
        let header = Header {
            config: self.config().clone(),
            seed,
            parameter_count: self.parameter_count(),
        };
        let json = serde_json::to_vec(&header).expect("config serializes");
        let mut out = Vec::with_capacity(9 + json.len() + 4 * header.parameter_count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.params() {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: &str| Error::format(path, detail);
        if bytes.len() < 9 || &bytes[..5] != MAGIC {
            return Err(bad("not an FMNW1 model file"));
        }
        let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let json = bytes.get(9..9 + len).ok_or_else(|| bad("truncated config"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::json(path, e))?;
        let mut net = Network::build(header.config, header.seed)?;
        let body = &bytes[9 + len..];
        if body.len() != 4 * net.parameter_count() || header.parameter_count != net.parameter_count() {
            return Err(bad(&format!(
                "expected {} parameters, file holds {} bytes",
                net.parameter_count(),
                body.len()
            )));
        }
        let mut chunks = body.chunks_exact(4);
        for p in net.params_mut() {
            for v in p.values_mut() {
                *v = f32::from_le_bytes(chunks.next().expect("length checked").try_into().expect("4 bytes"));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        fs::write(path, self.to_bytes(seed)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
