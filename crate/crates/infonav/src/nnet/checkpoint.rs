//! Checkpoint file format.
//!
//! Layout:
//!   magic  b"INAVCKPT"
//!   u32 LE header length
//!   JSON header: schema version, model config, parameter defs,
//!                optimizer config, RNG state, flags
//!   payload: flat little-endian f64 arrays, parameters in def order,
//!            then (when present) optimizer state in the same order
//!
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::RmsPropConfig;
use super::store::{ParamDef, ParamStore};
use super::tensor::Tensor;
use crate::error::{NavError, Result};

const MAGIC: &[u8; 8] = b"INAVCKPT";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Serializable ChaCha8 RNG state.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RngState {
    pub seed_hex: String,
    pub word_pos_lo: u64,
    pub word_pos_hi: u64,
    pub stream: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed();
        let wp = rng.get_word_pos();
        RngState {
            seed_hex: seed.iter().map(|b| format!("{b:02x}")).collect(),
            word_pos_lo: wp as u64,
            word_pos_hi: (wp >> 64) as u64,
            stream: rng.get_stream(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.seed_hex.len() != 64 {
            return Err(NavError::Checkpoint("bad RNG seed length".into()));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in self.seed_hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk)
                .map_err(|_| NavError::Checkpoint("bad RNG seed hex".into()))?;
            seed[i] = u8::from_str_radix(s, 16)
                .map_err(|_| NavError::Checkpoint("bad RNG seed hex".into()))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    model_config: serde_json::Value,
    defs: Vec<ParamDef>,
    store_version: u64,
    optimizer: RmsPropConfig,
    has_opt_state: bool,
    rng: RngState,
}

pub struct Checkpoint {
    pub model_config: serde_json::Value,
    pub store: ParamStore,
    pub optimizer: RmsPropConfig,
    /// Optimizer state aligned with the full def list (zeros for
    /// non-trainable entries), or None for eval-only checkpoints.
    pub opt_state: Option<Vec<Tensor>>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model_config: self.model_config.clone(),
            defs: self.store.defs().to_vec(),
            store_version: self.store.version(),
            optimizer: self.optimizer,
            has_opt_state: self.opt_state.is_some(),
            rng: self.rng.clone(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut f = File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for id in 0..self.store.len() {
            write_f64s(&mut f, &self.store.get(id).data)?;
        }
        if let Some(state) = &self.opt_state {
            for t in state {
                write_f64s(&mut f, &t.data)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut f = File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NavError::Checkpoint("bad magic".into()));
        }
        let mut len_bytes = [0u8; 4];
        f.read_exact(&mut len_bytes)?;
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)?;
        if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(NavError::Checkpoint(format!(
                "unsupported schema version {}",
                header.schema_version
            )));
        }
        let mut values = Vec::with_capacity(header.defs.len());
        for d in &header.defs {
            values.push(Tensor {
                rows: d.rows,
                cols: d.cols,
                data: read_f64s(&mut f, d.rows * d.cols)?,
            });
        }
        let opt_state = if header.has_opt_state {
            let mut state = Vec::with_capacity(header.defs.len());
            for d in &header.defs {
                state.push(Tensor {
                    rows: d.rows,
                    cols: d.cols,
                    data: read_f64s(&mut f, d.rows * d.cols)?,
                });
            }
            Some(state)
        } else {
            None
        };
        Ok(Checkpoint {
            model_config: header.model_config,
            store: ParamStore::from_parts(header.defs, values, header.store_version),
            optimizer: header.optimizer,
            opt_state,
            rng: header.rng,
        })
    }
}

fn write_f64s(f: &mut File, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

fn read_f64s(f: &mut File, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    f.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
