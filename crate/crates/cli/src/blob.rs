//! Versioned binary snapshot of a [`ToyModel`].
//!
//! Layout, all integers little-endian: magic `DACSMDL1`, `u32` version,
//! `u64` input dimension, `u64` config length followed by the config as
//! JSON, `u64` parameter count followed by the parameters as `f64`.

use dacs::model::{ModelConfig, ToyModel};

use crate::{usage, CliResult};

pub const MAGIC: &[u8; 8] = b"DACSMDL1";
pub const VERSION: u32 = 1;

pub fn encode(model: &ToyModel) -> Vec<u8> {
    let config = serde_json::to_vec(&model.config).expect("model config serializes");
    let params = model.params.to_flat();
    let mut out = Vec::with_capacity(36 + config.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_dim as u64).to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> CliResult<&'a [u8]> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            usage(format!(
                "model blob truncated at byte offset {} reading {what}: need {len} bytes, {} left",
                self.at,
                self.bytes.len() - self.at
            ))
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u64(&mut self, what: &str) -> CliResult<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| usage(format!("{what} {v} does not fit in memory")))
    }
}

pub fn decode(bytes: &[u8]) -> CliResult<ToyModel> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(usage("bad magic at byte offset 0: not a DACSMDL1 model blob"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(usage(format!("unsupported model blob version {version} (expected {VERSION})")));
    }
    let input_dim = r.u64("input dimension")?;
    let config_len = r.u64("config length")?;
    let config_at = r.at;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| usage(format!("model config at byte offset {config_at}: {e}")))?;
    let count = r.u64("parameter count")?;
    let raw = r.take(count.saturating_mul(8), "parameters")?;
    if r.at != bytes.len() {
        return Err(usage(format!("{} trailing bytes after offset {}", bytes.len() - r.at, r.at)));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut model = ToyModel::zeros(config, input_dim)?;
    model.params.set_flat(&flat)?;
    Ok(model)
}
