//! Binary model checkpoints.
//!
//! Layout: the magic bytes, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header (model config, Fourier
//! table length, parameter group names, shapes and kinds), then every value
//! as little-endian `f64`: Fourier frequencies, Fourier phases, parameter
//! groups in header order. Values are stored bit-exactly.

use std::fs;
use std::path::Path;

use condiff_core::nn::{ParamGroup, ParamKind};
use condiff_core::{Denoiser, DenoiserConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::write_file;

pub const MAGIC: &[u8; 8] = b"CONDIFF\x01";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupHeader {
    name: String,
    shape: Vec<usize>,
    kind: ParamKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: DenoiserConfig,
    fourier: usize,
    groups: Vec<GroupHeader>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Checkpoint(msg.into())
}

pub fn encode(model: &Denoiser) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        fourier: model.fourier_freqs().len(),
        groups: model
            .params()
            .iter()
            .map(|g| GroupHeader {
                name: g.name.clone(),
                shape: g.shape.clone(),
                kind: g.kind,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + json.len() + 8 * (2 * header.fourier + model.param_count()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let values = model
        .fourier_freqs()
        .iter()
        .chain(model.fourier_phases())
        .chain(model.params().iter().flat_map(|g| g.data.iter()));
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> CliResult<Denoiser> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a condiff checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated checkpoint"))?;
    if hlen > body.len() {
        return Err(bad("truncated checkpoint header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(format!("corrupt header: {e}")))?;
    let payload = &body[hlen..];
    let total: usize = 2 * header.fourier
        + header
            .groups
            .iter()
            .map(|g| g.shape.iter().product::<usize>())
            .sum::<usize>();
    if payload.len() != 8 * total {
        return Err(bad(format!("payload holds {} bytes, header implies {}", payload.len(), 8 * total)));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
    let freqs = take(header.fourier);
    let phases = take(header.fourier);
    let params = header
        .groups
        .into_iter()
        .map(|g| {
            let n = g.shape.iter().product();
            ParamGroup {
                name: g.name,
                shape: g.shape,
                kind: g.kind,
                data: take(n),
            }
        })
        .collect();
    Denoiser::from_parts(header.config, freqs, phases, params).map_err(|e| bad(e.to_string()))
}

pub fn save(model: &Denoiser, path: &Path) -> CliResult<()> {
    write_file(path, &encode(model))
}

pub fn load(path: &Path) -> CliResult<Denoiser> {
    let bytes = fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Checkpoint(m) => bad(format!("{}: {m}", path.display())),
        other => other,
    })
}
