//! Binary checkpoints for [`MlpNet`].
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                               |
//! |-------|---------------------------------------|
//! | 8     | magic `VSCRLMLP`                      |
//! | 4     | format version (1)                    |
//! | 4     | number of layer sizes `k`             |
//! | 4 k   | layer sizes                           |
//! | 1     | hidden activation tag                 |
//! | 1     | output activation tag                 |
//! | 8 n   | parameters as `f64`                   |
//!
//! A TOML manifest next to the file (`<file>.manifest`) records the shapes, a
//! SHA-256 of the binary, and free-form metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, MlpNet};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"VSCRLMLP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub num_params: usize,
    pub sha256: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn encode(net: &MlpNet) -> Vec<u8> {
    let sizes = net.layer_sizes();
    let mut out = Vec::with_capacity(18 + 4 * sizes.len() + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.push(net.hidden_activation().tag());
    out.push(net.output_activation().tag());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<MlpNet> {
    let bad = |why: &str| Error::IncompatibleCheckpoint(why.to_string());
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated file"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    if u32_at(take(4)?) != VERSION {
        return Err(bad("unsupported version"));
    }
    let k = u32_at(take(4)?) as usize;
    let mut sizes = Vec::with_capacity(k);
    for _ in 0..k {
        sizes.push(u32_at(take(4)?) as usize);
    }
    let hidden = Activation::from_tag(take(1)?[0]).ok_or_else(|| bad("unknown activation tag"))?;
    let output = Activation::from_tag(take(1)?[0]).ok_or_else(|| bad("unknown activation tag"))?;
    let mut net = MlpNet::zeros(&sizes, hidden, output).map_err(|e| bad(&e.to_string()))?;
    let n = net.num_params();
    let raw = take(8 * n)?;
    for (p, chunk) in net.params_mut().iter_mut().zip(raw.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    if take(1).is_ok() {
        return Err(bad("trailing bytes"));
    }
    Ok(net)
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the checkpoint and its manifest; returns the manifest.
pub fn save(net: &MlpNet, path: &Path, meta: BTreeMap<String, String>) -> Result<Manifest> {
    let bytes = encode(net);
    let manifest = Manifest {
        format: format!("vscrl-mlp-v{VERSION}"),
        layer_sizes: net.layer_sizes().to_vec(),
        hidden_activation: net.hidden_activation(),
        output_activation: net.output_activation(),
        num_params: net.num_params(),
        sha256: content_hash(&bytes),
        meta,
    };
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    std::fs::write(&mpath, text).map_err(|e| Error::io(mpath, e))?;
    Ok(manifest)
}

/// Loads a checkpoint, verifying it against its manifest when one exists.
pub fn load(path: &Path) -> Result<(MlpNet, Option<Manifest>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let net = decode(&bytes)?;
    let mpath = manifest_path(path);
    let manifest = match std::fs::read_to_string(&mpath) {
        Ok(text) => {
            let m: Manifest = toml::from_str(&text)
                .map_err(|e| Error::IncompatibleCheckpoint(format!("manifest: {e}")))?;
            if m.sha256 != content_hash(&bytes) {
                return Err(Error::IncompatibleCheckpoint("content hash mismatch".into()));
            }
            if m.layer_sizes != net.layer_sizes() {
                return Err(Error::IncompatibleCheckpoint("manifest shapes disagree".into()));
            }
            Some(m)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(mpath, e)),
    };
    Ok((net, manifest))
}
