// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trace interchange directory.
//!
//! ```text
//! manifest.json  {"tokens": [..], "dims": {"n_layers", "n_heads", "seq", "d_model"},
//!                 "dtype": "f32le", "files": {"hidden", "attn", "emb0"}}
//! hidden.bin     (n_layers+1)·seq·d_model values
//! attn.bin       n_layers·n_heads·seq·seq values
//! emb0.bin       seq·d_model values
//! ```
//!
//! Values are 32-bit little-endian floats in row-major order. They are widened
//! to f64 on load.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::STOCHASTIC_TOL;
use crate::trace::Trace;

pub const MANIFEST: &str = "manifest.json";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_layers: usize,
    pub n_heads: usize,
    pub seq: usize,
    pub d_model: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Files {
    pub hidden: String,
    pub attn: String,
    pub emb0: String,
}

impl Default for Files {
    fn default() -> Self {
        Files {
            hidden: "hidden.bin".into(),
            attn: "attn.bin".into(),
            emb0: "emb0.bin".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub tokens: Vec<usize>,
    /// Optional surface strings for `tokens`, written by external extractors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_strings: Option<Vec<String>>,
    pub dims: Dims,
    pub dtype: String,
    #[serde(default)]
    pub files: Files,
}

fn encode(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

pub fn save_trace(trace: &Trace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = TraceManifest {
        tokens: trace.tokens.clone(),
        token_strings: None,
        dims: Dims {
            n_layers: trace.n_layers(),
            n_heads: trace.n_heads(),
            seq: trace.seq_len(),
            d_model: trace.d_model(),
        },
        dtype: DTYPE.into(),
        files: Files::default(),
    };
    let write = |name: &str, bytes: Vec<u8>| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write(MANIFEST, json)?;
    write(&manifest.files.hidden, encode(trace.hidden.iter().copied()))?;
    write(&manifest.files.attn, encode(trace.attn.iter().copied()))?;
    write(&manifest.files.emb0, encode(trace.embeddings0.iter().copied()))?;
    Ok(())
}

fn read_f32(dir: &Path, name: &str, expected: usize) -> Result<Vec<f64>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Trace(format!(
            "{name}: {} bytes, manifest implies {}",
            bytes.len(),
            expected * 4
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Trace(format!("{name}: non-finite value")));
    }
    Ok(values)
}

/// Loads and validates a trace directory. Attention rows must sum to 1
/// within 1e-4 after the 32-bit round trip.
pub fn load_trace(dir: &Path) -> Result<Trace> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: TraceManifest = serde_json::from_str(&text).map_err(|e| Error::Trace(format!("manifest: {e}")))?;
    if m.dtype != DTYPE {
        return Err(Error::Trace(format!("dtype '{}' unsupported, expected {DTYPE}", m.dtype)));
    }
    let Dims {
        n_layers,
        n_heads,
        seq,
        d_model,
    } = m.dims;
    if m.tokens.len() != seq {
        return Err(Error::Trace(format!(
            "{} tokens but seq = {seq}",
            m.tokens.len()
        )));
    }
    if let Some(s) = &m.token_strings {
        if s.len() != seq {
            return Err(Error::Trace("token_strings length differs from seq".into()));
        }
    }
    let shape_err = |e: ndarray::ShapeError| Error::Trace(e.to_string());
    let hidden = Array3::from_shape_vec(
        (n_layers + 1, seq, d_model),
        read_f32(dir, &m.files.hidden, (n_layers + 1) * seq * d_model)?,
    )
    .map_err(shape_err)?;
    let attn = Array4::from_shape_vec(
        (n_layers, n_heads, seq, seq),
        read_f32(dir, &m.files.attn, n_layers * n_heads * seq * seq)?,
    )
    .map_err(shape_err)?;
    let embeddings0 =
        Array2::from_shape_vec((seq, d_model), read_f32(dir, &m.files.emb0, seq * d_model)?).map_err(shape_err)?;
    let trace = Trace {
        tokens: m.tokens,
        embeddings0,
        hidden,
        attn,
    };
    trace.validate(STOCHASTIC_TOL)?;
    Ok(trace)
}

/// Loads every subdirectory of `root` that holds a manifest, in name order.
pub fn load_trace_dir(root: &Path) -> Result<Vec<(String, Trace)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    if root.join(MANIFEST).is_file() {
        dirs.push(root.to_path_buf());
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Trace(format!("no traces under {}", root.display())));
    }
    dirs.into_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            load_trace(&d).map(|t| (name, t))
        })
        .collect()
}
