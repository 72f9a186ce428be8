// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-describing binary model files.
//!
//! Layout:
//!
//! ```text
//! offset 0   8 bytes   magic "NRMMAP01"
//! offset 8   u32 LE    manifest length L in bytes
//! offset 12  L bytes   UTF-8 JSON manifest
//! offset 12+L          f64 LE values of every array, in manifest order,
//!                      each array row-major
//! ```
//!
//! The manifest is `{"kind": "plsr"|"ffnn", "meta": {...}, "arrays":
//! [{"name": ..., "shape": [...]}, ...]}`. A reader needs nothing else to
//! recover the arrays; `meta` holds scalars such as the component count.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{FfnnModel, MapperKind, Model, PlsModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NRMMAP01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: MapperKind,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub arrays: Vec<ArraySpec>,
}

struct Writer {
    specs: Vec<ArraySpec>,
    data: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer {
            specs: Vec::new(),
            data: Vec::new(),
        }
    }

    fn vec(&mut self, name: &str, a: &Array1<f64>) {
        self.push(name, vec![a.len()], a.iter());
    }

    fn mat(&mut self, name: &str, a: &Array2<f64>) {
        self.push(name, vec![a.nrows(), a.ncols()], a.iter());
    }

    fn push<'a>(&mut self, name: &str, shape: Vec<usize>, values: impl Iterator<Item = &'a f64>) {
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        self.specs.push(ArraySpec {
            name: name.into(),
            shape,
        });
    }

    fn finish(self, kind: MapperKind, meta: BTreeMap<String, serde_json::Value>) -> Vec<u8> {
        let manifest = Manifest {
            kind,
            meta,
            arrays: self.specs,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + json.len() + self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    let mut meta = BTreeMap::new();
    match model {
        Model::Pls(m) => {
            meta.insert("k".into(), m.k.into());
            meta.insert("n_iter".into(), serde_json::json!(m.n_iter));
            w.vec("x_mean", &m.x_mean);
            w.vec("y_mean", &m.y_mean);
            w.mat("x_weights", &m.x_weights);
            w.mat("x_loadings", &m.x_loadings);
            w.mat("y_loadings", &m.y_loadings);
            w.mat("coefficients", &m.coefficients);
        }
        Model::Ffnn(m) => {
            meta.insert("best_epoch".into(), m.best_epoch.into());
            w.mat("w1", &m.w1);
            w.vec("b1", &m.b1);
            w.mat("w2", &m.w2);
            w.vec("b2", &m.b2);
        }
    }
    w.finish(model.kind(), meta)
}

struct Reader {
    arrays: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Reader {
    fn take(&mut self, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let (shape, data) = self
            .arrays
            .remove(name)
            .ok_or_else(|| Error::Blob(format!("missing array '{name}'")))?;
        if shape.len() != rank {
            return Err(Error::Blob(format!(
                "array '{name}' has rank {}, expected {rank}",
                shape.len()
            )));
        }
        Ok((shape, data))
    }

    fn vec(&mut self, name: &str) -> Result<Array1<f64>> {
        let (_, data) = self.take(name, 1)?;
        Ok(Array1::from(data))
    }

    fn mat(&mut self, name: &str) -> Result<Array2<f64>> {
        let (shape, data) = self.take(name, 2)?;
        Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Blob(e.to_string()))
    }
}

fn meta_usize(meta: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<usize> {
    meta.get(key)
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .ok_or_else(|| Error::Blob(format!("meta field '{key}' missing or not an integer")))
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Blob("bad magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12usize
        .checked_add(len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Blob("manifest length exceeds file".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[12..body]).map_err(|e| Error::Blob(format!("manifest: {e}")))?;

    let mut rest = &bytes[body..];
    let mut arrays = BTreeMap::new();
    for spec in &manifest.arrays {
        let count: usize = spec.shape.iter().product();
        let need = count * 8;
        if rest.len() < need {
            return Err(Error::Blob(format!("array '{}' truncated", spec.name)));
        }
        let data = rest[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        rest = &rest[need..];
        arrays.insert(spec.name.clone(), (spec.shape.clone(), data));
    }
    if !rest.is_empty() {
        return Err(Error::Blob(format!("{} trailing bytes", rest.len())));
    }

    let mut r = Reader { arrays };
    let model = match manifest.kind {
        MapperKind::Plsr => {
            let n_iter = manifest
                .meta
                .get("n_iter")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default();
            Model::Pls(PlsModel {
                k: meta_usize(&manifest.meta, "k")?,
                x_mean: r.vec("x_mean")?,
                y_mean: r.vec("y_mean")?,
                x_weights: r.mat("x_weights")?,
                x_loadings: r.mat("x_loadings")?,
                y_loadings: r.mat("y_loadings")?,
                coefficients: r.mat("coefficients")?,
                n_iter,
            })
        }
        MapperKind::Ffnn => Model::Ffnn(FfnnModel {
            w1: r.mat("w1")?,
            b1: r.vec("b1")?,
            w2: r.mat("w2")?,
            b2: r.vec("b2")?,
            log: Vec::new(),
            best_epoch: meta_usize(&manifest.meta, "best_epoch")?,
        }),
    };
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
