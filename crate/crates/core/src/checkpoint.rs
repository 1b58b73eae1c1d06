//! Parameter checkpoints.
//!
//! A checkpoint is a UTF-8 JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "metadata": { "any": "json" },
//!   "entries": [ { "name": "actor.l0.weight", "shape": [3, 64], "values": [ ... ] } ]
//! }
//! ```
//!
//! `values` are row-major. Floats are written in shortest round-trip form, so
//! loading reproduces every parameter bit for bit. Non-finite values cannot be
//! stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self { format_version: CHECKPOINT_FORMAT_VERSION, metadata, entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            values: tensor.data().to_vec(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Tensor stored under `name`, checked against `shape`.
    pub fn tensor(&self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let e = self.get(name).ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))?;
        if e.shape != shape {
            return Err(Error::Checkpoint(format!("entry `{name}` has shape {:?}, expected {shape:?}", e.shape)));
        }
        Ok(Tensor::new(e.shape.clone(), e.values.clone())?)
    }

    pub fn to_json(&self) -> Result<String> {
        if let Some(e) = self.entries.iter().find(|e| e.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::Checkpoint(format!("entry `{}` holds non-finite values", e.name)));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (this build reads {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            )));
        }
        for e in &ck.entries {
            if e.shape.iter().product::<usize>() != e.values.len() {
                return Err(Error::Checkpoint(format!(
                    "entry `{}`: shape {:?} does not match {} values",
                    e.name,
                    e.shape,
                    e.values.len()
                )));
            }
        }
        Ok(ck)
    }

    /// Write via a temporary sibling and rename, so readers never observe a
    /// partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name =
        path.file_name().ok_or_else(|| Error::Input(format!("not a file path: {}", path.display())))?.to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let t = Tensor::matrix(2, 3, vec![0.1, -1e-300, 3.0, 1.0 / 3.0, f64::MIN_POSITIVE, -2.5e17]);
        let mut ck = Checkpoint::new(serde_json::json!({"seed": 4}));
        ck.push("w", &t);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.tensor("w", &[2, 3]).unwrap(), t);
    }

    #[test]
    fn rejects_bad_documents() {
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("w", &Tensor::row(&[f64::NAN]));
        assert!(ck.to_json().is_err());

        let bad = r#"{"format_version":1,"entries":[{"name":"w","shape":[2,2],"values":[1.0]}]}"#;
        assert!(Checkpoint::from_json(bad).is_err());
        let future = r#"{"format_version":99,"entries":[]}"#;
        assert!(Checkpoint::from_json(future).is_err());

        let ok = r#"{"format_version":1,"entries":[{"name":"w","shape":[1,2],"values":[1.0,2.0]}]}"#;
        let ck = Checkpoint::from_json(ok).unwrap();
        assert!(ck.tensor("w", &[2, 1]).is_err());
        assert!(ck.tensor("missing", &[1, 2]).is_err());
    }
}
