//! `ecn-ckpt v1` container.
//!
//! ```text
//! ecn-ckpt v1\n
//! <one line of JSON: config, feature layout, seed, tensor names and shapes>\n
//! <every tensor as little-endian f64, in the order listed>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_params, EcnConfig, EcnParams};
use crate::error::{Error, Result};
use crate::features::FeatureLayout;

pub const CHECKPOINT_MAGIC: &str = "ecn-ckpt v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EcnConfig,
    pub layout: FeatureLayout,
    pub seed: u64,
    pub epochs: usize,
    pub params: EcnParams,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EcnConfig,
    layout: FeatureLayout,
    seed: u64,
    epochs: usize,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            config: self.config.clone(),
            layout: self.layout.clone(),
            seed: self.seed,
            epochs: self.epochs,
            tensors: self
                .params
                .tensors()
                .into_iter()
                .map(|t| TensorEntry {
                    name: t.name,
                    shape: t.shape,
                })
                .collect(),
        };
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for t in self.params.tensors() {
            for v in t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from(r: impl Read, origin: &str) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint {
            origin: origin.to_owned(),
            message,
        };
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
        if line.trim_end() != CHECKPOINT_MAGIC {
            return Err(bad(format!("missing `{CHECKPOINT_MAGIC}` tag")));
        }
        line.clear();
        r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
        let header: Header =
            serde_json::from_str(&line).map_err(|e| bad(format!("bad header: {e}")))?;
        header.config.validate()?;

        let mut params = init_params(&header.config, &header.layout, 0);
        let mut tensors = params.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return Err(bad(format!(
                "expected {} tensors, header lists {}",
                tensors.len(),
                header.tensors.len()
            )));
        }
        let mut buf = [0u8; 8];
        for (t, entry) in tensors.iter_mut().zip(&header.tensors) {
            if t.name != entry.name || t.shape != entry.shape {
                return Err(bad(format!(
                    "tensor {} {:?} does not match configuration ({} {:?})",
                    entry.name, entry.shape, t.name, t.shape
                )));
            }
            for v in t.data.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| bad(format!("truncated data in {}", entry.name)))?;
                *v = f64::from_le_bytes(buf);
            }
        }
        drop(tensors);
        if r.read(&mut buf).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes after tensor data".into()));
        }
        if !params.is_finite() {
            return Err(bad("non-finite parameter".into()));
        }
        Ok(Checkpoint {
            config: header.config,
            layout: header.layout,
            seed: header.seed,
            epochs: header.epochs,
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file, &path.display().to_string())
    }

    /// Refuse to run under a layout other than the one trained with.
    pub fn ensure_layout(&self, requested: &FeatureLayout) -> Result<()> {
        self.layout.ensure_matches(requested)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityScope, TaskSetting, TrainingScope};

    fn checkpoint() -> Checkpoint {
        let setting = TaskSetting {
            use_labels: true,
            entity_scope: EntityScope::Ohqa,
            training_scope: TrainingScope::Multilingual,
        };
        let layout = FeatureLayout::for_setting(&setting, Some(3), 4);
        let config = EcnConfig {
            node_dim: 5,
            edge_dim: 3,
            layers: 2,
            stacked_convolutions: 2,
            decoder_hidden: 4,
            label_dim: 4,
            ..EcnConfig::default()
        };
        Checkpoint {
            params: init_params(&config, &layout, 11),
            config,
            layout,
            seed: 11,
            epochs: 3,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = checkpoint();
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"ecn-ckpt v1\n"));
        let back = Checkpoint::read_from(bytes.as_slice(), "mem").unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn truncation_detected() {
        let mut bytes = Vec::new();
        checkpoint().write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 4);
        let err = Checkpoint::read_from(bytes.as_slice(), "mem").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn wrong_magic_rejected() {
        assert!(Checkpoint::read_from(&b"ecn-ckpt v2\n{}\n"[..], "mem").is_err());
    }

    #[test]
    fn layout_guard() {
        let ckpt = checkpoint();
        let mut other = ckpt.layout.clone();
        other.text_dim = None;
        assert!(ckpt.ensure_layout(&ckpt.layout).is_ok());
        assert!(ckpt.ensure_layout(&other).is_err());
    }
}
