//! Checkpoint format: `checkpoint.json` manifest plus `tensors.bin`, the
//! little-endian f32 arrays concatenated in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LagclError, Result};
use crate::scalar::Scalar;

use super::config::Hyperparams;
use super::params::ParameterSet;
use super::TrainingSummary;

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "checkpoint.json";
const TENSORS: &str = "tensors.bin";
const EMBEDDINGS: &str = "embeddings";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyperparams: Hyperparams,
    pub num_users: usize,
    pub num_items: usize,
    pub summary: TrainingSummary,
    pub params: ParameterSet<f32>,
    /// Recommendation-branch readout at the selected parameters.
    pub embeddings: Array2<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    hyperparams: Hyperparams,
    num_users: usize,
    num_items: usize,
    summary: TrainingSummary,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn files(dir: impl AsRef<Path>) -> [PathBuf; 2] {
        let dir = dir.as_ref();
        [dir.join(MANIFEST), dir.join(TENSORS)]
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<[PathBuf; 2]> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| LagclError::io(dir, e))?;
        let names = ParameterSet::<f32>::tensor_names(self.params.num_layers());
        let mut entries = Vec::new();
        let mut bytes = Vec::new();
        for (name, (shape, data)) in names.into_iter().zip(self.params.tensors()) {
            entries.push(TensorEntry { name, shape });
            data.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        }
        entries.push(TensorEntry {
            name: EMBEDDINGS.into(),
            shape: self.embeddings.shape().to_vec(),
        });
        self.embeddings.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            hyperparams: self.hyperparams.clone(),
            num_users: self.num_users,
            num_items: self.num_items,
            summary: self.summary.clone(),
            tensors: entries,
        };
        let [mpath, tpath] = Self::files(dir);
        fs::write(&mpath, serde_json::to_vec_pretty(&manifest)?).map_err(|e| LagclError::io(&mpath, e))?;
        fs::write(&tpath, bytes).map_err(|e| LagclError::io(&tpath, e))?;
        Ok([mpath, tpath])
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let [mpath, tpath] = Self::files(dir);
        let text = fs::read(&mpath).map_err(|e| LagclError::io(&mpath, e))?;
        let value: serde_json::Value = serde_json::from_slice(&text)
            .map_err(|e| LagclError::Corrupt(format!("{}: {e}", mpath.display())))?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(LagclError::Version { found, expected: CHECKPOINT_VERSION });
        }
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| LagclError::Corrupt(format!("{}: {e}", mpath.display())))?;
        let bytes = fs::read(&tpath).map_err(|e| LagclError::io(&tpath, e))?;

        let hp = &manifest.hyperparams;
        let n = manifest.num_users + manifest.num_items;
        let mut params = ParameterSet::<f32>::zeros(n, hp.dim, hp.layers);
        let mut expected: Vec<(String, Vec<usize>)> = ParameterSet::<f32>::tensor_names(hp.layers)
            .into_iter()
            .zip(params.shapes())
            .collect();
        expected.push((EMBEDDINGS.into(), vec![n, hp.dim]));
        if manifest.tensors.len() != expected.len() {
            return Err(LagclError::Corrupt(format!(
                "{} tensors declared, {} expected",
                manifest.tensors.len(),
                expected.len()
            )));
        }
        for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
            if &entry.name != name || &entry.shape != shape {
                return Err(LagclError::Shape(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    entry.name, entry.shape
                )));
            }
        }
        let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if bytes.len() != total * 4 {
            return Err(LagclError::Corrupt(format!(
                "{}: {} bytes, manifest declares {}",
                tpath.display(),
                bytes.len(),
                total * 4
            )));
        }
        let mut values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        for t in params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = values.next().expect("length checked"));
        }
        let embeddings = Array2::from_shape_vec((n, hp.dim), values.collect()).expect("length checked");
        Ok(Checkpoint {
            hyperparams: manifest.hyperparams,
            num_users: manifest.num_users,
            num_items: manifest.num_items,
            summary: manifest.summary,
            params,
            embeddings,
        })
    }

    /// Load and require the shapes implied by `hp`.
    pub fn load_for(dir: impl AsRef<Path>, hp: &Hyperparams) -> Result<Self> {
        let ck = Self::load(dir)?;
        ck.check_compatible(hp)?;
        Ok(ck)
    }

    pub fn check_compatible(&self, hp: &Hyperparams) -> Result<()> {
        if self.hyperparams.dim != hp.dim || self.hyperparams.layers != hp.layers {
            return Err(LagclError::Shape(format!(
                "checkpoint has d={}, L={}; configuration expects d={}, L={}",
                self.hyperparams.dim, self.hyperparams.layers, hp.dim, hp.layers
            )));
        }
        Ok(())
    }

    pub fn params_as<T: Scalar>(&self) -> ParameterSet<T> {
        self.params.cast()
    }

    pub fn embeddings_as<T: Scalar>(&self) -> Array2<T> {
        self.embeddings.mapv(|v| T::of(v as f64))
    }
}
