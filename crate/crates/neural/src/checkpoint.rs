//! On-disk model state: one raw little-endian f32 file per array plus a
//! JSON manifest naming each array and its shape.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError};
use crate::params::ParamStore;
use crate::train::{Adam, TrainConfig};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {0}")]
    Version(u32),
    #[error("array {name}: expected {expected} values, file holds {found} bytes")]
    Size { name: String, expected: usize, found: usize },
    #[error("parameter layout does not match the model configuration")]
    Layout,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Relative to the checkpoint directory.
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamInfo {
    pub step: u64,
    pub m: Vec<ArrayInfo>,
    pub v: Vec<ArrayInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub variant: String,
    pub model: ModelConfig,
    pub epoch: usize,
    pub params: Vec<ArrayInfo>,
    pub adam: Option<AdamInfo>,
    pub train: Option<TrainConfig>,
}

/// Model parameters with optional optimizer state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: usize,
    pub adam: Option<Adam>,
    pub train: Option<TrainConfig>,
}

fn write_array(dir: &Path, file: &str, data: &[f64]) -> Result<(), CheckpointError> {
    let path = dir.join(file);
    let mut bytes = Vec::with_capacity(4 * data.len());
    for &x in data {
        // exact: stored values are f32-representable
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn read_array(dir: &Path, info: &ArrayInfo) -> Result<Vec<f64>, CheckpointError> {
    let path = dir.join(&info.file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let expected: usize = info.shape.iter().product();
    if bytes.len() != 4 * expected {
        return Err(CheckpointError::Size {
            name: info.name.clone(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn infos(params: &ParamStore, prefix: &str) -> Vec<ArrayInfo> {
    params
        .entries()
        .iter()
        .map(|e| ArrayInfo {
            name: e.name.clone(),
            shape: e.shape.clone(),
            file: format!("{prefix}/{}.f32", e.name),
        })
        .collect()
}

/// Parameters named in `infos`, in the model's own order.
fn load_into(dir: &Path, infos: &[ArrayInfo], layout: &ParamStore) -> Result<Vec<Vec<f64>>, CheckpointError> {
    if infos.len() != layout.len() {
        return Err(CheckpointError::Layout);
    }
    infos
        .iter()
        .zip(layout.entries())
        .map(|(info, e)| {
            if info.name != e.name || info.shape != e.shape {
                return Err(CheckpointError::Layout);
            }
            read_array(dir, info)
        })
        .collect()
}

impl Checkpoint {
    pub fn new(model: Model) -> Checkpoint {
        Checkpoint {
            model,
            epoch: 0,
            adam: None,
            train: None,
        }
    }

    pub fn manifest(&self) -> Manifest {
        let p = &self.model.params;
        Manifest {
            format: FORMAT_VERSION,
            variant: self.model.cfg.variant.name().into(),
            model: self.model.cfg.clone(),
            epoch: self.epoch,
            params: infos(p, "params"),
            adam: self.adam.as_ref().map(|a| AdamInfo {
                step: a.step,
                m: infos(p, "adam_m"),
                v: infos(p, "adam_v"),
            }),
            train: self.train.clone(),
        }
    }

    /// Writes into `dir`, creating it and replacing any earlier checkpoint
    /// there.
    pub fn save(&self, dir: &Path) -> Result<Manifest, CheckpointError> {
        let man = self.manifest();
        for sub in ["params", "adam_m", "adam_v"] {
            let d = dir.join(sub);
            // arrays from an earlier save must not outlive it
            if d.exists() {
                fs::remove_dir_all(&d).map_err(io_err(&d))?;
            }
            if sub == "params" || self.adam.is_some() {
                fs::create_dir_all(&d).map_err(io_err(&d))?;
            }
        }
        let p = &self.model.params;
        for (id, info) in man.params.iter().enumerate() {
            write_array(dir, &info.file, p.data(id))?;
        }
        if let (Some(a), Some(ai)) = (&self.adam, &man.adam) {
            for (id, (mi, vi)) in ai.m.iter().zip(&ai.v).enumerate() {
                write_array(dir, &mi.file, &a.m[id])?;
                write_array(dir, &vi.file, &a.v[id])?;
            }
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&man)?).map_err(io_err(&path))?;
        Ok(man)
    }

    pub fn read_manifest(dir: &Path) -> Result<Manifest, CheckpointError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let man: Manifest = serde_json::from_str(&text)?;
        if man.format != FORMAT_VERSION {
            return Err(CheckpointError::Version(man.format));
        }
        Ok(man)
    }

    /// Rebuilds the model from its configuration, then overwrites every
    /// array; the layout must match name for name.
    pub fn load(dir: &Path) -> Result<Checkpoint, CheckpointError> {
        let man = Checkpoint::read_manifest(dir)?;
        let mut model = Model::new(man.model.clone(), 0)?;
        for (id, data) in load_into(dir, &man.params, &model.params)?.into_iter().enumerate() {
            model.params.data_mut(id).copy_from_slice(&data);
        }
        let adam = match &man.adam {
            Some(ai) => Some(Adam {
                step: ai.step,
                m: load_into(dir, &ai.m, &model.params)?,
                v: load_into(dir, &ai.v, &model.params)?,
            }),
            None => None,
        };
        Ok(Checkpoint {
            model,
            epoch: man.epoch,
            adam,
            train: man.train,
        })
    }
}
