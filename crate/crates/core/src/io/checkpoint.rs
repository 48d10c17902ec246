//! Model checkpoints: an architecture descriptor (`arch.json`) next to the
//! flat parameter vector in the tensor container format (`params.f32`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Model, ModelConfig};

use super::tensor::{read_tensor, write_tensor, TensorContainer};

pub const ARCH_FILE: &str = "arch.json";
pub const PARAMS_FILE: &str = "params.f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub format: String,
    pub in_channels: usize,
    pub n_classes: usize,
    pub widths: [usize; 3],
    pub param_count: usize,
}

impl ArchDescriptor {
    pub fn of(model: &Model<f32>) -> Self {
        ArchDescriptor {
            format: "freqlens-checkpoint-v1".into(),
            in_channels: model.config.in_channels,
            n_classes: model.config.n_classes,
            widths: model.config.widths,
            param_count: model.parameter_count(),
        }
    }
}

pub fn save_checkpoint(dir: &Path, model: &Model<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let arch_path = dir.join(ARCH_FILE);
    let json = serde_json::to_string_pretty(&ArchDescriptor::of(model)).map_err(|e| Error::Json {
        path: arch_path.clone(),
        source: e,
    })?;
    fs::write(&arch_path, json).map_err(|e| Error::io(&arch_path, e))?;
    let tensor = TensorContainer::new(1, 1, model.parameter_count() as u32, model.params.clone());
    write_tensor(&dir.join(PARAMS_FILE), &tensor)
}

pub fn load_checkpoint(dir: &Path) -> Result<Model<f32>> {
    let arch_path = dir.join(ARCH_FILE);
    let bytes = fs::read(&arch_path).map_err(|e| Error::io(&arch_path, e))?;
    let arch: ArchDescriptor = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        path: arch_path.clone(),
        source: e,
    })?;
    let config = ModelConfig {
        in_channels: arch.in_channels,
        n_classes: arch.n_classes,
        widths: arch.widths,
    };
    let mut model: Model<f32> = Model::init(config, 0);
    if model.parameter_count() != arch.param_count {
        return Err(Error::BadManifest {
            path: arch_path,
            reason: format!(
                "descriptor declares {} parameters but the architecture has {}",
                arch.param_count,
                model.parameter_count()
            ),
        });
    }
    let params_path = dir.join(PARAMS_FILE);
    let tensor = read_tensor(&params_path)?;
    if tensor.len() != model.parameter_count() {
        return Err(Error::BadManifest {
            path: params_path,
            reason: format!(
                "parameter tensor holds {} values, expected {}",
                tensor.len(),
                model.parameter_count()
            ),
        });
    }
    model.params = tensor.data;
    Ok(model)
}
