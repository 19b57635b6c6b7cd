//! Checkpoint files: a safetensors container whose header metadata carries a
//! format tag, a version number and a JSON description of the run.

use std::collections::HashMap;
use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::{build_model, ModelConfig, ModelHandle};
use crate::dataset::PreprocessConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "radscan-checkpoint";
const KEY_FORMAT: &str = "format";
const KEY_VERSION: &str = "version";
const KEY_META: &str = "meta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub epoch: usize,
    /// Name of the selection metric (`kappa`, `loss`), if any.
    pub metric_name: Option<String>,
    pub best_metric: Option<f64>,
    pub preprocess: PreprocessConfig,
}

impl CheckpointMeta {
    pub fn new(config: ModelConfig, preprocess: PreprocessConfig) -> Self {
        CheckpointMeta {
            config,
            epoch: 0,
            metric_name: None,
            best_metric: None,
            preprocess,
        }
    }
}

pub fn save_checkpoint(model: &ModelHandle, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    if meta.config.backbone != model.backbone() {
        return Err(Error::Checkpoint(format!(
            "metadata describes {}, model is {}",
            meta.config.backbone,
            model.backbone()
        )));
    }
    let info = HashMap::from([
        (KEY_FORMAT.to_string(), FORMAT_TAG.to_string()),
        (KEY_VERSION.to_string(), CHECKPOINT_VERSION.to_string()),
        (KEY_META.to_string(), serde_json::to_string(meta)?),
    ]);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // write then rename, so a crash never leaves a half-written best checkpoint
    let tmp = path.with_extension("tmp");
    let tensors = model.named_tensors();
    safetensors::serialize_to_file(tensors.iter().map(|(n, t)| (n.as_str(), t)), Some(info), &tmp)
        .map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })
}

fn parse_meta(bytes: &[u8], path: &Path) -> Result<CheckpointMeta> {
    let (_, header) = safetensors::SafeTensors::read_metadata(bytes)
        .map_err(|e| Error::Checkpoint(format!("{} is not a checkpoint: {e}", path.display())))?;
    let info = header
        .metadata()
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("{} has no metadata", path.display())))?;
    if info.get(KEY_FORMAT).map(String::as_str) != Some(FORMAT_TAG) {
        return Err(Error::Checkpoint(format!("{} is not a radscan checkpoint", path.display())));
    }
    let version: u32 = info
        .get(KEY_VERSION)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint("missing checkpoint version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let meta = info
        .get(KEY_META)
        .ok_or_else(|| Error::Checkpoint("missing run metadata".into()))?;
    Ok(serde_json::from_str(meta)?)
}

pub fn read_checkpoint_meta(path: &Path) -> Result<CheckpointMeta> {
    parse_meta(&read_bytes(path)?, path)
}

/// Build the model described by the checkpoint and load its weights.
pub fn load_checkpoint(path: &Path) -> Result<(ModelHandle, CheckpointMeta)> {
    let bytes = read_bytes(path)?;
    let meta = parse_meta(&bytes, path)?;
    // weights come from the file, never from the ImageNet directory
    let config = ModelConfig {
        pretrained: false,
        ..meta.config.clone()
    };
    let model = build_model(&config)?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)
        .map_err(|e| Error::Checkpoint(format!("corrupt tensor data in {}: {e}", path.display())))?;
    model.assign(&tensors, |_| true)?;
    Ok((ModelHandle { config: meta.config.clone(), ..model }, meta))
}

/// Load weights into an existing model; the checkpoint must describe the same backbone.
pub fn load_checkpoint_into(model: &ModelHandle, path: &Path) -> Result<CheckpointMeta> {
    let bytes = read_bytes(path)?;
    let meta = parse_meta(&bytes, path)?;
    if !meta.config.same_architecture(model.config()) {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} weights, model is {}",
            meta.config.backbone,
            model.backbone()
        )));
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)
        .map_err(|e| Error::Checkpoint(format!("corrupt tensor data in {}: {e}", path.display())))?;
    model.assign(&tensors, |_| true)?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelzoo::Backbone;

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path).unwrap_err(), Error::Checkpoint(_)));
    }

    #[test]
    fn foreign_safetensors_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        let t = candle_core::Tensor::zeros(3, candle_core::DType::F32, &Device::Cpu).unwrap();
        candle_core::safetensors::save(&HashMap::from([("a".to_string(), t)]), &path).unwrap();
        assert!(matches!(read_checkpoint_meta(&path).unwrap_err(), Error::Checkpoint(_)));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        let meta = CheckpointMeta::new(ModelConfig::new(Backbone::Vgg11Bn), PreprocessConfig::default());
        let info = HashMap::from([
            (KEY_FORMAT.to_string(), FORMAT_TAG.to_string()),
            (KEY_VERSION.to_string(), "99".to_string()),
            (KEY_META.to_string(), serde_json::to_string(&meta).unwrap()),
        ]);
        let t = candle_core::Tensor::zeros(1, candle_core::DType::F32, &Device::Cpu).unwrap();
        safetensors::serialize_to_file([("a", &t)], Some(info), &path).unwrap();
        match read_checkpoint_meta(&path).unwrap_err() {
            Error::Checkpoint(msg) => assert!(msg.contains("version 99")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
