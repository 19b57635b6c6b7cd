//! Backbone zoo behind a single binary-classifier contract.
//!
//! Every model is `backbone → global average pool → linear(C, 1) → sigmoid`.
//! With that head the classifier weights index the same channels as the
//! last convolutional feature maps, which is what activation mapping needs.
//!
//! Parameter names follow the torchvision state-dict layout, so ImageNet
//! weights exported from torchvision to safetensors load without renaming.

mod checkpoint;
mod densenet;
mod inception;
mod layers;
mod mobilenet;
mod resnet;
mod vgg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::{DType, Device, Tensor, Var};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, load_checkpoint_into, read_checkpoint_meta, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};

use crate::dataset::ImageTensor;
use crate::error::{Error, Result};
use layers::{Init, Param, ParamBuilder, ParamKind, TResult};

/// Environment variable naming the directory that holds `<backbone>.safetensors` ImageNet weights.
pub const WEIGHTS_DIR_ENV: &str = "RADSCAN_WEIGHTS_DIR";

/// Half-width of the uniform distribution used for fresh head weights.
pub const HEAD_INIT_RANGE: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Densenet121,
    Densenet161,
    Densenet169,
    Densenet201,
    InceptionV3,
    MobilenetV2,
    Resnet34,
    Resnet50,
    Resnet101,
    Resnet152,
    Resnext50,
    Resnext101,
    Vgg16,
    Vgg19,
    Vgg11Bn,
    Vgg13Bn,
    Vgg16Bn,
    Vgg19Bn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Densenet,
    Inception,
    Mobilenet,
    Resnet,
    Resnext,
    Vgg,
}

/// A row of the backbone catalogue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackboneInfo {
    pub backbone: Backbone,
    pub id: &'static str,
    pub display_name: &'static str,
    pub family: Family,
    /// Published size of the reference ImageNet classifier, in millions.
    pub nominal_params_millions: f64,
}

impl Backbone {
    /// Catalogue order: grouped by family, as in the comparison tables.
    pub const ALL: [Backbone; 18] = [
        Backbone::Densenet121,
        Backbone::Densenet161,
        Backbone::Densenet169,
        Backbone::Densenet201,
        Backbone::InceptionV3,
        Backbone::MobilenetV2,
        Backbone::Resnet34,
        Backbone::Resnet50,
        Backbone::Resnet101,
        Backbone::Resnet152,
        Backbone::Resnext50,
        Backbone::Resnext101,
        Backbone::Vgg16,
        Backbone::Vgg19,
        Backbone::Vgg11Bn,
        Backbone::Vgg13Bn,
        Backbone::Vgg16Bn,
        Backbone::Vgg19Bn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Backbone::Densenet121 => "densenet121",
            Backbone::Densenet161 => "densenet161",
            Backbone::Densenet169 => "densenet169",
            Backbone::Densenet201 => "densenet201",
            Backbone::InceptionV3 => "inception_v3",
            Backbone::MobilenetV2 => "mobilenet_v2",
            Backbone::Resnet34 => "resnet34",
            Backbone::Resnet50 => "resnet50",
            Backbone::Resnet101 => "resnet101",
            Backbone::Resnet152 => "resnet152",
            Backbone::Resnext50 => "resnext50",
            Backbone::Resnext101 => "resnext101",
            Backbone::Vgg16 => "vgg16",
            Backbone::Vgg19 => "vgg19",
            Backbone::Vgg11Bn => "vgg11_bn",
            Backbone::Vgg13Bn => "vgg13_bn",
            Backbone::Vgg16Bn => "vgg16_bn",
            Backbone::Vgg19Bn => "vgg19_bn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Backbone::Densenet121 => "DenseNet 121",
            Backbone::Densenet161 => "DenseNet 161",
            Backbone::Densenet169 => "DenseNet 169",
            Backbone::Densenet201 => "DenseNet 201",
            Backbone::InceptionV3 => "Inception V3",
            Backbone::MobilenetV2 => "MobileNet V2",
            Backbone::Resnet34 => "ResNet 34",
            Backbone::Resnet50 => "ResNet 50",
            Backbone::Resnet101 => "ResNet 101",
            Backbone::Resnet152 => "ResNet 152",
            Backbone::Resnext50 => "ResNeXt 50",
            Backbone::Resnext101 => "ResNeXt 101",
            Backbone::Vgg16 => "VGG 16",
            Backbone::Vgg19 => "VGG 19",
            Backbone::Vgg11Bn => "VGG 11 BN",
            Backbone::Vgg13Bn => "VGG 13 BN",
            Backbone::Vgg16Bn => "VGG 16 BN",
            Backbone::Vgg19Bn => "VGG 19 BN",
        }
    }

    pub fn family(self) -> Family {
        use Backbone::*;
        match self {
            Densenet121 | Densenet161 | Densenet169 | Densenet201 => Family::Densenet,
            InceptionV3 => Family::Inception,
            MobilenetV2 => Family::Mobilenet,
            Resnet34 | Resnet50 | Resnet101 | Resnet152 => Family::Resnet,
            Resnext50 | Resnext101 => Family::Resnext,
            Vgg16 | Vgg19 | Vgg11Bn | Vgg13Bn | Vgg16Bn | Vgg19Bn => Family::Vgg,
        }
    }

    /// Reported parameter count of the stock ImageNet model, in millions.
    pub fn nominal_params_millions(self) -> f64 {
        use Backbone::*;
        match self {
            Densenet121 => 8.0,
            Densenet161 => 30.0,
            Densenet169 => 14.0,
            Densenet201 => 20.0,
            InceptionV3 => 25.0,
            MobilenetV2 => 3.4,
            Resnet34 => 24.3,
            Resnet50 => 25.6,
            Resnet101 => 44.5,
            Resnet152 => 60.2,
            Resnext50 => 25.6,
            Resnext101 => 44.5,
            Vgg16 => 138.0,
            Vgg19 => 144.0,
            Vgg11Bn => 133.0,
            Vgg13Bn => 133.0,
            Vgg16Bn => 138.0,
            Vgg19Bn => 144.0,
        }
    }

    /// Parameters in the stock ImageNet classifier that the binary head replaces.
    fn reference_classifier_params(self, channels: usize) -> u64 {
        let classes = 1000u64;
        match self.family() {
            Family::Vgg => {
                let fc1 = 512 * 7 * 7 * 4096 + 4096;
                let fc2 = 4096 * 4096 + 4096;
                fc1 + fc2 + 4096 * classes + classes
            }
            _ => channels as u64 * classes + classes,
        }
    }

    pub fn info(self) -> BackboneInfo {
        BackboneInfo {
            backbone: self,
            id: self.id(),
            display_name: self.display_name(),
            family: self.family(),
            nominal_params_millions: self.nominal_params_millions(),
        }
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Backbone::ALL
            .into_iter()
            .find(|b| {
                let id: String = b.id().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                id == key
            })
            .ok_or_else(|| Error::Config(format!("unknown backbone `{s}`")))
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// The full catalogue, in table order.
pub fn list_backbones() -> Vec<BackboneInfo> {
    Backbone::ALL.into_iter().map(Backbone::info).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub pretrained: bool,
    /// Seed for every randomly initialised parameter.
    #[serde(default)]
    pub seed: u64,
    /// Where to find `<backbone>.safetensors`; falls back to `$RADSCAN_WEIGHTS_DIR`, then `./weights`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_dir: Option<PathBuf>,
}

impl ModelConfig {
    pub fn new(backbone: Backbone) -> Self {
        ModelConfig {
            backbone,
            pretrained: false,
            seed: 0,
            weights_dir: None,
        }
    }

    pub fn pretrained(mut self, pretrained: bool) -> Self {
        self.pretrained = pretrained;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn weights_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.weights_dir = Some(dir.into());
        self
    }

    pub fn weights_path(&self) -> PathBuf {
        let dir = self
            .weights_dir
            .clone()
            .or_else(|| std::env::var_os(WEIGHTS_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("weights"));
        dir.join(format!("{}.safetensors", self.backbone.id()))
    }

    /// Identity that matters for weight compatibility.
    fn same_architecture(&self, other: &ModelConfig) -> bool {
        self.backbone == other.backbone
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Abnormality probability per input image.
    pub probabilities: Vec<f32>,
    /// Last convolutional feature maps per image, `channels × h × w`.
    pub features: Option<Vec<Array3<f32>>>,
}

/// Anything that can score preprocessed radiographs.
///
/// [`ModelHandle`] is the real implementation; tests and tools may supply
/// their own (fixed-output stubs, constructed oracles).
pub trait Classifier: Send + Sync {
    fn name(&self) -> String;

    fn predict(&self, batch: &[ImageTensor], capture_features: bool) -> Result<Prediction>;

    /// One weight per feature map, or `None` when the model cannot produce activation maps.
    fn head_weights(&self) -> Option<Vec<f32>>;

    /// Stable digest of the weights; keys caches of derived artefacts.
    fn fingerprint(&self) -> String;
}

pub(crate) trait Network: Send + Sync {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor>;

    fn out_channels(&self) -> usize;

    /// Smallest square input that still yields a non-empty feature map.
    fn min_input(&self) -> usize {
        32
    }
}

/// A built classifier with inspectable head weights and feature maps.
pub struct ModelHandle {
    config: ModelConfig,
    network: Box<dyn Network>,
    head_weight: Tensor,
    head_bias: Tensor,
    params: BTreeMap<String, Param>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("config", &self.config)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

fn construct(backbone: Backbone, builder: &ParamBuilder) -> TResult<Box<dyn Network>> {
    use densenet::{DenseNet, DenseNetSpec};
    use resnet::{BlockKind, ResNet, ResNetSpec};
    let root = builder.root();
    let dense = |growth, blocks, init_features| DenseNetSpec {
        growth,
        blocks,
        init_features,
    };
    let res = |kind, layers, groups, width_per_group| ResNetSpec {
        kind,
        layers,
        groups,
        width_per_group,
    };
    Ok(match backbone {
        Backbone::Densenet121 => Box::new(DenseNet::new(&root, &dense(32, [6, 12, 24, 16], 64))?),
        Backbone::Densenet161 => Box::new(DenseNet::new(&root, &dense(48, [6, 12, 36, 24], 96))?),
        Backbone::Densenet169 => Box::new(DenseNet::new(&root, &dense(32, [6, 12, 32, 32], 64))?),
        Backbone::Densenet201 => Box::new(DenseNet::new(&root, &dense(32, [6, 12, 48, 32], 64))?),
        Backbone::InceptionV3 => Box::new(inception::InceptionV3::new(&root)?),
        Backbone::MobilenetV2 => Box::new(mobilenet::MobileNetV2::new(&root)?),
        Backbone::Resnet34 => Box::new(ResNet::new(&root, &res(BlockKind::Basic, [3, 4, 6, 3], 1, 64))?),
        Backbone::Resnet50 => Box::new(ResNet::new(&root, &res(BlockKind::Bottleneck, [3, 4, 6, 3], 1, 64))?),
        Backbone::Resnet101 => Box::new(ResNet::new(&root, &res(BlockKind::Bottleneck, [3, 4, 23, 3], 1, 64))?),
        Backbone::Resnet152 => Box::new(ResNet::new(&root, &res(BlockKind::Bottleneck, [3, 8, 36, 3], 1, 64))?),
        Backbone::Resnext50 => Box::new(ResNet::new(&root, &res(BlockKind::Bottleneck, [3, 4, 6, 3], 32, 4))?),
        Backbone::Resnext101 => Box::new(ResNet::new(&root, &res(BlockKind::Bottleneck, [3, 4, 23, 3], 32, 4))?),
        Backbone::Vgg16 => Box::new(vgg::Vgg::new(&root, vgg::VGG16, false)?),
        Backbone::Vgg19 => Box::new(vgg::Vgg::new(&root, vgg::VGG19, false)?),
        Backbone::Vgg11Bn => Box::new(vgg::Vgg::new(&root, vgg::VGG11, true)?),
        Backbone::Vgg13Bn => Box::new(vgg::Vgg::new(&root, vgg::VGG13, true)?),
        Backbone::Vgg16Bn => Box::new(vgg::Vgg::new(&root, vgg::VGG16, true)?),
        Backbone::Vgg19Bn => Box::new(vgg::Vgg::new(&root, vgg::VGG19, true)?),
    })
}

const HEAD_WEIGHT: &str = "head.weight";
const HEAD_BIAS: &str = "head.bias";

fn build(config: &ModelConfig, shapes_only: bool) -> Result<ModelHandle> {
    let builder = ParamBuilder::new(ChaCha8Rng::seed_from_u64(config.seed), shapes_only);
    let network = construct(config.backbone, &builder)?;
    let channels = network.out_channels();
    let head = builder.root().pp("head");
    let head_weight = head.trainable("weight", &[1, channels], Init::Uniform(-HEAD_INIT_RANGE, HEAD_INIT_RANGE))?;
    let head_bias = head.trainable("bias", &[1], Init::Const(0.0))?;
    Ok(ModelHandle {
        config: config.clone(),
        network,
        head_weight,
        head_bias,
        params: builder.into_params(),
    })
}

/// Build a classifier. With `pretrained`, every backbone tensor is loaded
/// from the ImageNet weights file and only the head starts fresh; a missing
/// file is an error.
pub fn build_model(config: &ModelConfig) -> Result<ModelHandle> {
    let model = build(config, false)?;
    if config.pretrained {
        let path = config.weights_path();
        if !path.is_file() {
            return Err(Error::PretrainedUnavailable {
                backbone: config.backbone.id().to_string(),
                path,
            });
        }
        model.load_backbone_weights(&path)?;
    }
    Ok(model)
}

/// Parameter counts without drawing random weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParameterSummary {
    pub backbone: u64,
    pub head: u64,
    /// Backbone plus the stock ImageNet classifier.
    pub reference: u64,
    pub feature_channels: usize,
}

pub fn parameter_summary(backbone: Backbone) -> Result<ParameterSummary> {
    let model = build(&ModelConfig::new(backbone), true)?;
    let head = (model.feature_channels() + 1) as u64;
    let backbone_params = model.parameter_count() - head;
    Ok(ParameterSummary {
        backbone: backbone_params,
        head,
        reference: backbone_params + backbone.reference_classifier_params(model.feature_channels()),
        feature_channels: model.feature_channels(),
    })
}

impl ModelHandle {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> Backbone {
        self.config.backbone
    }

    /// Number of last-layer feature maps (and head weights).
    pub fn feature_channels(&self) -> usize {
        self.network.out_channels()
    }

    pub fn min_input(&self) -> usize {
        self.network.min_input()
    }

    /// Trainable parameters, excluding batch-norm running statistics.
    pub fn parameter_count(&self) -> u64 {
        self.params
            .values()
            .filter(|p| p.kind == ParamKind::Trainable)
            .map(|p| p.var.elem_count() as u64)
            .sum()
    }

    pub fn head_weight_vec(&self) -> Result<Vec<f32>> {
        Ok(self.head_weight.flatten_all()?.to_vec1::<f32>()?)
    }

    pub fn head_bias_value(&self) -> Result<f32> {
        Ok(self.head_bias.flatten_all()?.to_vec1::<f32>()?[0])
    }

    pub(crate) fn trainable_vars(&self) -> Vec<Var> {
        self.params
            .values()
            .filter(|p| p.kind == ParamKind::Trainable)
            .map(|p| p.var.clone())
            .collect()
    }

    /// Named tensors for serialization, in name order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|(name, p)| (name.clone(), p.var.as_tensor().clone()))
            .collect()
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        self.params.get(name).map(|p| p.var.as_tensor().clone())
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Overwrite parameters from a name → tensor map.
    ///
    /// Names failing `include` are skipped; every included parameter must be
    /// present with the same shape.
    pub(crate) fn assign(&self, tensors: &std::collections::HashMap<String, Tensor>, include: impl Fn(&str) -> bool) -> Result<()> {
        for (name, param) in &self.params {
            if !include(name) {
                continue;
            }
            let src = tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.dims() != param.var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.dims(),
                    param.var.dims()
                )));
            }
            param.var.set(&layers::to_f32(src)?)?;
        }
        Ok(())
    }

    fn load_backbone_weights(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &Device::Cpu).map_err(|e| Error::PretrainedUnavailable {
            backbone: format!("{} ({e})", self.config.backbone.id()),
            path: path.to_path_buf(),
        })?;
        self.assign(&tensors, |name| name != HEAD_WEIGHT && name != HEAD_BIAS)
    }

    /// Stack preprocessed images into an `N × 3 × H × W` tensor.
    pub fn batch_tensor(&self, batch: &[ImageTensor]) -> Result<Tensor> {
        let first = batch.first().ok_or_else(|| Error::contract("empty batch"))?;
        let (c, h, w) = first.data.dim();
        if c != 3 {
            return Err(Error::contract(format!("expected 3 channels, got {c}")));
        }
        if h < self.min_input() || w < self.min_input() {
            return Err(Error::contract(format!(
                "{} needs inputs of at least {}×{}, got {h}×{w}",
                self.config.backbone,
                self.min_input(),
                self.min_input()
            )));
        }
        let mut data = Vec::with_capacity(batch.len() * c * h * w);
        for image in batch {
            if image.data.dim() != (c, h, w) {
                return Err(Error::contract(format!(
                    "mixed input shapes in batch: {:?} vs {:?}",
                    image.data.dim(),
                    (c, h, w)
                )));
            }
            data.extend(image.data.iter().copied());
        }
        Ok(Tensor::from_vec(data, (batch.len(), c, h, w), &Device::Cpu)?)
    }

    /// Feature maps and logits for an input tensor.
    pub(crate) fn forward_tensor(&self, x: &Tensor, train: bool) -> Result<(Tensor, Tensor)> {
        let features = self.network.features(x, train)?;
        let pooled = features.mean((2, 3))?;
        let logits = pooled
            .matmul(&self.head_weight.t()?)?
            .broadcast_add(&self.head_bias)?
            .squeeze(1)?;
        Ok((features, logits))
    }

    /// Eval-mode forward pass.
    pub fn forward(&self, batch: &[ImageTensor], capture_features: bool) -> Result<Prediction> {
        let x = self.batch_tensor(batch)?;
        let (features, logits) = self.forward_tensor(&x, false)?;
        let probabilities = candle_nn::ops::sigmoid(&logits.detach())?.to_vec1::<f32>()?;
        let features = if capture_features {
            let features = features.detach();
            let (n, c, h, w) = features.dims4()?;
            let flat = features.flatten_all()?.to_vec1::<f32>()?;
            let per_image = c * h * w;
            Some(
                (0..n)
                    .map(|i| {
                        Array3::from_shape_vec((c, h, w), flat[i * per_image..(i + 1) * per_image].to_vec())
                            .expect("shape matches element count")
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Prediction {
            probabilities,
            features,
        })
    }

    /// SHA-256 over parameter names, shapes and bytes.
    pub fn weights_digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for (name, param) in &self.params {
            hasher.update(name.as_bytes());
            for d in param.var.dims() {
                hasher.update((*d as u64).to_le_bytes());
            }
            let t = param.var.as_tensor().to_dtype(DType::F32)?.flatten_all()?;
            for v in t.to_vec1::<f32>()? {
                hasher.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

impl Classifier for ModelHandle {
    fn name(&self) -> String {
        self.config.backbone.id().to_string()
    }

    fn predict(&self, batch: &[ImageTensor], capture_features: bool) -> Result<Prediction> {
        self.forward(batch, capture_features)
    }

    fn head_weights(&self) -> Option<Vec<f32>> {
        self.head_weight_vec().ok()
    }

    fn fingerprint(&self) -> String {
        self.weights_digest().unwrap_or_else(|_| "unhashable".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_has_eighteen_unique_entries() {
        let list = list_backbones();
        assert_eq!(list.len(), 18);
        let ids: std::collections::HashSet<_> = list.iter().map(|b| b.id).collect();
        assert_eq!(ids.len(), 18);
        assert!(!list.iter().any(|b| b.id == "alexnet"));
    }

    #[test]
    fn backbone_names_parse_loosely() {
        assert_eq!("DenseNet121".parse::<Backbone>().unwrap(), Backbone::Densenet121);
        assert_eq!("vgg19-bn".parse::<Backbone>().unwrap(), Backbone::Vgg19Bn);
        assert_eq!("inception_v3".parse::<Backbone>().unwrap(), Backbone::InceptionV3);
        assert!("alexnet".parse::<Backbone>().is_err());
    }

    #[test]
    fn missing_pretrained_weights_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::new(Backbone::Resnet34).pretrained(true).weights_dir(dir.path());
        match build_model(&cfg).unwrap_err() {
            Error::PretrainedUnavailable { backbone, path } => {
                assert_eq!(backbone, "resnet34");
                assert!(path.ends_with("resnet34.safetensors"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn head_starts_small_with_zero_bias() {
        let m = build_model(&ModelConfig::new(Backbone::Vgg11Bn)).unwrap();
        let w = m.head_weight_vec().unwrap();
        assert_eq!(w.len(), 512);
        assert!(w.iter().all(|v| v.abs() <= HEAD_INIT_RANGE));
        assert!(w.iter().any(|v| *v != 0.0));
        assert_eq!(m.head_bias_value().unwrap(), 0.0);
    }
}
