use candle_core::Tensor;

use super::layers::{max_pool, BatchNorm, Conv2d, ConvSpec, Scope, TResult};
use super::Network;

const BN_EPS: f64 = 1e-5;
const BOTTLENECK: usize = 4;

pub(crate) struct DenseNetSpec {
    pub growth: usize,
    pub blocks: [usize; 4],
    pub init_features: usize,
}

struct DenseLayer {
    norm1: BatchNorm,
    conv1: Conv2d,
    norm2: BatchNorm,
    conv2: Conv2d,
}

impl DenseLayer {
    fn new(s: &Scope, c_in: usize, growth: usize) -> TResult<Self> {
        let mid = BOTTLENECK * growth;
        Ok(DenseLayer {
            norm1: BatchNorm::new(&s.pp("norm1"), c_in, BN_EPS)?,
            conv1: Conv2d::new(&s.pp("conv1"), ConvSpec::new(c_in, mid, 1))?,
            norm2: BatchNorm::new(&s.pp("norm2"), mid, BN_EPS)?,
            conv2: Conv2d::new(&s.pp("conv2"), ConvSpec::new(mid, growth, 3).pad(1))?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x, train)?.relu()?)?;
        self.conv2.forward(&self.norm2.forward(&h, train)?.relu()?)
    }
}

struct Transition {
    norm: BatchNorm,
    conv: Conv2d,
}

enum Stage {
    Block(Vec<DenseLayer>),
    Transition(Transition),
}

pub(crate) struct DenseNet {
    conv0: Conv2d,
    norm0: BatchNorm,
    stages: Vec<Stage>,
    norm5: BatchNorm,
    channels: usize,
}

impl DenseNet {
    pub fn new(root: &Scope, spec: &DenseNetSpec) -> TResult<Self> {
        let f = root.pp("features");
        let conv0 = Conv2d::new(&f.pp("conv0"), ConvSpec::new(3, spec.init_features, 7).stride(2).pad(3))?;
        let norm0 = BatchNorm::new(&f.pp("norm0"), spec.init_features, BN_EPS)?;
        let mut channels = spec.init_features;
        let mut stages = Vec::new();
        for (i, &layers) in spec.blocks.iter().enumerate() {
            let block_scope = f.pp(format!("denseblock{}", i + 1));
            let mut block = Vec::with_capacity(layers);
            for j in 0..layers {
                let layer_scope = block_scope.pp(format!("denselayer{}", j + 1));
                block.push(DenseLayer::new(&layer_scope, channels + j * spec.growth, spec.growth)?);
            }
            stages.push(Stage::Block(block));
            channels += layers * spec.growth;
            if i + 1 != spec.blocks.len() {
                let t = f.pp(format!("transition{}", i + 1));
                stages.push(Stage::Transition(Transition {
                    norm: BatchNorm::new(&t.pp("norm"), channels, BN_EPS)?,
                    conv: Conv2d::new(&t.pp("conv"), ConvSpec::new(channels, channels / 2, 1))?,
                }));
                channels /= 2;
            }
        }
        let norm5 = BatchNorm::new(&f.pp("norm5"), channels, BN_EPS)?;
        Ok(DenseNet {
            conv0,
            norm0,
            stages,
            norm5,
            channels,
        })
    }
}

impl Network for DenseNet {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let x = self.norm0.forward(&self.conv0.forward(x)?, train)?.relu()?;
        let mut x = max_pool(&x, 3, 2, 1)?;
        for stage in &self.stages {
            x = match stage {
                Stage::Block(layers) => {
                    let mut features = vec![x];
                    for layer in layers {
                        let input = Tensor::cat(&features, 1)?;
                        features.push(layer.forward(&input, train)?);
                    }
                    Tensor::cat(&features, 1)?
                }
                Stage::Transition(t) => {
                    let h = t.conv.forward(&t.norm.forward(&x, train)?.relu()?)?;
                    h.avg_pool2d(2)?
                }
            };
        }
        self.norm5.forward(&x, train)?.relu()
    }

    fn out_channels(&self) -> usize {
        self.channels
    }
}
