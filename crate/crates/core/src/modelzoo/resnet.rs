use candle_core::Tensor;

use super::layers::{max_pool, BatchNorm, Conv2d, ConvSpec, Scope, TResult};
use super::Network;

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) enum BlockKind {
    Basic,
    Bottleneck,
}

pub(crate) struct ResNetSpec {
    pub kind: BlockKind,
    pub layers: [usize; 4],
    pub groups: usize,
    pub width_per_group: usize,
}

struct Downsample {
    conv: Conv2d,
    bn: BatchNorm,
}

struct Block {
    convs: Vec<(Conv2d, BatchNorm)>,
    downsample: Option<Downsample>,
}

impl Block {
    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let mut h = x.clone();
        let last = self.convs.len() - 1;
        for (i, (conv, bn)) in self.convs.iter().enumerate() {
            h = bn.forward(&conv.forward(&h)?, train)?;
            if i != last {
                h = h.relu()?;
            }
        }
        let identity = match &self.downsample {
            Some(d) => d.bn.forward(&d.conv.forward(x)?, train)?,
            None => x.clone(),
        };
        (h + identity)?.relu()
    }
}

pub(crate) struct ResNet {
    conv1: Conv2d,
    bn1: BatchNorm,
    blocks: Vec<Block>,
    channels: usize,
}

impl ResNet {
    pub fn new(root: &Scope, spec: &ResNetSpec) -> TResult<Self> {
        let conv1 = Conv2d::new(&root.pp("conv1"), ConvSpec::new(3, 64, 7).stride(2).pad(3))?;
        let bn1 = BatchNorm::new(&root.pp("bn1"), 64, BN_EPS)?;
        let expansion = match spec.kind {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        };
        let mut c_in = 64;
        let mut blocks = Vec::new();
        for (stage, &count) in spec.layers.iter().enumerate() {
            let planes = 64 << stage;
            let layer = root.pp(format!("layer{}", stage + 1));
            for b in 0..count {
                let s = layer.pp(b);
                let stride = if b == 0 && stage > 0 { 2 } else { 1 };
                let c_out = planes * expansion;
                let convs = match spec.kind {
                    BlockKind::Basic => vec![
                        (
                            Conv2d::new(&s.pp("conv1"), ConvSpec::new(c_in, planes, 3).stride(stride).pad(1))?,
                            BatchNorm::new(&s.pp("bn1"), planes, BN_EPS)?,
                        ),
                        (
                            Conv2d::new(&s.pp("conv2"), ConvSpec::new(planes, planes, 3).pad(1))?,
                            BatchNorm::new(&s.pp("bn2"), planes, BN_EPS)?,
                        ),
                    ],
                    BlockKind::Bottleneck => {
                        let width = planes * spec.width_per_group / 64 * spec.groups;
                        vec![
                            (
                                Conv2d::new(&s.pp("conv1"), ConvSpec::new(c_in, width, 1))?,
                                BatchNorm::new(&s.pp("bn1"), width, BN_EPS)?,
                            ),
                            (
                                Conv2d::new(
                                    &s.pp("conv2"),
                                    ConvSpec::new(width, width, 3).stride(stride).pad(1).groups(spec.groups),
                                )?,
                                BatchNorm::new(&s.pp("bn2"), width, BN_EPS)?,
                            ),
                            (
                                Conv2d::new(&s.pp("conv3"), ConvSpec::new(width, c_out, 1))?,
                                BatchNorm::new(&s.pp("bn3"), c_out, BN_EPS)?,
                            ),
                        ]
                    }
                };
                let downsample = if stride != 1 || c_in != c_out {
                    let d = s.pp("downsample");
                    Some(Downsample {
                        conv: Conv2d::new(&d.pp(0), ConvSpec::new(c_in, c_out, 1).stride(stride))?,
                        bn: BatchNorm::new(&d.pp(1), c_out, BN_EPS)?,
                    })
                } else {
                    None
                };
                blocks.push(Block { convs, downsample });
                c_in = c_out;
            }
        }
        Ok(ResNet {
            conv1,
            bn1,
            blocks,
            channels: c_in,
        })
    }
}

impl Network for ResNet {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let x = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let mut x = max_pool(&x, 3, 2, 1)?;
        for block in &self.blocks {
            x = block.forward(&x, train)?;
        }
        Ok(x)
    }

    fn out_channels(&self) -> usize {
        self.channels
    }
}
