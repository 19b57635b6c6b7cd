use candle_core::Tensor;

use super::layers::{relu6, BatchNorm, Conv2d, ConvSpec, Scope, TResult};
use super::Network;

const BN_EPS: f64 = 1e-5;
const LAST_CHANNELS: usize = 1280;
/// (expansion, channels, repeats, first stride)
const SETTINGS: [(usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
];

struct ConvBnAct {
    conv: Conv2d,
    bn: BatchNorm,
}

impl ConvBnAct {
    fn new(s: &Scope, spec: ConvSpec) -> TResult<Self> {
        Ok(ConvBnAct {
            conv: Conv2d::new(&s.pp(0), spec)?,
            bn: BatchNorm::new(&s.pp(1), spec.c_out, BN_EPS)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        relu6(&self.bn.forward(&self.conv.forward(x)?, train)?)
    }
}

struct InvertedResidual {
    expand: Option<ConvBnAct>,
    depthwise: ConvBnAct,
    project: Conv2d,
    project_bn: BatchNorm,
    residual: bool,
}

impl InvertedResidual {
    fn new(s: &Scope, c_in: usize, c_out: usize, stride: usize, expansion: usize) -> TResult<Self> {
        let s = s.pp("conv");
        let hidden = c_in * expansion;
        let mut slot = 0;
        let expand = if expansion != 1 {
            slot += 1;
            Some(ConvBnAct::new(&s.pp(0), ConvSpec::new(c_in, hidden, 1))?)
        } else {
            None
        };
        let depthwise = ConvBnAct::new(
            &s.pp(slot),
            ConvSpec::new(hidden, hidden, 3).stride(stride).pad(1).groups(hidden),
        )?;
        let project = Conv2d::new(&s.pp(slot + 1), ConvSpec::new(hidden, c_out, 1))?;
        let project_bn = BatchNorm::new(&s.pp(slot + 2), c_out, BN_EPS)?;
        Ok(InvertedResidual {
            expand,
            depthwise,
            project,
            project_bn,
            residual: stride == 1 && c_in == c_out,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let h = match &self.expand {
            Some(e) => e.forward(x, train)?,
            None => x.clone(),
        };
        let h = self.depthwise.forward(&h, train)?;
        let h = self.project_bn.forward(&self.project.forward(&h)?, train)?;
        if self.residual {
            h + x
        } else {
            Ok(h)
        }
    }
}

pub(crate) struct MobileNetV2 {
    stem: ConvBnAct,
    blocks: Vec<InvertedResidual>,
    last: ConvBnAct,
}

impl MobileNetV2 {
    pub fn new(root: &Scope) -> TResult<Self> {
        let f = root.pp("features");
        let stem = ConvBnAct::new(&f.pp(0), ConvSpec::new(3, 32, 3).stride(2).pad(1))?;
        let mut c_in = 32;
        let mut blocks = Vec::new();
        let mut index = 1;
        for (t, c, n, s) in SETTINGS {
            for i in 0..n {
                let stride = if i == 0 { s } else { 1 };
                blocks.push(InvertedResidual::new(&f.pp(index), c_in, c, stride, t)?);
                c_in = c;
                index += 1;
            }
        }
        let last = ConvBnAct::new(&f.pp(index), ConvSpec::new(c_in, LAST_CHANNELS, 1))?;
        Ok(MobileNetV2 { stem, blocks, last })
    }
}

impl Network for MobileNetV2 {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let mut x = self.stem.forward(x, train)?;
        for block in &self.blocks {
            x = block.forward(&x, train)?;
        }
        self.last.forward(&x, train)
    }

    fn out_channels(&self) -> usize {
        LAST_CHANNELS
    }
}
