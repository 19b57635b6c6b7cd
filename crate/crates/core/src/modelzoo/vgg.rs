use candle_core::Tensor;

use super::layers::{BatchNorm, Conv2d, ConvSpec, Scope, TResult};
use super::Network;

const BN_EPS: f64 = 1e-5;

/// Channel plan; `0` marks a 2×2 max pool.
pub(crate) const VGG11: &[usize] = &[64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0];
pub(crate) const VGG13: &[usize] = &[64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0];
pub(crate) const VGG16: &[usize] = &[
    64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0,
];
pub(crate) const VGG19: &[usize] = &[
    64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0,
];

enum Layer {
    Conv(Conv2d, Option<BatchNorm>),
    Pool,
}

/// VGG convolutional trunk. The trailing max pool is dropped so the
/// classifier (and the activation map) sees the last convolution's output
/// directly.
pub(crate) struct Vgg {
    layers: Vec<Layer>,
}

impl Vgg {
    pub fn new(root: &Scope, plan: &[usize], batch_norm: bool) -> TResult<Self> {
        let f = root.pp("features");
        let mut layers = Vec::new();
        let mut index = 0;
        let mut c_in = 3;
        let plan = match plan.split_last() {
            Some((0, head)) => head,
            _ => plan,
        };
        for &c in plan {
            if c == 0 {
                layers.push(Layer::Pool);
                index += 1;
                continue;
            }
            let conv = Conv2d::new(&f.pp(index), ConvSpec::new(c_in, c, 3).pad(1).bias())?;
            let bn = if batch_norm {
                Some(BatchNorm::new(&f.pp(index + 1), c, BN_EPS)?)
            } else {
                None
            };
            // conv, [bn], relu each occupy one slot in the reference layout
            index += if batch_norm { 3 } else { 2 };
            layers.push(Layer::Conv(conv, bn));
            c_in = c;
        }
        Ok(Vgg { layers })
    }
}

impl Network for Vgg {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let mut x = x.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(conv, bn) => {
                    let h = conv.forward(&x)?;
                    let h = match bn {
                        Some(bn) => bn.forward(&h, train)?,
                        None => h,
                    };
                    h.relu()?
                }
                Layer::Pool => x.max_pool2d(2)?,
            };
        }
        Ok(x)
    }

    fn out_channels(&self) -> usize {
        512
    }
}
