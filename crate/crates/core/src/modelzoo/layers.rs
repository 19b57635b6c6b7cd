//! Parameter construction and the small set of layers the backbones share.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;

use candle_core::{CpuStorage, CustomOp1, DType, Device, Layout, ModuleT, Shape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub(crate) type TResult<T> = candle_core::Result<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParamKind {
    Trainable,
    /// Batch-norm running statistics: saved and loaded, never optimized.
    Buffer,
}

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub var: Var,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Const(f32),
    /// Normal with std `sqrt(2 / fan_out)`.
    KaimingFanOut(usize),
    Uniform(f32, f32),
}

/// Creates named parameters in a deterministic order from a seeded stream.
pub(crate) struct ParamBuilder {
    entries: RefCell<BTreeMap<String, Param>>,
    rng: RefCell<ChaCha8Rng>,
    /// Skip random draws; used when only shapes matter.
    shapes_only: bool,
    device: Device,
}

impl ParamBuilder {
    pub fn new(rng: ChaCha8Rng, shapes_only: bool) -> Self {
        ParamBuilder {
            entries: RefCell::new(BTreeMap::new()),
            rng: RefCell::new(rng),
            shapes_only,
            device: Device::Cpu,
        }
    }

    pub fn root(&self) -> Scope<'_> {
        Scope {
            builder: self,
            prefix: String::new(),
        }
    }

    pub fn into_params(self) -> BTreeMap<String, Param> {
        self.entries.into_inner()
    }

    fn create(&self, name: String, shape: &[usize], init: Init, kind: ParamKind) -> TResult<Tensor> {
        let numel: usize = shape.iter().product();
        let values: Vec<f32> = match init {
            _ if self.shapes_only => vec![0.0; numel],
            Init::Const(v) => vec![v; numel],
            Init::KaimingFanOut(fan_out) => {
                let std = (2.0 / fan_out as f64).sqrt();
                let mut rng = self.rng.borrow_mut();
                (0..numel)
                    .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
                    .collect()
            }
            Init::Uniform(lo, hi) => {
                let mut rng = self.rng.borrow_mut();
                (0..numel).map(|_| rng.random_range(lo..hi)).collect()
            }
        };
        let var = Var::from_vec(values, shape, &self.device)?;
        let tensor = var.as_tensor().clone();
        let previous = self.entries.borrow_mut().insert(name.clone(), Param { var, kind });
        if previous.is_some() {
            candle_core::bail!("parameter {name} defined twice");
        }
        Ok(tensor)
    }
}

#[derive(Clone)]
pub(crate) struct Scope<'a> {
    builder: &'a ParamBuilder,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn pp(&self, name: impl Display) -> Scope<'a> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Scope {
            builder: self.builder,
            prefix,
        }
    }

    fn param(&self, name: &str, shape: &[usize], init: Init, kind: ParamKind) -> TResult<Tensor> {
        self.builder.create(self.pp(name).prefix, shape, init, kind)
    }

    pub fn trainable(&self, name: &str, shape: &[usize], init: Init) -> TResult<Tensor> {
        self.param(name, shape, init, ParamKind::Trainable)
    }

    pub fn buffer(&self, name: &str, shape: &[usize], init: Init) -> TResult<Tensor> {
        self.param(name, shape, init, ParamKind::Buffer)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(c_in: usize, c_out: usize, kernel: usize) -> Self {
        ConvSpec {
            c_in,
            c_out,
            kernel: (kernel, kernel),
            stride: 1,
            padding: (0, 0),
            groups: 1,
            bias: false,
        }
    }

    pub fn rect(c_in: usize, c_out: usize, kernel: (usize, usize), padding: (usize, usize)) -> Self {
        ConvSpec {
            kernel,
            padding,
            ..ConvSpec::new(c_in, c_out, 1)
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn pad(mut self, padding: usize) -> Self {
        self.padding = (padding, padding);
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn bias(mut self) -> Self {
        self.bias = true;
        self
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    spec: ConvSpec,
}

impl Conv2d {
    pub fn new(scope: &Scope, spec: ConvSpec) -> TResult<Self> {
        let (kh, kw) = spec.kernel;
        let fan_out = spec.c_out * kh * kw;
        let weight = scope.trainable(
            "weight",
            &[spec.c_out, spec.c_in / spec.groups, kh, kw],
            Init::KaimingFanOut(fan_out),
        )?;
        let bias = if spec.bias {
            Some(scope.trainable("bias", &[spec.c_out], Init::Const(0.0))?)
        } else {
            None
        };
        Ok(Conv2d { weight, bias, spec })
    }

    pub fn forward(&self, x: &Tensor) -> TResult<Tensor> {
        let ConvSpec {
            stride,
            padding: (ph, pw),
            groups,
            ..
        } = self.spec;
        let y = if groups > 1 && groups == self.spec.c_in && groups == self.spec.c_out {
            depthwise(x, &self.weight, stride, (ph, pw))?
        } else if ph == pw {
            x.conv2d(&self.weight, ph, stride, 1, groups)?
        } else {
            x.pad_with_zeros(2, ph, ph)?
                .pad_with_zeros(3, pw, pw)?
                .conv2d(&self.weight, 0, stride, 1, groups)?
        };
        match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?),
            None => Ok(y),
        }
    }
}

/// Depthwise convolution as a sum of shifted, per-channel scaled views.
/// Much faster on CPU than one convolution per channel.
fn depthwise(x: &Tensor, weight: &Tensor, stride: usize, (ph, pw): (usize, usize)) -> TResult<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    let (_, _, kh, kw) = weight.dims4()?;
    let xp = x.pad_with_zeros(2, ph, ph)?.pad_with_zeros(3, pw, pw)?;
    let out_h = (h + 2 * ph - kh) / stride + 1;
    let out_w = (w + 2 * pw - kw) / stride + 1;
    // full-resolution extent needed before subsampling
    let span_h = (out_h - 1) * stride + 1;
    let span_w = (out_w - 1) * stride + 1;
    let mut acc: Option<Tensor> = None;
    for dy in 0..kh {
        for dx in 0..kw {
            let tap = weight.narrow(2, dy, 1)?.narrow(3, dx, 1)?.reshape((1, c, 1, 1))?;
            let view = xp.narrow(2, dy, span_h)?.narrow(3, dx, span_w)?;
            let term = view.broadcast_mul(&tap)?;
            acc = Some(match acc {
                Some(a) => (a + term)?,
                None => term,
            });
        }
    }
    let full = acc.expect("kernel has at least one tap");
    if stride == 1 {
        Ok(full)
    } else {
        subsample(&full, stride, out_h, out_w)
    }
}

/// Keep every `stride`-th row and column starting at 0.
fn subsample(x: &Tensor, stride: usize, out_h: usize, out_w: usize) -> TResult<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let x = x
        .pad_with_zeros(2, 0, out_h * stride - h)?
        .pad_with_zeros(3, 0, out_w * stride - w)?;
    x.reshape((n, c, out_h, stride, out_w, stride))?
        .narrow(3, 0, 1)?
        .narrow(5, 0, 1)?
        .reshape((n, c, out_h, out_w))
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm(candle_nn::BatchNorm);

impl BatchNorm {
    pub fn new(scope: &Scope, channels: usize, eps: f64) -> TResult<Self> {
        let weight = scope.trainable("weight", &[channels], Init::Const(1.0))?;
        let bias = scope.trainable("bias", &[channels], Init::Const(0.0))?;
        let mean = scope.buffer("running_mean", &[channels], Init::Const(0.0))?;
        let var = scope.buffer("running_var", &[channels], Init::Const(1.0))?;
        Ok(BatchNorm(candle_nn::BatchNorm::new(channels, mean, var, weight, bias, eps)?))
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        self.0.forward_t(x, train)
    }
}

/// Max pooling over `kernel × kernel` windows with `-inf` padding.
///
/// candle has no gradient for overlapping windows, so this carries its own:
/// each output's gradient goes to the first maximum of its window in
/// row-major order.
#[derive(Debug, Clone, Copy)]
struct MaxPool {
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl MaxPool {
    fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Pooled values and the flat input index each one came from.
    fn pool(&self, data: &[f32], (b, c, h, w): (usize, usize, usize, usize)) -> (Vec<f32>, Vec<usize>) {
        let (ho, wo) = (self.out_len(h), self.out_len(w));
        let mut values = Vec::with_capacity(b * c * ho * wo);
        let mut indices = Vec::with_capacity(b * c * ho * wo);
        let span = |o: usize, n: usize| {
            let start = (o * self.stride).saturating_sub(self.pad);
            let end = (o * self.stride + self.kernel).saturating_sub(self.pad).min(n);
            start..end
        };
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut at = base + span(oy, h).start * w + span(ox, w).start;
                    for y in span(oy, h) {
                        for x in span(ox, w) {
                            let v = data[base + y * w + x];
                            if v > best {
                                best = v;
                                at = base + y * w + x;
                            }
                        }
                    }
                    values.push(best);
                    indices.push(at);
                }
            }
        }
        (values, indices)
    }
}

impl CustomOp1 for MaxPool {
    fn name(&self) -> &'static str {
        "max-pool-2d"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> TResult<(CpuStorage, Shape)> {
        let dims = layout.shape().dims4()?;
        let CpuStorage::F32(data) = storage else {
            candle_core::bail!("max pool expects f32 input");
        };
        let Some((start, end)) = layout.contiguous_offsets() else {
            candle_core::bail!("max pool expects a contiguous input");
        };
        let (values, _) = self.pool(&data[start..end], dims);
        let shape = Shape::from((dims.0, dims.1, self.out_len(dims.2), self.out_len(dims.3)));
        Ok((CpuStorage::F32(values), shape))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> TResult<Option<Tensor>> {
        let data = arg.flatten_all()?.to_vec1::<f32>()?;
        let (_, indices) = self.pool(&data, arg.dims4()?);
        let upstream = grad_res.flatten_all()?.to_vec1::<f32>()?;
        let mut grad = vec![0f32; data.len()];
        for (g, i) in upstream.iter().zip(indices) {
            grad[i] += g;
        }
        Ok(Some(Tensor::from_vec(grad, arg.shape(), arg.device())?))
    }
}

pub(crate) fn max_pool(x: &Tensor, kernel: usize, stride: usize, pad: usize) -> TResult<Tensor> {
    if pad >= kernel {
        candle_core::bail!("max pool padding {pad} must be below kernel {kernel}");
    }
    x.contiguous()?.apply_op1(MaxPool { kernel, stride, pad })
}

/// Average pooling that counts padded zeros in the denominator, built from
/// shifted views so it stays differentiable for overlapping windows.
pub(crate) fn avg_pool_padded(x: &Tensor, kernel: usize, stride: usize, pad: usize) -> TResult<Tensor> {
    let x = if pad > 0 {
        x.pad_with_zeros(2, pad, pad)?.pad_with_zeros(3, pad, pad)?
    } else {
        x.clone()
    };
    let (_, _, h, w) = x.dims4()?;
    let (full_h, full_w) = (h - kernel + 1, w - kernel + 1);
    let mut sum: Option<Tensor> = None;
    for dy in 0..kernel {
        for dx in 0..kernel {
            let tap = x.narrow(2, dy, full_h)?.narrow(3, dx, full_w)?;
            sum = Some(match sum {
                None => tap,
                Some(acc) => (acc + tap)?,
            });
        }
    }
    let mean = (sum.expect("kernel is at least 1") / (kernel * kernel) as f64)?;
    if stride == 1 {
        return Ok(mean);
    }
    let rows = Tensor::arange_step(0u32, full_h as u32, stride as u32, x.device())?;
    let cols = Tensor::arange_step(0u32, full_w as u32, stride as u32, x.device())?;
    mean.index_select(&rows, 2)?.index_select(&cols, 3)
}

pub(crate) fn relu6(x: &Tensor) -> TResult<Tensor> {
    x.clamp(0f32, 6f32)
}

pub(crate) fn to_f32(t: &Tensor) -> TResult<Tensor> {
    if t.dtype() == DType::F32 {
        Ok(t.clone())
    } else {
        t.to_dtype(DType::F32)
    }
}
