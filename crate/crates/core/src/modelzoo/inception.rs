use candle_core::Tensor;

use super::layers::{avg_pool_padded, max_pool, BatchNorm, Conv2d, ConvSpec, Scope, TResult};
use super::Network;

const BN_EPS: f64 = 1e-3;

/// Conv (no bias) + batch norm + ReLU.
struct Unit {
    conv: Conv2d,
    bn: BatchNorm,
}

impl Unit {
    fn new(s: &Scope, spec: ConvSpec) -> TResult<Self> {
        Ok(Unit {
            conv: Conv2d::new(&s.pp("conv"), spec)?,
            bn: BatchNorm::new(&s.pp("bn"), spec.c_out, BN_EPS)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        self.bn.forward(&self.conv.forward(x)?, train)?.relu()
    }
}

fn chain(units: &[Unit], x: &Tensor, train: bool) -> TResult<Tensor> {
    let mut h = x.clone();
    for u in units {
        h = u.forward(&h, train)?;
    }
    Ok(h)
}

enum PoolBranch {
    /// 3×3 average pool (stride 1, pad 1) then a 1×1 projection.
    AvgProject(Unit),
    /// 3×3 max pool, stride 2.
    MaxReduce,
}

/// A mixed block: parallel branches concatenated on channels.
struct Mixed {
    branches: Vec<Vec<Unit>>,
    /// Branches whose last unit fans out into two parallel convs (the 7b/7c blocks).
    split_tails: Vec<(usize, Unit, Unit)>,
    pool: PoolBranch,
}

impl Mixed {
    fn forward(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let mut outputs = Vec::new();
        for (i, branch) in self.branches.iter().enumerate() {
            let h = chain(branch, x, train)?;
            match self.split_tails.iter().find(|(b, _, _)| *b == i) {
                Some((_, a, b)) => {
                    outputs.push(a.forward(&h, train)?);
                    outputs.push(b.forward(&h, train)?);
                }
                None => outputs.push(h),
            }
        }
        outputs.push(match &self.pool {
            PoolBranch::AvgProject(unit) => unit.forward(&avg_pool_padded(x, 3, 1, 1)?, train)?,
            PoolBranch::MaxReduce => max_pool(x, 3, 2, 0)?,
        });
        Tensor::cat(&outputs, 1)
    }
}

fn unit(s: &Scope, name: &str, spec: ConvSpec) -> TResult<Unit> {
    Unit::new(&s.pp(name), spec)
}

fn block_a(s: &Scope, c_in: usize, pool_features: usize) -> TResult<Mixed> {
    Ok(Mixed {
        branches: vec![
            vec![unit(s, "branch1x1", ConvSpec::new(c_in, 64, 1))?],
            vec![
                unit(s, "branch5x5_1", ConvSpec::new(c_in, 48, 1))?,
                unit(s, "branch5x5_2", ConvSpec::new(48, 64, 5).pad(2))?,
            ],
            vec![
                unit(s, "branch3x3dbl_1", ConvSpec::new(c_in, 64, 1))?,
                unit(s, "branch3x3dbl_2", ConvSpec::new(64, 96, 3).pad(1))?,
                unit(s, "branch3x3dbl_3", ConvSpec::new(96, 96, 3).pad(1))?,
            ],
        ],
        split_tails: vec![],
        pool: PoolBranch::AvgProject(unit(s, "branch_pool", ConvSpec::new(c_in, pool_features, 1))?),
    })
}

fn block_b(s: &Scope, c_in: usize) -> TResult<Mixed> {
    Ok(Mixed {
        branches: vec![
            vec![unit(s, "branch3x3", ConvSpec::new(c_in, 384, 3).stride(2))?],
            vec![
                unit(s, "branch3x3dbl_1", ConvSpec::new(c_in, 64, 1))?,
                unit(s, "branch3x3dbl_2", ConvSpec::new(64, 96, 3).pad(1))?,
                unit(s, "branch3x3dbl_3", ConvSpec::new(96, 96, 3).stride(2))?,
            ],
        ],
        split_tails: vec![],
        pool: PoolBranch::MaxReduce,
    })
}

fn block_c(s: &Scope, c_in: usize, c7: usize) -> TResult<Mixed> {
    let row = |a, b| ConvSpec::rect(a, b, (1, 7), (0, 3));
    let col = |a, b| ConvSpec::rect(a, b, (7, 1), (3, 0));
    Ok(Mixed {
        branches: vec![
            vec![unit(s, "branch1x1", ConvSpec::new(c_in, 192, 1))?],
            vec![
                unit(s, "branch7x7_1", ConvSpec::new(c_in, c7, 1))?,
                unit(s, "branch7x7_2", row(c7, c7))?,
                unit(s, "branch7x7_3", col(c7, 192))?,
            ],
            vec![
                unit(s, "branch7x7dbl_1", ConvSpec::new(c_in, c7, 1))?,
                unit(s, "branch7x7dbl_2", col(c7, c7))?,
                unit(s, "branch7x7dbl_3", row(c7, c7))?,
                unit(s, "branch7x7dbl_4", col(c7, c7))?,
                unit(s, "branch7x7dbl_5", row(c7, 192))?,
            ],
        ],
        split_tails: vec![],
        pool: PoolBranch::AvgProject(unit(s, "branch_pool", ConvSpec::new(c_in, 192, 1))?),
    })
}

fn block_d(s: &Scope, c_in: usize) -> TResult<Mixed> {
    Ok(Mixed {
        branches: vec![
            vec![
                unit(s, "branch3x3_1", ConvSpec::new(c_in, 192, 1))?,
                unit(s, "branch3x3_2", ConvSpec::new(192, 320, 3).stride(2))?,
            ],
            vec![
                unit(s, "branch7x7x3_1", ConvSpec::new(c_in, 192, 1))?,
                unit(s, "branch7x7x3_2", ConvSpec::rect(192, 192, (1, 7), (0, 3)))?,
                unit(s, "branch7x7x3_3", ConvSpec::rect(192, 192, (7, 1), (3, 0)))?,
                unit(s, "branch7x7x3_4", ConvSpec::new(192, 192, 3).stride(2))?,
            ],
        ],
        split_tails: vec![],
        pool: PoolBranch::MaxReduce,
    })
}

fn block_e(s: &Scope, c_in: usize) -> TResult<Mixed> {
    Ok(Mixed {
        branches: vec![
            vec![unit(s, "branch1x1", ConvSpec::new(c_in, 320, 1))?],
            vec![unit(s, "branch3x3_1", ConvSpec::new(c_in, 384, 1))?],
            vec![
                unit(s, "branch3x3dbl_1", ConvSpec::new(c_in, 448, 1))?,
                unit(s, "branch3x3dbl_2", ConvSpec::new(448, 384, 3).pad(1))?,
            ],
        ],
        split_tails: vec![
            (
                1,
                unit(s, "branch3x3_2a", ConvSpec::rect(384, 384, (1, 3), (0, 1)))?,
                unit(s, "branch3x3_2b", ConvSpec::rect(384, 384, (3, 1), (1, 0)))?,
            ),
            (
                2,
                unit(s, "branch3x3dbl_3a", ConvSpec::rect(384, 384, (1, 3), (0, 1)))?,
                unit(s, "branch3x3dbl_3b", ConvSpec::rect(384, 384, (3, 1), (1, 0)))?,
            ),
        ],
        pool: PoolBranch::AvgProject(unit(s, "branch_pool", ConvSpec::new(c_in, 192, 1))?),
    })
}

/// Inception v3 trunk without the auxiliary classifier.
pub(crate) struct InceptionV3 {
    stem_a: Vec<Unit>,
    stem_b: Vec<Unit>,
    mixed: Vec<Mixed>,
}

impl InceptionV3 {
    pub fn new(root: &Scope) -> TResult<Self> {
        let stem_a = vec![
            unit(root, "Conv2d_1a_3x3", ConvSpec::new(3, 32, 3).stride(2))?,
            unit(root, "Conv2d_2a_3x3", ConvSpec::new(32, 32, 3))?,
            unit(root, "Conv2d_2b_3x3", ConvSpec::new(32, 64, 3).pad(1))?,
        ];
        let stem_b = vec![
            unit(root, "Conv2d_3b_1x1", ConvSpec::new(64, 80, 1))?,
            unit(root, "Conv2d_4a_3x3", ConvSpec::new(80, 192, 3))?,
        ];
        let mixed = vec![
            block_a(&root.pp("Mixed_5b"), 192, 32)?,
            block_a(&root.pp("Mixed_5c"), 256, 64)?,
            block_a(&root.pp("Mixed_5d"), 288, 64)?,
            block_b(&root.pp("Mixed_6a"), 288)?,
            block_c(&root.pp("Mixed_6b"), 768, 128)?,
            block_c(&root.pp("Mixed_6c"), 768, 160)?,
            block_c(&root.pp("Mixed_6d"), 768, 160)?,
            block_c(&root.pp("Mixed_6e"), 768, 192)?,
            block_d(&root.pp("Mixed_7a"), 768)?,
            block_e(&root.pp("Mixed_7b"), 1280)?,
            block_e(&root.pp("Mixed_7c"), 2048)?,
        ];
        Ok(InceptionV3 { stem_a, stem_b, mixed })
    }
}

impl Network for InceptionV3 {
    fn features(&self, x: &Tensor, train: bool) -> TResult<Tensor> {
        let h = max_pool(&chain(&self.stem_a, x, train)?, 3, 2, 0)?;
        let mut h = max_pool(&chain(&self.stem_b, &h, train)?, 3, 2, 0)?;
        for block in &self.mixed {
            h = block.forward(&h, train)?;
        }
        Ok(h)
    }

    fn out_channels(&self) -> usize {
        2048
    }

    fn min_input(&self) -> usize {
        75
    }
}
