//! Network assembly: model specification, flat parameter layout, and the
//! per-sample forward/backward passes shared by both fusion strategies.
//!
//! A branch is four conv blocks followed by global average pooling and one
//! dense layer. Each block is `conv_a` (channel projection) -> ReLU ->
//! `conv_b` (refinement) -> ReLU -> 2x2 max pool; the residual variant adds
//! an identity skip around `conv_b`, merged before the activation, and is
//! otherwise parameter-identical to the plain variant. Feature-level
//! fusion runs one 3-channel branch; model-level fusion runs three
//! 1-channel branches whose dense features concatenate before the head.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::ops;
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    MiniPlain,
    MiniResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    FeatureLevel,
    ModelLevel,
}

impl Architecture {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mini_plain" => Some(Architecture::MiniPlain),
            "mini_residual" => Some(Architecture::MiniResidual),
            _ => None,
        }
    }
}

impl Fusion {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "feature_level" => Some(Fusion::FeatureLevel),
            "model_level" => Some(Fusion::ModelLevel),
            _ => None,
        }
    }
}

fn default_channels() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_dense() -> usize {
    64
}

/// Architecture description. The defaults are the standard miniature
/// backbone for 320x480 fused inputs; tests shrink the widths and input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub fusion: Fusion,
    #[serde(default = "default_channels")]
    pub conv_channels: Vec<usize>,
    #[serde(default = "default_dense")]
    pub dense_width: usize,
    pub in_h: usize,
    pub in_w: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("input {h}x{w} must be divisible by {div} (one 2x pool per block)")]
    BadInputShape { h: usize, w: usize, div: usize },
    #[error("spec must have at least one conv block")]
    NoBlocks,
    #[error("input length {got} does not match spec ({want})")]
    ShapeMismatch { got: usize, want: usize },
    #[error("train or validation split is empty")]
    EmptySplit,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

impl ModelSpec {
    pub fn standard(architecture: Architecture, fusion: Fusion) -> Self {
        ModelSpec {
            architecture,
            fusion,
            conv_channels: default_channels(),
            dense_width: default_dense(),
            in_h: crate::fuse::MAP_H,
            in_w: crate::fuse::MAP_W,
        }
    }

    /// Scaled-down spec for gradient checking and fast unit tests.
    pub fn tiny(architecture: Architecture, fusion: Fusion) -> Self {
        ModelSpec {
            architecture,
            fusion,
            conv_channels: vec![2, 3, 4, 5],
            dense_width: 8,
            in_h: 16,
            in_w: 32,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.conv_channels.is_empty() {
            return Err(ModelError::NoBlocks);
        }
        let div = 1usize << self.conv_channels.len();
        if self.in_h % div != 0 || self.in_w % div != 0 || self.in_h == 0 || self.in_w == 0 {
            return Err(ModelError::BadInputShape { h: self.in_h, w: self.in_w, div });
        }
        Ok(())
    }

    pub fn branches(&self) -> usize {
        match self.fusion {
            Fusion::FeatureLevel => 1,
            Fusion::ModelLevel => 3,
        }
    }

    pub fn branch_in_ch(&self) -> usize {
        match self.fusion {
            Fusion::FeatureLevel => 3,
            Fusion::ModelLevel => 1,
        }
    }

    pub fn input_len(&self) -> usize {
        3 * self.in_h * self.in_w
    }

    fn skip(&self) -> bool {
        self.architecture == Architecture::MiniResidual
    }

    /// Total learnable parameters.
    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// Parameters in convolution layers only.
    pub fn conv_param_count(&self) -> usize {
        let mut count = 0;
        let mut in_ch = self.branch_in_ch();
        for &c in &self.conv_channels {
            count += in_ch * c * 9 + c; // conv_a
            count += c * c * 9 + c; // conv_b
            in_ch = c;
        }
        count * self.branches()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockLayout {
    pub aw: Range<usize>,
    pub ab: Range<usize>,
    pub bw: Range<usize>,
    pub bb: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct BranchLayout {
    pub blocks: Vec<BlockLayout>,
    pub dense_w: Range<usize>,
    pub dense_b: Range<usize>,
}

/// Offsets of every layer inside the flat parameter vector, in the fixed
/// canonical order (branches, then the head).
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub branches: Vec<BranchLayout>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut at = 0usize;
        let mut claim = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let branches = (0..spec.branches())
            .map(|_| {
                let mut in_ch = spec.branch_in_ch();
                let blocks = spec
                    .conv_channels
                    .iter()
                    .map(|&c| {
                        let b = BlockLayout {
                            aw: claim(in_ch * c * 9),
                            ab: claim(c),
                            bw: claim(c * c * 9),
                            bb: claim(c),
                        };
                        in_ch = c;
                        b
                    })
                    .collect();
                BranchLayout {
                    blocks,
                    dense_w: claim(in_ch * spec.dense_width),
                    dense_b: claim(spec.dense_width),
                }
            })
            .collect();
        let head_in = spec.branches() * spec.dense_width;
        let head_w = claim(head_in);
        let head_b = claim(1);
        Layout { branches, head_w, head_b, total: at }
    }
}

/// Per-block dimensions: input size of block `i` after `i` poolings.
fn block_dims(spec: &ModelSpec, i: usize) -> (usize, usize) {
    (spec.in_h >> i, spec.in_w >> i)
}

#[derive(Debug, Clone)]
pub(crate) struct BlockActs<T> {
    /// Post-ReLU output of conv_a.
    pub h_a: Vec<T>,
    /// Post-ReLU block output before pooling.
    pub z: Vec<T>,
    pub pooled: Vec<T>,
    pub argmax: Vec<u32>,
}

#[derive(Debug, Clone)]
pub(crate) struct BranchActs<T> {
    pub blocks: Vec<BlockActs<T>>,
    pub gap: Vec<T>,
    /// Post-ReLU dense feature.
    pub dense_out: Vec<T>,
}

/// All stored activations of one sample's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Acts<T> {
    pub branches: Vec<BranchActs<T>>,
    pub head_in: Vec<T>,
    pub pred: T,
}

impl<T: Scalar> Acts<T> {
    pub fn new(spec: &ModelSpec) -> Self {
        let branches = (0..spec.branches())
            .map(|_| {
                let blocks = spec
                    .conv_channels
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let (h, w) = block_dims(spec, i);
                        BlockActs {
                            h_a: vec![T::ZERO; c * h * w],
                            z: vec![T::ZERO; c * h * w],
                            pooled: vec![T::ZERO; c * (h / 2) * (w / 2)],
                            argmax: vec![0u32; c * (h / 2) * (w / 2)],
                        }
                    })
                    .collect();
                BranchActs {
                    blocks,
                    gap: vec![T::ZERO; *spec.conv_channels.last().unwrap()],
                    dense_out: vec![T::ZERO; spec.dense_width],
                }
            })
            .collect();
        Acts {
            branches,
            head_in: vec![T::ZERO; spec.branches() * spec.dense_width],
            pred: T::ZERO,
        }
    }
}

/// Gradient buffers mirroring [`Acts`] (argmax omitted).
#[derive(Debug, Clone)]
pub(crate) struct DActs<T> {
    pub d_h_a: Vec<Vec<T>>,
    pub d_z: Vec<Vec<T>>,
    pub d_pooled: Vec<Vec<T>>,
    pub d_gap: Vec<T>,
    pub d_dense: Vec<T>,
    pub d_input: Vec<T>,
}

impl<T: Scalar> DActs<T> {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut d_h_a = Vec::new();
        let mut d_z = Vec::new();
        let mut d_pooled = Vec::new();
        for (i, &c) in spec.conv_channels.iter().enumerate() {
            let (h, w) = block_dims(spec, i);
            d_h_a.push(vec![T::ZERO; c * h * w]);
            d_z.push(vec![T::ZERO; c * h * w]);
            d_pooled.push(vec![T::ZERO; c * (h / 2) * (w / 2)]);
        }
        DActs {
            d_h_a,
            d_z,
            d_pooled,
            d_gap: vec![T::ZERO; *spec.conv_channels.last().unwrap()],
            d_dense: vec![T::ZERO; spec.dense_width],
            d_input: vec![T::ZERO; spec.branch_in_ch() * spec.in_h * spec.in_w],
        }
    }
}

/// Forward pass of one branch. `input` is the branch's channel planes.
fn branch_forward<T: Scalar>(
    spec: &ModelSpec,
    layout: &BranchLayout,
    params: &[T],
    input: &[T],
    acts: &mut BranchActs<T>,
) {
    let mut in_ch = spec.branch_in_ch();
    for (i, (&ch, block)) in spec.conv_channels.iter().zip(&layout.blocks).enumerate() {
        let (h, w) = block_dims(spec, i);
        // Split so the previous block's pooled output can be read while
        // this block's buffers are written.
        let (prev, cur) = acts.blocks.split_at_mut(i);
        let a = &mut cur[0];
        let block_input: &[T] = if i == 0 { input } else { &prev[i - 1].pooled };
        ops::conv3x3_forward(
            block_input,
            in_ch,
            h,
            w,
            &params[block.aw.clone()],
            Some(&params[block.ab.clone()]),
            ch,
            &mut a.h_a,
        );
        relu_inplace(&mut a.h_a);
        ops::conv3x3_forward(
            &a.h_a,
            ch,
            h,
            w,
            &params[block.bw.clone()],
            Some(&params[block.bb.clone()]),
            ch,
            &mut a.z,
        );
        if spec.skip() {
            for (z, &ha) in a.z.iter_mut().zip(&a.h_a) {
                *z += ha;
            }
        }
        relu_inplace(&mut a.z);
        ops::maxpool2_forward(&a.z, ch, h, w, &mut a.pooled, &mut a.argmax);
        in_ch = ch;
    }
    let last = acts.blocks.last().unwrap();
    let last_ch = *spec.conv_channels.last().unwrap();
    let plane = last.pooled.len() / last_ch;
    ops::gap_forward(&last.pooled, last_ch, plane, &mut acts.gap);
    let mut pre = vec![T::ZERO; spec.dense_width];
    ops::dense_forward(&acts.gap, &params[layout.dense_w.clone()], &params[layout.dense_b.clone()], &mut pre);
    ops::relu_forward(&pre, &mut acts.dense_out);
}

fn conv3x3_into<T: Scalar>(
    inp: &[T],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: &[T],
    out_ch: usize,
    out: &mut [T],
) {
    ops::conv3x3_forward(inp, in_ch, h, w, weights, Some(bias), out_ch, out);
}

fn relu_inplace<T: Scalar>(buf: &mut [T]) {
    for v in buf.iter_mut() {
        *v = v.maximum(T::ZERO);
    }
}

/// Forward one sample; fills `acts` and returns the sigmoid prediction.
pub(crate) fn forward_sample<T: Scalar>(
    spec: &ModelSpec,
    layout: &Layout,
    params: &[T],
    input: &[T],
    acts: &mut Acts<T>,
) -> T {
    let plane = spec.in_h * spec.in_w;
    for (b, branch_layout) in layout.branches.iter().enumerate() {
        let branch_input = match spec.fusion {
            Fusion::FeatureLevel => input,
            Fusion::ModelLevel => &input[b * plane..(b + 1) * plane],
        };
        branch_forward(spec, branch_layout, params, branch_input, &mut acts.branches[b]);
        acts.head_in[b * spec.dense_width..(b + 1) * spec.dense_width]
            .copy_from_slice(&acts.branches[b].dense_out);
    }
    let mut z = params[layout.head_b.start];
    for (&w, &a) in params[layout.head_w.clone()].iter().zip(&acts.head_in) {
        z += w * a;
    }
    acts.pred = ops::sigmoid(z);
    acts.pred
}

/// Backward pass for one sample; accumulates into `grads` (same layout as
/// the parameter vector). `dpred` is dLoss/dPrediction.
pub(crate) fn backward_sample<T: Scalar>(
    spec: &ModelSpec,
    layout: &Layout,
    params: &[T],
    input: &[T],
    acts: &Acts<T>,
    dpred: T,
    grads: &mut [T],
    scratch: &mut DActs<T>,
) {
    let p = acts.pred;
    let dz_head = dpred * p * (T::ONE - p);

    // Head: z = w . head_in + b.
    grads[layout.head_b.start] += dz_head;
    let head_w = &params[layout.head_w.clone()];
    let mut d_head_in = vec![T::ZERO; acts.head_in.len()];
    for i in 0..acts.head_in.len() {
        grads[layout.head_w.start + i] += dz_head * acts.head_in[i];
        d_head_in[i] = dz_head * head_w[i];
    }

    let plane = spec.in_h * spec.in_w;
    for (b, branch_layout) in layout.branches.iter().enumerate() {
        let branch_input: &[T] = match spec.fusion {
            Fusion::FeatureLevel => input,
            Fusion::ModelLevel => &input[b * plane..(b + 1) * plane],
        };
        let bacts = &acts.branches[b];
        let d_dense_out = &d_head_in[b * spec.dense_width..(b + 1) * spec.dense_width];

        // Dense layer (ReLU mask from its stored output).
        ops::relu_backward_masked(d_dense_out, &bacts.dense_out, &mut scratch.d_dense);
        {
            let (dw, db) = grads_pair(grads, &branch_layout.dense_w, &branch_layout.dense_b);
            ops::dense_backward(&bacts.gap, &params[branch_layout.dense_w.clone()], &scratch.d_dense, dw, db, &mut scratch.d_gap);
        }

        // GAP back to the last pooled map.
        let last = spec.conv_channels.len() - 1;
        let last_ch = *spec.conv_channels.last().unwrap();
        let pooled_plane = bacts.blocks[last].pooled.len() / last_ch;
        ops::gap_backward(&scratch.d_gap, last_ch, pooled_plane, &mut scratch.d_pooled[last]);

        // Blocks in reverse.
        for i in (0..spec.conv_channels.len()).rev() {
            let (h, w) = block_dims(spec, i);
            let ch = spec.conv_channels[i];
            let in_ch = if i == 0 { spec.branch_in_ch() } else { spec.conv_channels[i - 1] };
            let block = &branch_layout.blocks[i];
            let a = &bacts.blocks[i];

            // Unpool into dz, then mask by the block output.
            ops::maxpool2_backward(&scratch.d_pooled[i], &a.argmax, &mut scratch.d_z[i]);
            let dz = &mut scratch.d_z[i];
            for (d, &o) in dz.iter_mut().zip(&a.z) {
                if !(o > T::ZERO) {
                    *d = T::ZERO;
                }
            }

            // conv_b: params and input gradient.
            {
                let (dw, db) = grads_pair(grads, &block.bw, &block.bb);
                ops::conv3x3_backward_params(&a.h_a, ch, h, w, dz, ch, dw, db);
            }
            ops::conv3x3_backward_input(dz, ch, h, w, &params[block.bw.clone()], ch, &mut scratch.d_h_a[i]);
            if spec.skip() {
                for (d, &g) in scratch.d_h_a[i].iter_mut().zip(scratch.d_z[i].iter()) {
                    *d += g;
                }
            }

            // conv_a: mask by h_a, then params and (if needed) input gradient.
            let d_h_a = &mut scratch.d_h_a[i];
            for (d, &o) in d_h_a.iter_mut().zip(&a.h_a) {
                if !(o > T::ZERO) {
                    *d = T::ZERO;
                }
            }
            let block_input: &[T] = if i == 0 { branch_input } else { &bacts.blocks[i - 1].pooled };
            {
                let (dw, db) = grads_pair(grads, &block.aw, &block.ab);
                ops::conv3x3_backward_params(block_input, in_ch, h, w, d_h_a, ch, dw, db);
            }
            if i > 0 {
                ops::conv3x3_backward_input(d_h_a, ch, h, w, &params[block.aw.clone()], in_ch, &mut scratch.d_pooled[i - 1]);
            }
        }
    }
}

/// Two disjoint mutable gradient slices (weights + bias of one layer).
fn grads_pair<'a, T>(
    grads: &'a mut [T],
    w: &Range<usize>,
    b: &Range<usize>,
) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(w.end <= b.start);
    let (left, right) = grads.split_at_mut(b.start);
    (&mut left[w.clone()], &mut right[..b.len()])
}

/// He-uniform initialization: weights uniform in +-sqrt(6 / fan_in),
/// biases zero, drawn in canonical layout order from the seeded generator.
pub(crate) fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> Vec<T> {
    use rand::Rng;
    use rand::SeedableRng;
    let layout = Layout::new(spec);
    let mut params = vec![T::ZERO; layout.total];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |range: Range<usize>, fan_in: usize, params: &mut Vec<T>| {
        let bound = (6.0 / fan_in as f64).sqrt();
        for i in range {
            params[i] = T::from_f64(rng.gen_range(-bound..bound));
        }
    };
    for branch in &layout.branches {
        let mut in_ch = spec.branch_in_ch();
        for (block, &ch) in branch.blocks.iter().zip(&spec.conv_channels) {
            fill(block.aw.clone(), in_ch * 9, &mut params);
            fill(block.bw.clone(), ch * 9, &mut params);
            in_ch = ch;
        }
        fill(branch.dense_w.clone(), in_ch, &mut params);
    }
    fill(layout.head_w.clone(), spec.branches() * spec.dense_width, &mut params);
    params
}
