//! Fixed-weight convolutional feature extractor.
//!
//! Perceptual and style losses compare images in the feature space of a
//! small convolutional pyramid rather than pixel space. Pretrained
//! classifier weights are out of scope for this crate, so the extractor
//! uses *fixed, deterministically seeded* weights instead: the loss
//! mathematics — multi-level feature distances, Gram matrices, gradients
//! chained through convolution/ReLU/pooling — is identical, and every test
//! is exactly reproducible.
//!
//! Architecture per level: 3x3 convolution (zero padding, stride 1, no
//! bias) → ReLU → 2x2 average pool (stride 2). Default pyramid: three
//! levels with 16, 32 and 64 output channels. Weights are drawn from a
//! seeded generator and row-orthonormalized so each level roughly preserves
//! activation scale.

use rayon::prelude::*;

use crate::error::SdcError;
use crate::frame::Frame;

/// Default generator seed for the built-in extractor weights. Arbitrary but
/// fixed: changing it changes every perceptual/style loss value.
pub const DEFAULT_EXTRACTOR_SEED: u64 = 0xFEA7;

/// Default per-level output channel counts.
pub const DEFAULT_CHANNELS: [usize; 3] = [16, 32, 64];

/// A dense feature tensor of shape `height x width x channels`, laid out
/// like [`Frame`]: row-major, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> FeatureMap {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Total element count `channels * height * width`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Per-level loss normalization `1 / (channels * height * width)`.
    pub fn kappa(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

/// One conv level's fixed weights, `[out][in][3][3]` row-major.
#[derive(Debug, Clone)]
struct ConvLevel {
    in_c: usize,
    out_c: usize,
    weights: Vec<f64>,
}

impl ConvLevel {
    #[inline]
    fn w(&self, co: usize, ci: usize, dy: usize, dx: usize) -> f64 {
        self.weights[((co * self.in_c + ci) * 3 + dy) * 3 + dx]
    }
}

/// Deterministic multi-level feature extractor. Immutable after
/// construction; the same input always yields the same features.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    levels: Vec<ConvLevel>,
    seed: u64,
}

/// Intermediate activations retained for the backward pass: the
/// pre-activation (pre-ReLU) map of every level, plus the conv input shape.
pub struct ForwardTrace {
    /// Input spatial size per level.
    input_shapes: Vec<(usize, usize)>,
    /// Pre-ReLU conv outputs per level.
    preacts: Vec<FeatureMap>,
    /// Post-pool outputs per level (the features the losses see).
    pub features: Vec<FeatureMap>,
    /// Channel count of the original frame (1 or 3) for folding the
    /// replicated-gray gradient back down.
    frame_channels: usize,
}

impl FeatureExtractor {
    /// The built-in three-level extractor with the fixed default seed.
    pub fn new_default() -> FeatureExtractor {
        FeatureExtractor::with_seed(DEFAULT_EXTRACTOR_SEED)
    }

    /// Three default levels, custom seed.
    pub fn with_seed(seed: u64) -> FeatureExtractor {
        FeatureExtractor::with_channels(&DEFAULT_CHANNELS, seed)
            .expect("default channel progression is valid")
    }

    /// Custom pyramid: one level per entry of `channels`, each 3x3 conv →
    /// ReLU → 2x2 average pool. Input channel count of level 0 is 3
    /// (grayscale frames are replicated on entry). Every level must satisfy
    /// `out_channels <= in_channels * 9` so its rows can be orthonormalized.
    pub fn with_channels(channels: &[usize], seed: u64) -> Result<FeatureExtractor, SdcError> {
        if channels.is_empty() {
            return Err(SdcError::InvalidDimensions(
                "feature extractor needs at least one level".into(),
            ));
        }
        let mut levels = Vec::with_capacity(channels.len());
        let mut in_c = 3usize;
        for (li, &out_c) in channels.iter().enumerate() {
            if out_c == 0 || out_c > in_c * 9 {
                return Err(SdcError::InvalidDimensions(format!(
                    "level {li}: output channels {out_c} must be in 1..={}",
                    in_c * 9
                )));
            }
            levels.push(ConvLevel {
                in_c,
                out_c,
                weights: orthonormal_rows(out_c, in_c * 9, seed ^ (li as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            });
            in_c = out_c;
        }
        Ok(FeatureExtractor { levels, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of pyramid levels.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Smallest input side length: each level halves the spatial size, so
    /// the input must be at least `2^depth` in both dimensions.
    pub fn min_input(&self) -> usize {
        1 << self.levels.len()
    }

    /// Runs the pyramid, returning one post-pool feature map per level,
    /// strictly decreasing in spatial size.
    pub fn extract(&self, frame: &Frame) -> Result<Vec<FeatureMap>, SdcError> {
        Ok(self.forward_trace(frame)?.features)
    }

    /// Forward pass retaining the activations the backward pass needs.
    pub fn forward_trace(&self, frame: &Frame) -> Result<ForwardTrace, SdcError> {
        let (h, w, c) = frame.shape();
        if c != 1 && c != 3 {
            return Err(SdcError::UnsupportedChannels {
                channels: c,
                context: "feature extraction expects gray or rgb frames".into(),
            });
        }
        let min = self.min_input();
        if h < min || w < min {
            return Err(SdcError::ImageTooSmall(format!(
                "{h}x{w} input cannot survive {} halvings; need at least {min}x{min}",
                self.levels.len()
            )));
        }

        // Promote to 3 channels; grayscale replicates.
        let mut cur = FeatureMap::zeros(h, w, 3);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    cur.set(x, y, ch, frame.get(x, y, if c == 3 { ch } else { 0 }));
                }
            }
        }

        let mut input_shapes = Vec::with_capacity(self.levels.len());
        let mut preacts = Vec::with_capacity(self.levels.len());
        let mut features = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            input_shapes.push((cur.height, cur.width));
            let pre = conv3x3_forward(level, &cur);
            let pooled = pool2x2(&relu(&pre));
            preacts.push(pre);
            features.push(pooled.clone());
            cur = pooled;
        }
        Ok(ForwardTrace {
            input_shapes,
            preacts,
            features,
            frame_channels: c,
        })
    }

    /// Back-propagates per-level feature gradients to a gradient with
    /// respect to the input frame.
    ///
    /// `feature_grads[l]` is `dL/d features[l]` (zero maps may be passed for
    /// levels a loss does not touch). The ReLU uses the subgradient 0 at
    /// exactly 0; average pooling distributes evenly; convolution gradients
    /// are gathered per input pixel, so the pass is deterministic and
    /// row-parallel like the forward.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        feature_grads: &[FeatureMap],
    ) -> Result<Frame, SdcError> {
        if feature_grads.len() != self.levels.len() {
            return Err(SdcError::shape(
                format!("{} gradient maps", self.levels.len()),
                format!("{}", feature_grads.len()),
            ));
        }
        for (l, (g, f)) in feature_grads.iter().zip(&trace.features).enumerate() {
            if (g.channels, g.height, g.width) != (f.channels, f.height, f.width) {
                return Err(SdcError::shape(
                    format!("level {l} features {}x{}x{}", f.height, f.width, f.channels),
                    format!("gradient {}x{}x{}", g.height, g.width, g.channels),
                ));
            }
        }

        // Walk the pyramid deepest-first, carrying dL/d(level input).
        let mut carried: Option<FeatureMap> = None;
        for l in (0..self.levels.len()).rev() {
            let mut g_pool = feature_grads[l].clone();
            if let Some(from_above) = carried {
                for (a, b) in g_pool.data.iter_mut().zip(&from_above.data) {
                    *a += b;
                }
            }
            let (in_h, in_w) = trace.input_shapes[l];
            let g_pre = {
                let mut g = unpool2x2(&g_pool, trace.preacts[l].height, trace.preacts[l].width);
                relu_mask(&mut g, &trace.preacts[l]);
                g
            };
            carried = Some(conv3x3_backward_input(&self.levels[l], &g_pre, in_h, in_w));
        }
        let g_rgb = carried.expect("at least one level");

        // Fold the 3-channel gradient back to the frame's channel count:
        // replication on entry means gradients sum on the way out.
        let (h, w) = (g_rgb.height, g_rgb.width);
        let mut out = Frame::new(h, w, trace.frame_channels)?;
        for y in 0..h {
            for x in 0..w {
                if trace.frame_channels == 3 {
                    for ch in 0..3 {
                        out.set(x, y, ch, g_rgb.get(x, y, ch));
                    }
                } else {
                    out.set(
                        x,
                        y,
                        0,
                        g_rgb.get(x, y, 0) + g_rgb.get(x, y, 1) + g_rgb.get(x, y, 2),
                    );
                }
            }
        }
        Ok(out)
    }
}

/// Rows of an `rows x cols` matrix, orthonormalized by modified
/// Gram-Schmidt over seeded uniform draws. Requires `rows <= cols`.
fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![0.0f64; rows * cols];
    for v in &mut m {
        *v = rng.gen_range(-1.0..1.0);
    }
    for r in 0..rows {
        // Subtract projections onto all previous rows, then normalize.
        // A redraw guards against (vanishingly unlikely) near-dependence.
        loop {
            for prev in 0..r {
                let dot: f64 = (0..cols).map(|k| m[r * cols + k] * m[prev * cols + k]).sum();
                for k in 0..cols {
                    m[r * cols + k] -= dot * m[prev * cols + k];
                }
            }
            let norm: f64 = (0..cols)
                .map(|k| m[r * cols + k] * m[r * cols + k])
                .sum::<f64>()
                .sqrt();
            if norm > 1e-9 {
                for k in 0..cols {
                    m[r * cols + k] /= norm;
                }
                break;
            }
            for k in 0..cols {
                m[r * cols + k] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    m
}

fn conv3x3_forward(level: &ConvLevel, input: &FeatureMap) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let mut out = FeatureMap::zeros(h, w, level.out_c);
    let out_c = level.out_c;
    out.data
        .par_chunks_exact_mut(w * out_c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for co in 0..out_c {
                    let mut acc = 0.0;
                    for dy in 0..3usize {
                        let sy = y as isize + dy as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue; // zero padding
                        }
                        for dx in 0..3usize {
                            let sx = x as isize + dx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            for ci in 0..level.in_c {
                                acc += level.w(co, ci, dy, dx)
                                    * input.get(sx as usize, sy as usize, ci);
                            }
                        }
                    }
                    row[x * out_c + co] = acc;
                }
            }
        });
    out
}

/// Gradient with respect to the conv *input*, gathered per input pixel.
fn conv3x3_backward_input(
    level: &ConvLevel,
    g_out: &FeatureMap,
    in_h: usize,
    in_w: usize,
) -> FeatureMap {
    let mut g_in = FeatureMap::zeros(in_h, in_w, level.in_c);
    let in_c = level.in_c;
    g_in.data
        .par_chunks_exact_mut(in_w * in_c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..in_w {
                for ci in 0..in_c {
                    let mut acc = 0.0;
                    for dy in 0..3usize {
                        let oy = y as isize - (dy as isize - 1);
                        if oy < 0 || oy >= in_h as isize {
                            continue;
                        }
                        for dx in 0..3usize {
                            let ox = x as isize - (dx as isize - 1);
                            if ox < 0 || ox >= in_w as isize {
                                continue;
                            }
                            for co in 0..level.out_c {
                                acc += level.w(co, ci, dy, dx)
                                    * g_out.get(ox as usize, oy as usize, co);
                            }
                        }
                    }
                    row[x * in_c + ci] = acc;
                }
            }
        });
    g_in
}

fn relu(m: &FeatureMap) -> FeatureMap {
    let mut out = m.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Zeroes gradient entries where the pre-activation was <= 0.
fn relu_mask(g: &mut FeatureMap, preact: &FeatureMap) {
    for (gv, &p) in g.data.iter_mut().zip(&preact.data) {
        if p <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// 2x2 average pooling, stride 2. Odd trailing rows/columns are dropped.
fn pool2x2(m: &FeatureMap) -> FeatureMap {
    let ph = m.height / 2;
    let pw = m.width / 2;
    let c = m.channels;
    let mut out = FeatureMap::zeros(ph, pw, c);
    for y in 0..ph {
        for x in 0..pw {
            for ch in 0..c {
                let s = m.get(2 * x, 2 * y, ch)
                    + m.get(2 * x + 1, 2 * y, ch)
                    + m.get(2 * x, 2 * y + 1, ch)
                    + m.get(2 * x + 1, 2 * y + 1, ch);
                out.set(x, y, ch, s * 0.25);
            }
        }
    }
    out
}

/// Adjoint of [`pool2x2`]: distributes each pooled gradient evenly over its
/// 2x2 source cells (dropped odd rows/columns receive zero).
fn unpool2x2(g_pool: &FeatureMap, out_h: usize, out_w: usize) -> FeatureMap {
    let c = g_pool.channels;
    let mut out = FeatureMap::zeros(out_h, out_w, c);
    for y in 0..g_pool.height {
        for x in 0..g_pool.width {
            for ch in 0..c {
                let g = g_pool.get(x, y, ch) * 0.25;
                out.set(2 * x, 2 * y, ch, g);
                out.set(2 * x + 1, 2 * y, ch, g);
                out.set(2 * x, 2 * y + 1, ch, g);
                out.set(2 * x + 1, 2 * y + 1, ch, g);
            }
        }
    }
    out
}
