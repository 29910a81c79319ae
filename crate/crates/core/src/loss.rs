//! Training losses over pixels, features and kernel parameters.
//!
//! Pixel losses (`loss_l1`, `loss_l2`) are *means* over all elements so
//! their magnitude is resolution-independent and the default fine-tuning
//! weights transfer across image sizes. The kernel-regularization loss
//! keeps its explicit double sum over pixels — its role is per-pixel
//! anchoring, not a resolution-independent score.
//!
//! Feature losses compare images through a [`FeatureExtractor`]: the
//! perceptual loss takes per-level L1 distances between feature maps, the
//! style loss takes per-level L1 distances between Gram matrices; both
//! scale each level by `kappa = 1 / (channels * height * width)` of that
//! level's feature map. The fine-tuning loss combines pixel, style and
//! perceptual terms with configurable weights.
//!
//! Every loss the optimizer consumes has a `_with_grad` variant returning
//! the exact analytic gradient alongside the value.

use crate::error::SdcError;
use crate::features::{FeatureExtractor, FeatureMap};
use crate::flow::FlowField;
use crate::frame::Frame;
use crate::resample::{SeparableKernelField, TransformGradients};

/// Weights of the fine-tuning loss `w_l * L1 + w_s * style + w_p * perceptual`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_l: f64,
    pub w_p: f64,
    pub w_s: f64,
}

impl Default for LossWeights {
    /// The established fine-tuning mix: 0.2 pixel, 0.06 perceptual,
    /// 36.0 style.
    fn default() -> Self {
        LossWeights {
            w_l: 0.2,
            w_p: 0.06,
            w_s: 36.0,
        }
    }
}

impl LossWeights {
    /// Errors unless all weights are finite and nonnegative.
    pub fn validate(&self) -> Result<(), SdcError> {
        for (name, v) in [("w_l", self.w_l), ("w_p", self.w_p), ("w_s", self.w_s)] {
            if !v.is_finite() || v < 0.0 {
                return Err(SdcError::BadConfig(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean absolute difference over all `height * width * channels` elements.
pub fn loss_l1(pred: &Frame, target: &Frame) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// [`loss_l1`] plus its gradient with respect to `pred`:
/// `sign(pred - target) / element_count`, with `sign(0) = 0`.
pub fn loss_l1_with_grad(pred: &Frame, target: &Frame) -> Result<(f64, Frame), SdcError> {
    pred.check_same_shape(target)?;
    let inv = 1.0 / pred.data().len() as f64;
    let mut grad = Frame::new(pred.height(), pred.width(), pred.channels())?;
    let mut sum = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d.abs();
        *g = if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        };
    }
    Ok((sum * inv, grad))
}

/// Mean squared difference over all elements.
pub fn loss_l2(pred: &Frame, target: &Frame) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// [`loss_l2`] plus its gradient `2 (pred - target) / element_count`.
pub fn loss_l2_with_grad(pred: &Frame, target: &Frame) -> Result<(f64, Frame), SdcError> {
    pred.check_same_shape(target)?;
    let inv = 1.0 / pred.data().len() as f64;
    let mut grad = Frame::new(pred.height(), pred.width(), pred.channels())?;
    let mut sum = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d * inv;
    }
    Ok((sum * inv, grad))
}

/// Mean squared difference between two motion fields, by reinterpreting
/// them as 2-channel frames. Available for flow-supervision experiments;
/// deliberately absent from the default fitting schedules (supervising on
/// flow rather than pixels produces worse resampling).
pub fn loss_flow_l2(pred: &FlowField, target: &FlowField) -> Result<f64, SdcError> {
    loss_l2(&pred.to_frame(), &target.to_frame())
}

/// Gram matrix of a feature map flattened over spatial positions:
/// `G[c1][c2] = sum_{y,x} F(y,x,c1) * F(y,x,c2)`, returned row-major
/// `channels x channels`. No spatial normalization is applied inside the
/// Gram itself; the per-level `kappa` factor handles scaling.
pub fn gram_matrix(map: &FeatureMap) -> Vec<f64> {
    let c = map.channels();
    let mut g = vec![0.0; c * c];
    for y in 0..map.height() {
        for x in 0..map.width() {
            let base = map.idx(x, y, 0);
            let row = &map.data()[base..base + c];
            for c1 in 0..c {
                let v1 = row[c1];
                if v1 == 0.0 {
                    continue;
                }
                for c2 in 0..c {
                    g[c1 * c + c2] += v1 * row[c2];
                }
            }
        }
    }
    g
}

/// Perceptual loss: `sum_l kappa_l * ||psi_l(pred) - psi_l(target)||_1`
/// where `psi_l` is level `l` of the feature pyramid and `kappa_l` the
/// reciprocal element count of that level's feature map.
pub fn loss_perceptual(
    pred: &Frame,
    target: &Frame,
    extractor: &FeatureExtractor,
) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let fp = extractor.extract(pred)?;
    let ft = extractor.extract(target)?;
    let mut total = 0.0;
    for (p, t) in fp.iter().zip(&ft) {
        let l1: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        total += p.kappa() * l1;
    }
    Ok(total)
}

/// Style loss: `sum_l kappa_l * ||G_l(pred) - G_l(target)||_1` with `G_l`
/// the Gram matrix of level `l`'s feature map.
pub fn loss_style(
    pred: &Frame,
    target: &Frame,
    extractor: &FeatureExtractor,
) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let fp = extractor.extract(pred)?;
    let ft = extractor.extract(target)?;
    let mut total = 0.0;
    for (p, t) in fp.iter().zip(&ft) {
        let gp = gram_matrix(p);
        let gt = gram_matrix(t);
        let l1: f64 = gp.iter().zip(&gt).map(|(a, b)| (a - b).abs()).sum();
        total += p.kappa() * l1;
    }
    Ok(total)
}

/// Fine-tuning loss `w_l * L1 + w_s * style + w_p * perceptual`.
pub fn loss_finetune(
    pred: &Frame,
    target: &Frame,
    extractor: &FeatureExtractor,
    weights: &LossWeights,
) -> Result<f64, SdcError> {
    weights.validate()?;
    Ok(weights.w_l * loss_l1(pred, target)?
        + weights.w_s * loss_style(pred, target, extractor)?
        + weights.w_p * loss_perceptual(pred, target, extractor)?)
}

/// [`loss_finetune`] plus its gradient with respect to `pred`.
///
/// The perceptual and style terms share one forward trace of `pred` and a
/// single backward pass: per level, the combined feature gradient is
/// `w_p * kappa * sign(psi_p - psi_t) + w_s * kappa * 2 * D * psi_p`
/// with `D = sign(G_pred - G_target)` (the factor 2 reflects the Gram
/// matrix's symmetric dependence on the features).
pub fn loss_finetune_with_grad(
    pred: &Frame,
    target: &Frame,
    extractor: &FeatureExtractor,
    weights: &LossWeights,
) -> Result<(f64, Frame), SdcError> {
    weights.validate()?;
    let (l1, l1_grad) = loss_l1_with_grad(pred, target)?;

    let trace = extractor.forward_trace(pred)?;
    let ft = extractor.extract(target)?;

    let mut perceptual = 0.0;
    let mut style = 0.0;
    let mut level_grads = Vec::with_capacity(trace.features.len());
    for (p, t) in trace.features.iter().zip(&ft) {
        let kappa = p.kappa();
        let c = p.channels();

        // Perceptual term and its feature gradient.
        let mut g = FeatureMap::zeros(p.height(), p.width(), c);
        let mut l1_feat = 0.0;
        for ((gv, &a), &b) in g.data_mut().iter_mut().zip(p.data()).zip(t.data()) {
            let d = a - b;
            l1_feat += d.abs();
            *gv = weights.w_p
                * kappa
                * if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
        }
        perceptual += kappa * l1_feat;

        // Style term: D = sign(G_p - G_t); dL/dF = 2 kappa D F.
        let gp = gram_matrix(p);
        let gt = gram_matrix(t);
        let mut d = vec![0.0; c * c];
        let mut l1_gram = 0.0;
        for (k, (a, b)) in gp.iter().zip(&gt).enumerate() {
            let diff = a - b;
            l1_gram += diff.abs();
            d[k] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        style += kappa * l1_gram;
        let style_scale = weights.w_s * kappa * 2.0;
        for y in 0..p.height() {
            for x in 0..p.width() {
                let base = p.idx(x, y, 0);
                let feat_row = &p.data()[base..base + c];
                let grad_row = &mut g.data_mut()[base..base + c];
                for c1 in 0..c {
                    let mut acc = 0.0;
                    for c2 in 0..c {
                        acc += d[c1 * c + c2] * feat_row[c2];
                    }
                    grad_row[c1] += style_scale * acc;
                }
            }
        }

        level_grads.push(g);
    }

    let feat_grad = extractor.backward(&trace, &level_grads)?;
    let mut grad = feat_grad;
    for (g, &l) in grad.data_mut().iter_mut().zip(l1_grad.data()) {
        *g += weights.w_l * l;
    }
    let value = weights.w_l * l1 + weights.w_s * style + weights.w_p * perceptual;
    Ok((value, grad))
}

/// Kernel-regularization loss: the exact double sum over pixels of the
/// squared L2 distance of each 1D kernel pair to the middle-one-hot vector.
/// Zero iff every kernel is exactly middle-one-hot.
pub fn loss_kernel_init(kernels: &SeparableKernelField) -> f64 {
    let n = kernels.n();
    let mid = n / 2;
    let mut total = 0.0;
    for buf in [kernels.ku(), kernels.kv()] {
        for (idx, &w) in buf.iter().enumerate() {
            let target = if idx % n == mid { 1.0 } else { 0.0 };
            let d = w - target;
            total += d * d;
        }
    }
    total
}

/// [`loss_kernel_init`] plus its gradient `2 * (k - onehot)` packed into a
/// [`TransformGradients`] whose motion entries are zero (this loss never
/// touches motion).
pub fn loss_kernel_init_with_grad(
    kernels: &SeparableKernelField,
) -> (f64, TransformGradients) {
    let n = kernels.n();
    let mid = n / 2;
    let mut grads = TransformGradients::zeros(kernels.height(), kernels.width(), n)
        .expect("kernel field dimensions are valid by construction");
    let mut total = 0.0;
    for (buf, out) in [
        (kernels.ku(), &mut grads.d_ku),
        (kernels.kv(), &mut grads.d_kv),
    ] {
        for (idx, (&w, g)) in buf.iter().zip(out.iter_mut()).enumerate() {
            let target = if idx % n == mid { 1.0 } else { 0.0 };
            let d = w - target;
            total += d * d;
            *g = 2.0 * d;
        }
    }
    (total, grads)
}
