//! The three resampling operators and their parameter gradients.
//!
//! All three synthesize an output frame pixel-by-pixel from a source frame:
//!
//! - [`warp_vector`]: each output pixel is one bilinear sample of the source
//!   at a per-pixel displaced location `(x + u, y + v)`.
//! - [`warp_kernel`]: each output pixel is a weighted sum of the `N x N`
//!   integer-tap patch centered at `(x, y)`, with per-pixel weights.
//! - [`warp_sdc`]: spatially-displaced convolution — the per-pixel kernel is
//!   applied to the patch centered at the *displaced, sub-pixel* location
//!   `(x + u, y + v)`, each tap bilinearly sampled from the original source.
//!
//! SDC degenerates to the other two: middle-one-hot kernels reduce it to
//! [`warp_vector`], zero motion reduces it to [`warp_kernel`]. It is *not*
//! the composition of the two — the taps sample the original frame, not a
//! pre-warped copy, which differs near image borders and wherever the
//! parameters vary across pixels.
//!
//! Conventions shared by every operator:
//!
//! - Backward sampling: output `(x, y)` *reads* the source at the displaced
//!   location; content moving right is described by negative `u`.
//! - Tap weights gather without a kernel flip (cross-correlation); learned
//!   weights absorb orientation.
//! - Out-of-bounds reads clamp to the nearest edge pixel, so every operator
//!   is total.
//! - Kernel weights are unconstrained: no normalization or non-negativity
//!   is enforced; regularization is the optimizer's concern.
//! - Determinism: outputs are bitwise-identical across runs and thread
//!   counts. Parallelism is over disjoint output rows, and each output value
//!   is accumulated in a fixed sequential order.

mod backward;
mod sampler;
mod serialize;
mod warp;

pub use backward::sdc_backward;
pub use sampler::{bilinear_sample, bilinear_sample_with_grad};
pub use serialize::{params_from_motion, read_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use warp::{expand_separable, warp_kernel, warp_sdc, warp_vector};

use crate::error::SdcError;
use crate::flow::FlowField;

/// Per-pixel displacement field used as a *learned transformation
/// parameter* rather than an observed optical-flow signal. Same layout and
/// backward-sampling convention as [`FlowField`]; fitted motion is free to
/// deviate from the scene's true motion wherever that reproduces the target
/// better (disocclusions being the canonical case).
pub type MotionField = FlowField;

/// Per-pixel pair of length-`n` 1D kernels. The horizontal kernel `ku` and
/// vertical kernel `kv` of a pixel form its 2D sampling kernel by outer
/// product, so each pixel carries `2n` weights instead of `n^2`.
///
/// `n` must be odd so the kernel has a center tap. Weights are stored
/// row-major per pixel: `ku[(y * width + x) * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernelField {
    height: usize,
    width: usize,
    n: usize,
    ku: Vec<f64>,
    kv: Vec<f64>,
}

impl SeparableKernelField {
    fn validated(height: usize, width: usize, n: usize) -> Result<(), SdcError> {
        if height == 0 || width == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "kernel field dimensions must be positive, got {height}x{width}"
            )));
        }
        if n == 0 || n % 2 == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "kernel length must be odd and >= 1, got {n}"
            )));
        }
        Ok(())
    }

    /// All-zero kernels (useful as a gradient buffer or fitting scratch).
    pub fn zeros(height: usize, width: usize, n: usize) -> Result<Self, SdcError> {
        Self::validated(height, width, n)?;
        Ok(SeparableKernelField {
            height,
            width,
            n,
            ku: vec![0.0; height * width * n],
            kv: vec![0.0; height * width * n],
        })
    }

    /// Kernels that pass the center tap through unchanged: every `ku` and
    /// `kv` is 1 at index `n/2` and 0 elsewhere. These make the kernel and
    /// SDC operators act as pure samplers.
    pub fn middle_one_hot(height: usize, width: usize, n: usize) -> Result<Self, SdcError> {
        let mut f = Self::zeros(height, width, n)?;
        let mid = n / 2;
        for p in 0..height * width {
            f.ku[p * n + mid] = 1.0;
            f.kv[p * n + mid] = 1.0;
        }
        Ok(f)
    }

    /// Wraps existing weight buffers; both must hold `height * width * n`
    /// values in per-pixel row-major order.
    pub fn from_parts(
        height: usize,
        width: usize,
        n: usize,
        ku: Vec<f64>,
        kv: Vec<f64>,
    ) -> Result<Self, SdcError> {
        Self::validated(height, width, n)?;
        let want = height * width * n;
        if ku.len() != want || kv.len() != want {
            return Err(SdcError::shape(
                format!("{height}x{width}x{n} = {want} weights per direction"),
                format!("ku {} / kv {}", ku.len(), kv.len()),
            ));
        }
        Ok(SeparableKernelField {
            height,
            width,
            n,
            ku,
            kv,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Kernel length (odd).
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn base(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.n
    }

    /// Horizontal kernel of pixel `(x, y)`.
    #[inline]
    pub fn ku_at(&self, x: usize, y: usize) -> &[f64] {
        let b = self.base(x, y);
        &self.ku[b..b + self.n]
    }

    /// Vertical kernel of pixel `(x, y)`.
    #[inline]
    pub fn kv_at(&self, x: usize, y: usize) -> &[f64] {
        let b = self.base(x, y);
        &self.kv[b..b + self.n]
    }

    pub fn ku_at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let b = self.base(x, y);
        &mut self.ku[b..b + self.n]
    }

    pub fn kv_at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let b = self.base(x, y);
        &mut self.kv[b..b + self.n]
    }

    /// Full horizontal-weight buffer.
    pub fn ku(&self) -> &[f64] {
        &self.ku
    }

    /// Full vertical-weight buffer.
    pub fn kv(&self) -> &[f64] {
        &self.kv
    }

    pub fn ku_mut(&mut self) -> &mut [f64] {
        &mut self.ku
    }

    pub fn kv_mut(&mut self) -> &mut [f64] {
        &mut self.kv
    }
}

/// Dense per-pixel `n x n` kernels, the expanded (non-separable) form.
/// Weights are stored as `weights[((y * width + x) * n + i) * n + j]` with
/// `i` the vertical tap index and `j` the horizontal one.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField2D {
    height: usize,
    width: usize,
    n: usize,
    weights: Vec<f64>,
}

impl KernelField2D {
    pub fn zeros(height: usize, width: usize, n: usize) -> Result<Self, SdcError> {
        SeparableKernelField::validated(height, width, n)?;
        Ok(KernelField2D {
            height,
            width,
            n,
            weights: vec![0.0; height * width * n * n],
        })
    }

    /// Wraps an existing weight buffer of `height * width * n * n` values.
    pub fn from_vec(
        height: usize,
        width: usize,
        n: usize,
        weights: Vec<f64>,
    ) -> Result<Self, SdcError> {
        SeparableKernelField::validated(height, width, n)?;
        let want = height * width * n * n;
        if weights.len() != want {
            return Err(SdcError::shape(
                format!("{height}x{width}x{n}x{n} = {want}"),
                format!("buffer of {}", weights.len()),
            ));
        }
        Ok(KernelField2D {
            height,
            width,
            n,
            weights,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The `n x n` kernel of pixel `(x, y)`, row-major (`i` outer, `j` inner).
    #[inline]
    pub fn kernel_at(&self, x: usize, y: usize) -> &[f64] {
        let b = (y * self.width + x) * self.n * self.n;
        &self.weights[b..b + self.n * self.n]
    }

    pub fn kernel_at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let b = (y * self.width + x) * self.n * self.n;
        &mut self.weights[b..b + self.n * self.n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The free variables of the SDC operator: a motion field plus a separable
/// kernel field of matching dimensions — `2n + 2` scalars per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    pub motion: MotionField,
    pub kernels: SeparableKernelField,
}

impl TransformParams {
    /// Bundles motion and kernels, checking that their grids agree.
    pub fn new(motion: MotionField, kernels: SeparableKernelField) -> Result<Self, SdcError> {
        if motion.shape() != (kernels.height(), kernels.width()) {
            return Err(SdcError::shape(
                format!("motion {:?}", motion.shape()),
                format!("kernels {}x{}", kernels.height(), kernels.width()),
            ));
        }
        Ok(TransformParams { motion, kernels })
    }

    /// The parameters that make [`warp_sdc`] the identity: zero motion and
    /// middle-one-hot kernels.
    pub fn identity(height: usize, width: usize, n: usize) -> Result<Self, SdcError> {
        Ok(TransformParams {
            motion: MotionField::new(height, width)?,
            kernels: SeparableKernelField::middle_one_hot(height, width, n)?,
        })
    }

    pub fn height(&self) -> usize {
        self.kernels.height()
    }

    pub fn width(&self) -> usize {
        self.kernels.width()
    }

    pub fn n(&self) -> usize {
        self.kernels.n()
    }

    /// Total scalar count: `height * width * (2n + 2)`.
    pub fn param_count(&self) -> usize {
        self.height() * self.width() * (2 * self.n() + 2)
    }

    /// Flattens into one parameter vector in the fixed order
    /// `u | v | ku | kv` (the same order the binary file format uses).
    /// The optimizer treats this vector as its free variables; motion
    /// occupies the leading `2 * height * width` slots, kernels the rest.
    pub fn to_flat(&self) -> Vec<f64> {
        let hw = self.height() * self.width();
        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend(self.motion.data().iter().step_by(2)); // u
        flat.extend(self.motion.data().iter().skip(1).step_by(2)); // v
        flat.extend_from_slice(self.kernels.ku());
        flat.extend_from_slice(self.kernels.kv());
        debug_assert_eq!(flat.len(), hw * (2 * self.n() + 2));
        flat
    }

    /// Inverse of [`TransformParams::to_flat`].
    pub fn from_flat(
        height: usize,
        width: usize,
        n: usize,
        flat: &[f64],
    ) -> Result<Self, SdcError> {
        let hw = height * width;
        let want = hw * (2 * n + 2);
        if flat.len() != want {
            return Err(SdcError::shape(
                format!("{height}x{width} n={n} -> {want} scalars"),
                format!("{}", flat.len()),
            ));
        }
        let mut motion = MotionField::new(height, width)?;
        {
            let m = motion.data_mut();
            for p in 0..hw {
                m[p * 2] = flat[p];
                m[p * 2 + 1] = flat[hw + p];
            }
        }
        let ku = flat[2 * hw..2 * hw + hw * n].to_vec();
        let kv = flat[2 * hw + hw * n..].to_vec();
        let kernels = SeparableKernelField::from_parts(height, width, n, ku, kv)?;
        TransformParams::new(motion, kernels)
    }
}

/// Partial derivatives of a scalar objective with respect to every
/// [`TransformParams`] entry. Layouts mirror the parameter layouts:
/// `d_u`/`d_v` are `height * width`, `d_ku`/`d_kv` are
/// `height * width * n` in per-pixel row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGradients {
    height: usize,
    width: usize,
    n: usize,
    pub d_u: Vec<f64>,
    pub d_v: Vec<f64>,
    pub d_ku: Vec<f64>,
    pub d_kv: Vec<f64>,
}

impl TransformGradients {
    pub fn zeros(height: usize, width: usize, n: usize) -> Result<Self, SdcError> {
        SeparableKernelField::validated(height, width, n)?;
        Ok(TransformGradients {
            height,
            width,
            n,
            d_u: vec![0.0; height * width],
            d_v: vec![0.0; height * width],
            d_ku: vec![0.0; height * width * n],
            d_kv: vec![0.0; height * width * n],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Flattens in the same `u | v | ku | kv` order as
    /// [`TransformParams::to_flat`], so gradient and parameter vectors
    /// align index-by-index.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat =
            Vec::with_capacity(self.height * self.width * (2 * self.n + 2));
        flat.extend_from_slice(&self.d_u);
        flat.extend_from_slice(&self.d_v);
        flat.extend_from_slice(&self.d_ku);
        flat.extend_from_slice(&self.d_kv);
        flat
    }

    /// True when every component is finite.
    pub fn all_finite(&self) -> bool {
        self.d_u
            .iter()
            .chain(&self.d_v)
            .chain(&self.d_ku)
            .chain(&self.d_kv)
            .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_field_rejects_even_or_zero_n() {
        assert!(SeparableKernelField::zeros(2, 2, 2).is_err());
        assert!(SeparableKernelField::zeros(2, 2, 0).is_err());
        assert!(SeparableKernelField::zeros(2, 2, 1).is_ok());
        assert!(SeparableKernelField::zeros(2, 2, 11).is_ok());
    }

    #[test]
    fn middle_one_hot_puts_single_one_at_center() {
        let k = SeparableKernelField::middle_one_hot(1, 2, 5).unwrap();
        for x in 0..2 {
            assert_eq!(k.ku_at(x, 0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
            assert_eq!(k.kv_at(x, 0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn param_count_is_2n_plus_2_per_pixel() {
        for (h, w, n) in [(1, 1, 1), (3, 4, 3), (16, 16, 11), (7, 5, 51)] {
            let p = TransformParams::identity(h, w, n).unwrap();
            assert_eq!(p.param_count(), h * w * (2 * n + 2));
            assert_eq!(p.to_flat().len(), p.param_count());
        }
    }

    #[test]
    fn flat_roundtrip_preserves_every_scalar() {
        let mut p = TransformParams::identity(3, 4, 3).unwrap();
        // Make every parameter distinct so ordering mistakes can't hide.
        let mut c = 0.0;
        for y in 0..3 {
            for x in 0..4 {
                p.motion.set(x, y, c, c + 0.5);
                c += 1.0;
                for j in 0..3 {
                    p.kernels.ku_at_mut(x, y)[j] = c + j as f64 * 0.1;
                    p.kernels.kv_at_mut(x, y)[j] = -c - j as f64 * 0.1;
                }
                c += 1.0;
            }
        }
        let flat = p.to_flat();
        let q = TransformParams::from_flat(3, 4, 3, &flat).unwrap();
        assert_eq!(p, q);

        // Flat order is u-block, v-block, ku, kv.
        let hw = 12;
        assert_eq!(flat[0], p.motion.get(0, 0).0);
        assert_eq!(flat[hw], p.motion.get(0, 0).1);
        assert_eq!(flat[2 * hw], p.kernels.ku_at(0, 0)[0]);
        assert_eq!(flat[2 * hw + hw * 3], p.kernels.kv_at(0, 0)[0]);
    }

    #[test]
    fn params_reject_mismatched_grids() {
        let motion = MotionField::new(2, 3).unwrap();
        let kernels = SeparableKernelField::middle_one_hot(3, 2, 3).unwrap();
        assert!(TransformParams::new(motion, kernels).is_err());
    }

    #[test]
    fn gradients_flatten_in_parameter_order() {
        let mut g = TransformGradients::zeros(1, 2, 3).unwrap();
        g.d_u = vec![1.0, 2.0];
        g.d_v = vec![3.0, 4.0];
        g.d_ku = vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        g.d_kv = vec![11.0, 12.0, 13.0, 14.0, 15.0, 16.0];
        let flat = g.to_flat();
        assert_eq!(flat.len(), 1 * 2 * (2 * 3 + 2));
        assert_eq!(&flat[0..2], &[1.0, 2.0]);
        assert_eq!(&flat[2..4], &[3.0, 4.0]);
        assert_eq!(&flat[4..10], &[5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(&flat[10..16], &[11.0, 12.0, 13.0, 14.0, 15.0, 16.0]);
    }
}
