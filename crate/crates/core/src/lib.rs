//! Differentiable frame synthesis by resampling.
//!
//! This crate implements three resampling operators that synthesize a new
//! image from an existing one — per-pixel vector warping, per-pixel kernel
//! convolution, and spatially-displaced convolution (SDC), which applies a
//! per-pixel kernel at a per-pixel displaced location — together with the
//! machinery needed to *fit* those resampling parameters directly against a
//! target frame: analytic gradients, feature/style losses, an Adam optimizer,
//! and a phased fitting driver.
//!
//! The crate is organized bottom-up:
//!
//! - [`frame`] / [`flow`]: dense image and motion-field containers.
//! - [`image_io`]: PNG/PPM frame I/O and `.flo` motion-field I/O.
//! - [`synth`]: synthetic test scenes with known ground-truth motion.
//! - [`resample`]: the three warp operators and their gradients.
//! - [`features`]: a small fixed-weight convolutional feature extractor.
//! - [`loss`]: pixel, perceptual, style and kernel-regularization losses.
//! - [`metrics`]: PSNR and SSIM.
//! - [`optimize`]: Adam, fit schedules, and the fitting loop.
//! - [`pipeline`]: flow estimation, next-frame prediction, method comparison.
//!
//! All dense math runs in `f64`; file formats that store 32-bit floats
//! (`.flo`, fitted-parameter files) convert at the boundary.

pub mod error;
pub mod features;
pub mod flow;
pub mod frame;
pub mod image_io;
pub mod loss;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod resample;
pub mod synth;

pub use error::SdcError;
pub use flow::FlowField;
pub use frame::Frame;
pub use resample::{
    KernelField2D, MotionField, SeparableKernelField, TransformGradients, TransformParams,
};
