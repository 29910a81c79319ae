//! Dense motion field container.

use crate::error::SdcError;
use crate::frame::Frame;

/// A dense per-pixel motion field of `(u, v)` displacements in pixels.
///
/// The convention throughout this crate is *backward* sampling: when a warp
/// produces output pixel `(x, y)`, it reads the source image at
/// `(x + u, y + v)`. An object moving one pixel to the right per frame is
/// therefore described, on the pixels it newly covers, by `u = -1`.
///
/// Storage is row-major with `u` and `v` interleaved:
/// `(y * width + x) * 2` holds `u`, `... + 1` holds `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FlowField {
    /// All-zero (identity) motion field.
    pub fn new(height: usize, width: usize) -> Result<FlowField, SdcError> {
        if height == 0 || width == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "flow dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(FlowField {
            height,
            width,
            data: vec![0.0; height * width * 2],
        })
    }

    /// Wraps an interleaved `(u, v)` buffer of length `height * width * 2`.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<FlowField, SdcError> {
        if height == 0 || width == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "flow dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 2 {
            return Err(SdcError::shape(
                format!("{height}x{width}x2 = {}", height * width * 2),
                format!("buffer of {}", data.len()),
            ));
        }
        Ok(FlowField {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * 2
    }

    /// `(u, v)` at `(x, y)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = self.idx(x, y);
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        let i = self.idx(x, y);
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    /// Read-only view of the interleaved buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the interleaved buffer.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterprets the field as a 2-channel frame (channel 0 = `u`,
    /// channel 1 = `v`), sharing the same memory layout. Lets flow fields
    /// feed image-space losses during fitting diagnostics.
    pub fn to_frame(&self) -> Frame {
        Frame::from_vec(self.height, self.width, 2, self.data.clone())
            .expect("flow buffer length matches frame shape by construction")
    }

    /// Inverse of [`FlowField::to_frame`]: interprets a 2-channel frame as a
    /// motion field.
    pub fn from_frame(frame: &Frame) -> Result<FlowField, SdcError> {
        if frame.channels() != 2 {
            return Err(SdcError::UnsupportedChannels {
                channels: frame.channels(),
                context: "motion field frames must have exactly 2 channels (u, v)".into(),
            });
        }
        FlowField::from_vec(frame.height(), frame.width(), frame.data().to_vec())
    }
}
