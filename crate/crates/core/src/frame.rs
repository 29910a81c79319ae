//! Dense image container.

use crate::error::SdcError;

/// A dense `height x width x channels` image in row-major, channel-minor
/// order: the sample at column `x`, row `y`, channel `c` lives at
/// `(y * width + x) * channels + c`.
///
/// Pixel values are floating point and nominally in `[0, 1]`; intermediate
/// results of warping or optimization may leave that range and are only
/// clamped when written to an 8-bit image file.
///
/// All internal math is `f64`. Frames are cheap to clone relative to the
/// dense per-pixel work done on them, so the API favors value semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Creates an all-zero frame.
    ///
    /// Returns an error if any dimension is zero.
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Frame, SdcError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "frame dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        })
    }

    /// Wraps an existing buffer. `data.len()` must equal
    /// `height * width * channels`.
    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Frame, SdcError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(SdcError::InvalidDimensions(format!(
                "frame dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(SdcError::shape(
                format!("{height}x{width}x{channels} = {}", height * width * channels),
                format!("buffer of {}", data.len()),
            ));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data,
        })
    }

    /// Frame filled with a constant value.
    pub fn splat(height: usize, width: usize, channels: usize, value: f64) -> Result<Frame, SdcError> {
        let mut f = Frame::new(height, width, channels)?;
        f.data.fill(value);
        Ok(f)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)` in one call, for shape checks.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Linear index of `(x, y, c)`.
    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    /// Sample at `(x, y, c)`. Panics if out of bounds (debug-friendly: the
    /// hot paths below do their own bounds reasoning and use raw indexing).
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = value;
    }

    /// Read-only view of the raw buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the raw buffer.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The buffer split into rows of `width * channels` samples each.
    /// Useful for row-parallel writes.
    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.width * self.channels)
    }

    /// True if the other frame has identical dimensions.
    pub fn same_shape(&self, other: &Frame) -> bool {
        self.shape() == other.shape()
    }

    /// Errors unless both frames share a shape; used as a guard by
    /// binary operations.
    pub fn check_same_shape(&self, other: &Frame) -> Result<(), SdcError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(SdcError::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    /// Clamps every sample into `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}
