//! Parameter-memory estimates for the three resampling methods.

/// Bytes needed to store one dense displaced-convolution parameter set:
/// two displacement components plus two length-`n` kernel vectors per
/// pixel.
pub fn memory_estimate(width: usize, height: usize, n: usize, bytes_per_element: usize) -> u64 {
    width as u64 * height as u64 * (2 * n as u64 + 2) * bytes_per_element as u64
}

/// Parameter memory of all three methods at the same resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBreakdown {
    /// Displacement + two separable kernel vectors: `W*H*(2N+2)` elements.
    pub sdc: u64,
    /// Full two-dimensional kernels: `W*H*N^2` elements.
    pub kernel2d: u64,
    /// Displacement only: `W*H*2` elements.
    pub vector: u64,
}

pub fn memory_breakdown(
    width: usize,
    height: usize,
    n: usize,
    bytes_per_element: usize,
) -> MemoryBreakdown {
    let px = width as u64 * height as u64;
    let b = bytes_per_element as u64;
    MemoryBreakdown {
        sdc: memory_estimate(width, height, n, bytes_per_element),
        kernel2d: px * (n as u64 * n as u64) * b,
        vector: px * 2 * b,
    }
}
