//! Binary serialization of fitted transform parameters.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size            field
//! 0       4               magic  b"SDCP"
//! 4       4               height (u32)
//! 8       4               width  (u32)
//! 12      4               n      (u32, odd)
//! 16      4               version (u32, currently 1)
//! 20      H*W*4           u      (f32 each, row-major)
//! ...     H*W*4           v
//! ...     H*W*N*4         ku     (per-pixel row-major)
//! ...     H*W*N*4         kv
//! ```
//!
//! Parameters are stored as `f32`; reading widens back to `f64`. A write →
//! read round trip is lossless exactly when the parameter values are
//! representable in `f32`, which holds for files this module wrote.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::SdcError;
use crate::resample::{MotionField, SeparableKernelField, TransformParams};

/// Leading bytes of every parameter file.
pub const PARAMS_MAGIC: [u8; 4] = *b"SDCP";

/// Current file format version.
pub const PARAMS_VERSION: u32 = 1;

/// Largest width/height accepted when reading; guards allocations against
/// corrupt headers.
const MAX_DIM: u32 = 1 << 16;

fn io_err(path: &Path, source: std::io::Error) -> SdcError {
    SdcError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> SdcError {
    SdcError::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes transform parameters in the flat binary layout above.
pub fn write_params(params: &TransformParams, path: impl AsRef<Path>) -> Result<(), SdcError> {
    let path = path.as_ref();
    let (h, w, n) = (params.height(), params.width(), params.n());

    let mut bytes =
        Vec::with_capacity(20 + params.param_count() * std::mem::size_of::<f32>());
    bytes.extend_from_slice(&PARAMS_MAGIC);
    bytes.extend_from_slice(&(h as u32).to_le_bytes());
    bytes.extend_from_slice(&(w as u32).to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    // to_flat already yields the file's u | v | ku | kv order.
    for v in params.to_flat() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }

    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Reads transform parameters written by [`write_params`].
pub fn read_params(path: impl AsRef<Path>) -> Result<TransformParams, SdcError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut head = [0u8; 20];
    r.read_exact(&mut head).map_err(|e| io_err(path, e))?;
    if head[0..4] != PARAMS_MAGIC {
        return Err(malformed(path, "bad magic, not a parameter file"));
    }
    let h = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let w = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let n = u32::from_le_bytes(head[12..16].try_into().unwrap());
    let version = u32::from_le_bytes(head[16..20].try_into().unwrap());
    if version != PARAMS_VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    if h == 0 || w == 0 || h > MAX_DIM || w > MAX_DIM {
        return Err(malformed(path, format!("implausible dimensions {w}x{h}")));
    }
    if n == 0 || n % 2 == 0 || n > MAX_DIM {
        return Err(malformed(path, format!("kernel length {n} must be odd")));
    }
    let (h, w, n) = (h as usize, w as usize, n as usize);

    let count = h * w * (2 * n + 2);
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload).map_err(|e| io_err(path, e))?;
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(malformed(path, "trailing data after parameter arrays")),
        Err(e) => return Err(io_err(path, e)),
    }

    let flat: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    TransformParams::from_flat(h, w, n, &flat)
}

/// Builds parameters that make [`crate::resample::warp_sdc`] behave as a
/// pure vector warp along the given motion: the motion field is adopted
/// as-is and kernels are middle-one-hot. Used by the CLI to accept a plain
/// motion field where fitted parameters are expected.
pub fn params_from_motion(motion: MotionField, n: usize) -> Result<TransformParams, SdcError> {
    let kernels = SeparableKernelField::middle_one_hot(motion.height(), motion.width(), n)?;
    TransformParams::new(motion, kernels)
}
