//! Frame and motion-field file I/O.
//!
//! Frames are read and written as 8-bit PNG, PPM (P6) or PGM (P5). Writing
//! clamps samples into `[0, 1]` and quantizes with round-half-up, so `0.5`
//! maps to byte `128`. Reading maps byte `b` to `b / 255`.
//!
//! Motion fields use the common `.flo` layout: a 32-bit float magic
//! (`202021.25`), 32-bit signed width and height, then `width * height`
//! interleaved `(u, v)` pairs of 32-bit floats, all little-endian, row-major
//! from the top-left. Values are stored as `f32`; reading widens to `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageEncoder};

use crate::error::SdcError;
use crate::flow::FlowField;
use crate::frame::Frame;

/// Bit-exact magic number leading every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Largest width/height accepted when reading a `.flo` file. Guards the
/// allocation against corrupt headers.
const FLO_MAX_DIM: i32 = 1 << 16;

/// Clamps into `[0, 1]` and quantizes to a byte with round-half-up:
/// `floor(v * 255 + 0.5)`.
#[inline]
pub fn quantize_unit_to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn io_err(path: &Path, source: std::io::Error) -> SdcError {
    SdcError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn image_err(path: &Path, source: image::ImageError) -> SdcError {
    SdcError::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an 8-bit image as a frame with samples in `[0, 1]`.
///
/// Grayscale files load as 1-channel frames; everything else is converted
/// to RGB and loads as 3 channels.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame, SdcError> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (gray, bytes, w, h): (bool, Vec<u8>, u32, u32) = match &img {
        DynamicImage::ImageLuma8(g) => (true, g.as_raw().clone(), g.width(), g.height()),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            (true, g.as_raw().clone(), g.width(), g.height())
        }
        _ => {
            let rgb = img.to_rgb8();
            (false, rgb.as_raw().clone(), rgb.width(), rgb.height())
        }
    };
    let channels = if gray { 1 } else { 3 };
    let data: Vec<f64> = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Frame::from_vec(h as usize, w as usize, channels, data)
}

/// Saves a frame as an 8-bit image. The format follows the extension:
/// `.png`, `.ppm` (P6, binary) or `.pgm` (P5, binary).
///
/// 1-channel frames written to `.ppm` are replicated to RGB; 3-channel
/// frames written to `.pgm` are rejected rather than silently collapsed.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<(), SdcError> {
    let path = path.as_ref();
    let channels = frame.channels();
    if channels != 1 && channels != 3 {
        return Err(SdcError::UnsupportedChannels {
            channels,
            context: "image files support 1 (gray) or 3 (rgb) channels".into(),
        });
    }
    let w = frame.width() as u32;
    let h = frame.height() as u32;
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize_unit_to_u8(v)).collect();

    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();

    match ext.as_str() {
        "ppm" => {
            let rgb = if channels == 3 {
                bytes
            } else {
                bytes.iter().flat_map(|&b| [b, b, b]).collect()
            };
            let file = File::create(path).map_err(|e| io_err(path, e))?;
            let enc = PnmEncoder::new(BufWriter::new(file))
                .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary));
            enc.write_image(&rgb, w, h, image::ExtendedColorType::Rgb8)
                .map_err(|e| image_err(path, e))
        }
        "pgm" => {
            if channels != 1 {
                return Err(SdcError::UnsupportedChannels {
                    channels,
                    context: "pgm stores grayscale; convert or use .ppm/.png".into(),
                });
            }
            let file = File::create(path).map_err(|e| io_err(path, e))?;
            let enc = PnmEncoder::new(BufWriter::new(file))
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
            enc.write_image(&bytes, w, h, image::ExtendedColorType::L8)
                .map_err(|e| image_err(path, e))
        }
        _ => {
            // PNG (and anything else image-rs can infer from the extension).
            let color = if channels == 3 {
                image::ExtendedColorType::Rgb8
            } else {
                image::ExtendedColorType::L8
            };
            image::save_buffer(path, &bytes, w, h, color).map_err(|e| image_err(path, e))
        }
    }
}

/// Reads a `.flo` motion field.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, SdcError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(|e| io_err(path, e))?;
    let magic = f32::from_le_bytes(head[0..4].try_into().unwrap());
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(SdcError::MalformedFile {
            path: path.to_path_buf(),
            reason: format!("bad magic {magic}, expected {FLO_MAGIC}"),
        });
    }
    let w = i32::from_le_bytes(head[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(head[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > FLO_MAX_DIM || h > FLO_MAX_DIM {
        return Err(SdcError::MalformedFile {
            path: path.to_path_buf(),
            reason: format!("implausible dimensions {w}x{h}"),
        });
    }
    let (w, h) = (w as usize, h as usize);

    let mut payload = vec![0u8; w * h * 2 * 4];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            return std::io::Error::new(e.kind(), "file shorter than header promises");
        }
        e
    })
    .map_err(|e| io_err(path, e))?;

    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    FlowField::from_vec(h, w, data)
}

/// Writes a motion field as `.flo`. Displacements are narrowed to `f32`.
pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<(), SdcError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);

    w.write_all(&FLO_MAGIC.to_le_bytes())
        .and_then(|_| w.write_all(&(flow.width() as i32).to_le_bytes()))
        .and_then(|_| w.write_all(&(flow.height() as i32).to_le_bytes()))
        .map_err(|e| io_err(path, e))?;
    for &v in flow.data() {
        w.write_all(&(v as f32).to_le_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
