//! Bilinear sampling with edge clamping, plus its spatial derivative.

use crate::frame::Frame;

/// Resolves the four neighbors and blend fractions for a clamped bilinear
/// read at `(x, y)`. Shared by the value and derivative paths so the two
/// can never disagree about which cell a coordinate falls in.
#[inline]
fn cell(frame: &Frame, x: f64, y: f64) -> (usize, usize, usize, usize, f64, f64) {
    let max_x = (frame.width() - 1) as f64;
    let max_y = (frame.height() - 1) as f64;
    let cx = x.clamp(0.0, max_x);
    let cy = y.clamp(0.0, max_y);
    let x0 = cx.floor() as usize;
    let y0 = cy.floor() as usize;
    let x1 = (x0 + 1).min(frame.width() - 1);
    let y1 = (y0 + 1).min(frame.height() - 1);
    (x0, y0, x1, y1, cx - x0 as f64, cy - y0 as f64)
}

/// Bilinear sample of channel `c` at real coordinates `(x, y)`.
///
/// Coordinates are clamped into `[0, width-1] x [0, height-1]` first, so the
/// function is total: reads beyond the border return (blends of) the nearest
/// edge pixels. At integer coordinates the sample equals the pixel value
/// exactly.
#[inline]
pub fn bilinear_sample(frame: &Frame, x: f64, y: f64, c: usize) -> f64 {
    let (x0, y0, x1, y1, fx, fy) = cell(frame, x, y);
    let v00 = frame.get(x0, y0, c);
    let v10 = frame.get(x1, y0, c);
    let v01 = frame.get(x0, y1, c);
    let v11 = frame.get(x1, y1, c);
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    top + fy * (bottom - top)
}

/// Bilinear sample plus its partial derivatives with respect to the *raw*
/// (pre-clamp) coordinates: `(value, d/dx, d/dy)`.
///
/// The sampled value is piecewise bilinear in `(x, y)` with kinks ("knots")
/// at integer coordinates. The derivative reported here is:
///
/// - the interior cell derivative for coordinates strictly inside the image;
/// - the right-hand derivative at integer coordinates (the cell to the
///   right/below), which the floor-based cell resolution yields naturally —
///   a deterministic choice on a measure-zero set;
/// - zero outside `[0, width-1]` (resp. height), where clamping makes the
///   sample constant. At exactly `width-1` the two neighbor columns
///   coincide, so the formula already evaluates to the correct zero.
#[inline]
pub fn bilinear_sample_with_grad(frame: &Frame, x: f64, y: f64, c: usize) -> (f64, f64, f64) {
    let (x0, y0, x1, y1, fx, fy) = cell(frame, x, y);
    let v00 = frame.get(x0, y0, c);
    let v10 = frame.get(x1, y0, c);
    let v01 = frame.get(x0, y1, c);
    let v11 = frame.get(x1, y1, c);
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    let value = top + fy * (bottom - top);

    let in_x = x >= 0.0 && x <= (frame.width() - 1) as f64;
    let in_y = y >= 0.0 && y <= (frame.height() - 1) as f64;
    let dx = if in_x {
        (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
    } else {
        0.0
    };
    let dy = if in_y {
        (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)
    } else {
        0.0
    };
    (value, dx, dy)
}
