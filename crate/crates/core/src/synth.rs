//! Synthetic test scenes with known ground-truth motion.

use crate::error::SdcError;
use crate::flow::FlowField;
use crate::frame::Frame;

/// A generated frame sequence together with two motion-field families:
///
/// - `gt_flows[k]` is the literal object motion between `frames[k]` and
///   `frames[k+1]`, expressed as backward flow on frame `k+1`'s grid:
///   nonzero exactly on the pixels the object covers in frame `k+1`.
/// - `correct_flows[k]` additionally redirects the *disoccluded* pixels —
///   background newly revealed behind the object — to sample background
///   instead of the object. Warping with `gt_flows` duplicates the object's
///   trailing edge into the revealed strip; warping with `correct_flows`
///   reconstructs frame `k+1` exactly.
///
/// The distinction is the whole point of the scene: it separates "motion of
/// the object" from "where each output pixel should sample", which only
/// coincide where nothing is revealed or hidden.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frames: Vec<Frame>,
    pub gt_flows: Vec<FlowField>,
    pub correct_flows: Vec<FlowField>,
}

/// Column of the square's left edge at frame index `t`.
///
/// The square starts at `x = speed` so that even the first transition has a
/// fully in-bounds disoccluded strip `[0, speed)` behind it.
fn square_left(speed: usize, t: usize) -> usize {
    speed * (t + 1)
}

/// Builds a white square (value 1) translating right over a black background
/// at an integer number of pixels per frame.
///
/// `steps` is the number of frames; `steps - 1` flow fields of each family
/// accompany them. The square is vertically centered (clamped to the image
/// when `size > height`) and spans `size` columns; it must remain fully
/// inside the image over the whole sequence.
pub fn make_translating_square(
    height: usize,
    width: usize,
    size: usize,
    speed: usize,
    steps: usize,
) -> Result<SyntheticScene, SdcError> {
    if height == 0 || width == 0 || size == 0 || steps == 0 {
        return Err(SdcError::InvalidDimensions(format!(
            "scene needs positive dimensions, got {height}x{width}, size {size}, steps {steps}"
        )));
    }
    let final_right = square_left(speed, steps - 1) + size;
    if final_right > width {
        return Err(SdcError::InvalidDimensions(format!(
            "square exits the image: right edge reaches {final_right} > width {width} \
             (size {size}, speed {speed}, steps {steps})"
        )));
    }

    let y0 = height.saturating_sub(size) / 2;
    let y1 = (y0 + size).min(height);

    let mut frames = Vec::with_capacity(steps);
    for t in 0..steps {
        let x0 = square_left(speed, t);
        let mut frame = Frame::new(height, width, 1)?;
        for y in y0..y1 {
            for x in x0..x0 + size {
                frame.set(x, y, 0, 1.0);
            }
        }
        frames.push(frame);
    }

    let mut gt_flows = Vec::with_capacity(steps.saturating_sub(1));
    let mut correct_flows = Vec::with_capacity(steps.saturating_sub(1));
    let u = -(speed as f64);
    for t in 0..steps.saturating_sub(1) {
        // Both fields live on frame t+1's grid. The square there spans
        // [next_x0, next_x0 + size); the strip it vacated spans
        // [prev_x0, next_x0).
        let prev_x0 = square_left(speed, t);
        let next_x0 = square_left(speed, t + 1);

        let mut gt = FlowField::new(height, width)?;
        let mut correct = FlowField::new(height, width)?;
        for y in y0..y1 {
            for x in next_x0..next_x0 + size {
                gt.set(x, y, u, 0.0);
            }
            for x in prev_x0..next_x0 + size {
                correct.set(x, y, u, 0.0);
            }
        }
        gt_flows.push(gt);
        correct_flows.push(correct);
    }

    Ok(SyntheticScene {
        frames,
        gt_flows,
        correct_flows,
    })
}
