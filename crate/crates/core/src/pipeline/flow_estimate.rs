//! Coarse-to-fine block-matching motion estimation.
//!
//! A deliberately simple estimator that seeds prediction fits: it builds a
//! short mean-pool pyramid, matches fixed-size blocks by exhaustive integer
//! search at each level, and carries the coarse result down as a seed. Each
//! level also revisits the window around the zero displacement, so an
//! uninformative coarse level (heavy texture decorrelates under pooling)
//! cannot lock a small true shift out of reach, and blocks that match the
//! zero displacement about as well as anything else report no motion
//! rather than tie-breaking noise. The produced field is backward flow:
//! `next(x, y) ~= prev(x + u, y + v)`.

use crate::error::SdcError;
use crate::flow::FlowField;
use crate::frame::Frame;
use crate::resample::bilinear_sample;

/// Side length of the square matching blocks, in pixels.
pub const FLOW_BLOCK: usize = 8;
/// Integer search radius around the seed, in pixels, at every level.
pub const FLOW_SEARCH_RADIUS: isize = 4;
/// Maximum pyramid depth; levels whose smaller side would drop below one
/// block are not built.
pub const FLOW_PYRAMID_LEVELS: usize = 3;

/// Estimate backward flow from `prev` to `next` by block matching.
///
/// Both frames must share a shape of at least one block per side. Every
/// pixel of a block receives that block's displacement, so the field is
/// piecewise constant at block granularity and integer-valued.
pub fn estimate_flow(prev: &Frame, next: &Frame) -> Result<FlowField, SdcError> {
    prev.check_same_shape(next)?;
    let (h, w, _) = prev.shape();
    if h < FLOW_BLOCK || w < FLOW_BLOCK {
        return Err(SdcError::ImageTooSmall(format!(
            "flow estimation needs at least {FLOW_BLOCK}x{FLOW_BLOCK} pixels, got {h}x{w}"
        )));
    }

    let mut levels = vec![(to_gray(prev), to_gray(next))];
    while levels.len() < FLOW_PYRAMID_LEVELS {
        let coarser = {
            let (p, n) = levels.last().expect("non-empty");
            if p.height() / 2 < FLOW_BLOCK || p.width() / 2 < FLOW_BLOCK {
                break;
            }
            (downsample2(p), downsample2(n))
        };
        levels.push(coarser);
    }

    let mut flow: Option<FlowField> = None;
    for (p, n) in levels.iter().rev() {
        let seed = match &flow {
            None => FlowField::new(p.height(), p.width())?,
            Some(coarse) => upsample_flow(coarse, p.height(), p.width())?,
        };
        flow = Some(match_blocks(p, n, &seed));
    }
    Ok(flow.expect("at least one level"))
}

/// Mean across channels, producing a single-channel frame.
fn to_gray(frame: &Frame) -> Frame {
    let (h, w, c) = frame.shape();
    if c == 1 {
        return frame.clone();
    }
    let mut out = Frame::new(h, w, 1).expect("same valid dims");
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for ch in 0..c {
                sum += frame.get(x, y, ch);
            }
            out.set(x, y, 0, sum / c as f64);
        }
    }
    out
}

/// 2x2 mean pooling with floor-halved dimensions.
fn downsample2(frame: &Frame) -> Frame {
    let (h, w, _) = frame.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Frame::new(oh, ow, 1).expect("halved dims stay positive");
    for y in 0..oh {
        for x in 0..ow {
            let s = frame.get(2 * x, 2 * y, 0)
                + frame.get(2 * x + 1, 2 * y, 0)
                + frame.get(2 * x, 2 * y + 1, 0)
                + frame.get(2 * x + 1, 2 * y + 1, 0);
            out.set(x, y, 0, s / 4.0);
        }
    }
    out
}

/// Bilinear upsampling of a flow field to `(out_h, out_w)`, scaling each
/// displacement component by the corresponding dimension ratio.
fn upsample_flow(flow: &FlowField, out_h: usize, out_w: usize) -> Result<FlowField, SdcError> {
    let (in_h, in_w) = flow.shape();
    let src = flow.to_frame();
    let mut out = FlowField::new(out_h, out_w)?;
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    let gain_u = out_w as f64 / in_w as f64;
    let gain_v = out_h as f64 / in_h as f64;
    for y in 0..out_h {
        for x in 0..out_w {
            let xs = (x as f64 + 0.5) * sx - 0.5;
            let ys = (y as f64 + 0.5) * sy - 0.5;
            let u = bilinear_sample(&src, xs, ys, 0);
            let v = bilinear_sample(&src, xs, ys, 1);
            out.set(x, y, u * gain_u, v * gain_v);
        }
    }
    Ok(out)
}

/// Block starts covering `len`: a stride-`FLOW_BLOCK` grid whose last block
/// is pulled back so it fits inside the image.
fn block_starts(len: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..)
        .map(|i| i * FLOW_BLOCK)
        .take_while(|&s| s < len)
        .map(|s| s.min(len - FLOW_BLOCK))
        .collect();
    starts.dedup();
    starts
}

/// Candidate offsets ordered by squared distance from the seed (ties by dy,
/// then dx), so a flat block keeps its seed: replacement requires a
/// strictly lower cost and `(0, 0)` is evaluated first.
fn candidate_offsets() -> Vec<(isize, isize)> {
    let r = FLOW_SEARCH_RADIUS;
    let mut offs: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .collect();
    offs.sort_by_key(|&(dy, dx)| (dx * dx + dy * dy, dy, dx));
    offs
}

/// One exhaustive-search pass over all blocks of a single-channel pair.
///
/// Candidates are searched around the seed first and then around the zero
/// displacement, so a bad coarse seed can never push a small true shift
/// out of the search window. Replacement requires strictly lower cost,
/// and a block whose zero-displacement cost is within a whisker of the
/// winner reports no motion at all: such a block carries no evidence, and
/// returning whatever survived tie-breaking would inject junk vectors
/// into flat regions.
fn match_blocks(prev: &Frame, next: &Frame, seed: &FlowField) -> FlowField {
    let (h, w, _) = prev.shape();
    let offsets = candidate_offsets();
    let r = FLOW_SEARCH_RADIUS;
    let mut out = FlowField::new(h, w).expect("dims already validated");
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let block_cost = |x0: usize, y0: usize, cu: isize, cv: isize| -> f64 {
        let mut cost = 0.0;
        for y in y0..y0 + FLOW_BLOCK {
            for x in x0..x0 + FLOW_BLOCK {
                let px = clamp(x as isize + cu, w);
                let py = clamp(y as isize + cv, h);
                cost += (next.get(x, y, 0) - prev.get(px, py, 0)).abs();
            }
        }
        cost
    };

    for &y0 in &block_starts(h) {
        for &x0 in &block_starts(w) {
            let (su, sv) = seed.get(x0 + FLOW_BLOCK / 2, y0 + FLOW_BLOCK / 2);
            let (su, sv) = (su.round() as isize, sv.round() as isize);
            let mut best = (f64::INFINITY, 0isize, 0isize);
            for &(dy, dx) in &offsets {
                let (cu, cv) = (su + dx, sv + dy);
                let cost = block_cost(x0, y0, cu, cv);
                if cost < best.0 {
                    best = (cost, cu, cv);
                }
            }
            if (su, sv) != (0, 0) {
                for &(dy, dx) in &offsets {
                    // Already covered by the seed-anchored window.
                    if (dx - su).abs() <= r && (dy - sv).abs() <= r {
                        continue;
                    }
                    // Displacing the seed-derived match needs decisive
                    // evidence, not a hair's width: the seed carries
                    // temporal coherence worth keeping on ambiguous
                    // blocks, so an alternative must halve the cost.
                    let cost = block_cost(x0, y0, dx, dy);
                    if cost * 2.0 < best.0 {
                        best = (cost, dx, dy);
                    }
                }
            }
            // Zero-displacement preference: when staying put matches
            // about as well as the best candidate, the block carries no
            // evidence of motion (flat or noise-dominated), and any
            // nonzero winner is an artifact of tie-breaking. Real
            // motion on textured blocks beats the zero candidate by a
            // wide margin and is unaffected.
            let zero_cost = block_cost(x0, y0, 0, 0);
            if zero_cost <= best.0 * 1.1 + 1e-9 {
                best = (zero_cost, 0, 0);
            }
            for y in y0..y0 + FLOW_BLOCK {
                for x in x0..x0 + FLOW_BLOCK {
                    out.set(x, y, best.1 as f64, best.2 as f64);
                }
            }
        }
    }
    out
}
