//! Forward passes of the three resampling operators.

use rayon::prelude::*;

use crate::error::SdcError;
use crate::frame::Frame;
use crate::resample::sampler::bilinear_sample;
use crate::resample::{KernelField2D, MotionField, SeparableKernelField, TransformParams};

fn check_grid(
    frame: &Frame,
    grid_h: usize,
    grid_w: usize,
    what: &str,
) -> Result<(), SdcError> {
    if (frame.height(), frame.width()) != (grid_h, grid_w) {
        return Err(SdcError::shape(
            format!("frame {}x{}", frame.height(), frame.width()),
            format!("{what} {grid_h}x{grid_w}"),
        ));
    }
    Ok(())
}

/// Vector resampling: every output pixel is a single bilinear sample of the
/// source at its displaced location.
///
/// `out(x, y, c) = sample(frame, x + u, y + v, c)` with `(u, v)` read from
/// `motion` at `(x, y)`; channels share the displacement.
pub fn warp_vector(frame: &Frame, motion: &MotionField) -> Result<Frame, SdcError> {
    check_grid(frame, motion.height(), motion.width(), "motion")?;
    let (h, w, c) = frame.shape();
    let mut out = Frame::new(h, w, c)?;
    out.data_mut()
        .par_chunks_exact_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let (u, v) = motion.get(x, y);
                let sx = x as f64 + u;
                let sy = y as f64 + v;
                for ch in 0..c {
                    row[x * c + ch] = bilinear_sample(frame, sx, sy, ch);
                }
            }
        });
    Ok(out)
}

/// Expands per-pixel separable kernels into dense 2D kernels by outer
/// product: `weights[y][x][i][j] = kv[i] * ku[j]`.
pub fn expand_separable(kernels: &SeparableKernelField) -> KernelField2D {
    let (h, w, n) = (kernels.height(), kernels.width(), kernels.n());
    let mut out = KernelField2D::zeros(h, w, n)
        .expect("source field dimensions already validated");
    for y in 0..h {
        for x in 0..w {
            let ku = kernels.ku_at(x, y);
            let kv = kernels.kv_at(x, y);
            let k2 = out.kernel_at_mut(x, y);
            for i in 0..n {
                for j in 0..n {
                    k2[i * n + j] = kv[i] * ku[j];
                }
            }
        }
    }
    out
}

/// Kernel resampling: every output pixel is the weighted sum of the
/// `n x n` integer-tap patch centered on it, with taps clamped to the
/// image border.
///
/// `out(x, y, c) = sum_{i,j} weights[y][x][i][j] * frame(x - n/2 + j, y - n/2 + i, c)`.
///
/// Weights gather as-is (no flip); no displacement is involved.
pub fn warp_kernel(frame: &Frame, kernels: &KernelField2D) -> Result<Frame, SdcError> {
    check_grid(frame, kernels.height(), kernels.width(), "kernels")?;
    let (h, w, c) = frame.shape();
    let n = kernels.n();
    let r = (n / 2) as isize;
    let mut out = Frame::new(h, w, c)?;
    out.data_mut()
        .par_chunks_exact_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let k2 = kernels.kernel_at(x, y);
                for ch in 0..c {
                    let mut acc = 0.0;
                    for i in 0..n {
                        let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                        for j in 0..n {
                            let sx =
                                (x as isize + j as isize - r).clamp(0, w as isize - 1) as usize;
                            acc += k2[i * n + j] * frame.get(sx, sy, ch);
                        }
                    }
                    row[x * c + ch] = acc;
                }
            }
        });
    Ok(out)
}

/// Spatially-displaced convolution: the per-pixel separable kernel is
/// applied to the patch centered at the *displaced* location, and every tap
/// is a bilinear sample of the original source frame.
///
/// `out(x, y, c) = sum_{i,j} kv[i] * ku[j] * sample(frame, x + u - n/2 + j, y + v - n/2 + i, c)`.
///
/// Middle-one-hot kernels reduce this to [`warp_vector`]; zero motion
/// reduces it to [`warp_kernel`] of the expanded kernels. It is not their
/// composition: composing would convolve over an already-interpolated
/// intermediate image, which differs near borders and wherever parameters
/// vary between neighboring pixels.
pub fn warp_sdc(frame: &Frame, params: &TransformParams) -> Result<Frame, SdcError> {
    check_grid(frame, params.height(), params.width(), "params")?;
    let (h, w, c) = frame.shape();
    let n = params.n();
    let r = (n / 2) as f64;
    let motion = &params.motion;
    let kernels = &params.kernels;
    let mut out = Frame::new(h, w, c)?;
    out.data_mut()
        .par_chunks_exact_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let (u, v) = motion.get(x, y);
                let ku = kernels.ku_at(x, y);
                let kv = kernels.kv_at(x, y);
                let cx = x as f64 + u - r;
                let cy = y as f64 + v - r;
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (i, &kvi) in kv.iter().enumerate() {
                        let sy = cy + i as f64;
                        for (j, &kuj) in ku.iter().enumerate() {
                            acc += kvi * kuj * bilinear_sample(frame, cx + j as f64, sy, ch);
                        }
                    }
                    row[x * c + ch] = acc;
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_translating_square;

    fn ramp(h: usize, w: usize) -> Frame {
        let mut f = Frame::new(h, w, 1).unwrap();
        for y in 0..h {
            for x in 0..w {
                f.set(x, y, 0, x as f64 + 10.0 * y as f64);
            }
        }
        f
    }

    #[test]
    fn zero_motion_is_identity() {
        let f = ramp(4, 5);
        let motion = MotionField::new(4, 5).unwrap();
        let out = warp_vector(&f, &motion).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn translating_square_warped_with_object_flow_duplicates_trailing_edge() {
        let scene = make_translating_square(1, 6, 2, 1, 2).unwrap();
        let out = warp_vector(&scene.frames[0], &scene.gt_flows[0]).unwrap();
        // The vacated pixel keeps sampling the square, widening it by one:
        assert_eq!(out.data(), &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn translating_square_warped_with_corrected_field_is_exact() {
        let scene = make_translating_square(1, 6, 2, 1, 2).unwrap();
        let out = warp_vector(&scene.frames[0], &scene.correct_flows[0]).unwrap();
        assert_eq!(out, scene.frames[1]);
    }

    #[test]
    fn expand_separable_outer_product_by_hand() {
        let mut k = SeparableKernelField::zeros(1, 1, 3).unwrap();
        k.ku_at_mut(0, 0).copy_from_slice(&[1.0, 2.0, 3.0]);
        k.kv_at_mut(0, 0).copy_from_slice(&[1.0, 0.0, 0.0]);
        let k2 = expand_separable(&k);
        assert_eq!(
            k2.kernel_at(0, 0),
            &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn expand_separable_one_hot_center() {
        let k = SeparableKernelField::middle_one_hot(1, 1, 3).unwrap();
        let k2 = expand_separable(&k);
        assert_eq!(
            k2.kernel_at(0, 0),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn one_hot_kernels_make_warp_kernel_identity() {
        let f = ramp(5, 4);
        let k2 = expand_separable(&SeparableKernelField::middle_one_hot(5, 4, 3).unwrap());
        let out = warp_kernel(&f, &k2).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn uniform_kernel_preserves_constant_images() {
        let f = Frame::splat(6, 6, 1, 0.7).unwrap();
        let mut k = SeparableKernelField::zeros(6, 6, 5).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                k.ku_at_mut(x, y).fill(1.0 / 5.0);
                k.kv_at_mut(x, y).fill(1.0 / 5.0);
            }
        }
        let out = warp_kernel(&f, &expand_separable(&k)).unwrap();
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn top_left_tap_shifts_content_down_right() {
        // A one-hot at tap (i=0, j=0) reads frame(x-1, y-1): the image
        // content moves by (+1, +1) on interior pixels.
        let f = ramp(5, 5);
        let mut k = SeparableKernelField::zeros(5, 5, 3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                k.ku_at_mut(x, y)[0] = 1.0;
                k.kv_at_mut(x, y)[0] = 1.0;
            }
        }
        let out = warp_kernel(&f, &expand_separable(&k)).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert_eq!(out.get(x, y, 0), f.get(x - 1, y - 1, 0));
            }
        }
    }

    #[test]
    fn sdc_with_one_hot_kernels_matches_vector_warp() {
        let f = ramp(6, 7);
        let mut motion = MotionField::new(6, 7).unwrap();
        for y in 0..6 {
            for x in 0..7 {
                motion.set(x, y, 0.3 * x as f64 - 1.2, 0.5 - 0.1 * y as f64);
            }
        }
        let params = TransformParams::new(
            motion.clone(),
            SeparableKernelField::middle_one_hot(6, 7, 5).unwrap(),
        )
        .unwrap();
        let sdc = warp_sdc(&f, &params).unwrap();
        let vec = warp_vector(&f, &motion).unwrap();
        for (a, b) in sdc.data().iter().zip(vec.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn sdc_with_zero_motion_matches_kernel_warp() {
        let f = ramp(5, 5);
        let mut kernels = SeparableKernelField::zeros(5, 5, 3).unwrap();
        for (p, w) in kernels.ku_mut().iter_mut().enumerate() {
            *w = ((p % 7) as f64 - 3.0) * 0.2;
        }
        for (p, w) in kernels.kv_mut().iter_mut().enumerate() {
            *w = ((p % 5) as f64) * 0.15;
        }
        let params = TransformParams::new(MotionField::new(5, 5).unwrap(), kernels.clone())
            .unwrap();
        let sdc = warp_sdc(&f, &params).unwrap();
        let ker = warp_kernel(&f, &expand_separable(&kernels)).unwrap();
        for (a, b) in sdc.data().iter().zip(ker.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    /// Composing the two simpler operators first interpolates, then
    /// convolves the interpolated values — near the border the intermediate
    /// image has already blended the edge pixel, while the displaced
    /// convolution re-reads the original edge pixel for each tap. A step
    /// edge at the border makes the two disagree by a wide margin.
    #[test]
    fn sdc_is_not_composition_of_vector_then_kernel() {
        // One row: a bright pixel at the left border of a dark ramp.
        let w = 8;
        let mut f = Frame::new(1, w, 1).unwrap();
        f.set(0, 0, 0, 1.0);
        for x in 1..w {
            f.set(x, 0, 0, 0.01 * x as f64);
        }

        // Constant motion (0.5, 0) and a uniform 3-tap horizontal average.
        let mut motion = MotionField::new(1, w).unwrap();
        for x in 0..w {
            motion.set(x, 0, 0.5, 0.0);
        }
        let mut kernels = SeparableKernelField::zeros(1, w, 3).unwrap();
        for x in 0..w {
            kernels.ku_at_mut(x, 0).copy_from_slice(&[1.0 / 3.0; 3]);
            kernels.kv_at_mut(x, 0).copy_from_slice(&[0.0, 1.0, 0.0]);
        }

        let params = TransformParams::new(motion.clone(), kernels.clone()).unwrap();
        let direct = warp_sdc(&f, &params).unwrap();
        let composed =
            warp_kernel(&warp_vector(&f, &motion).unwrap(), &expand_separable(&kernels))
                .unwrap();

        let max_diff = direct
            .data()
            .iter()
            .zip(composed.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_diff > 1e-3,
            "operators should disagree near the border, max diff {max_diff}"
        );
    }

    #[test]
    fn integral_motion_with_one_hot_kernels_is_integer_shift_inside() {
        let f = ramp(8, 8);
        let mut motion = MotionField::new(8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                motion.set(x, y, 2.0, -1.0);
            }
        }
        let params =
            TransformParams::new(motion, SeparableKernelField::middle_one_hot(8, 8, 3).unwrap())
                .unwrap();
        let out = warp_sdc(&f, &params).unwrap();
        // One-hot kernels only touch the center tap, so the output is exact
        // wherever the shifted coordinate (x+2, y-1) stays inside the image.
        for y in 1..8 {
            for x in 0..=5 {
                assert_eq!(out.get(x, y, 0), f.get(x + 2, y - 1, 0));
            }
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let f = ramp(4, 4);
        let motion = MotionField::new(4, 5).unwrap();
        assert!(warp_vector(&f, &motion).is_err());
        let k2 = expand_separable(&SeparableKernelField::middle_one_hot(5, 4, 3).unwrap());
        assert!(warp_kernel(&f, &k2).is_err());
        let params = TransformParams::identity(3, 4, 3).unwrap();
        assert!(warp_sdc(&f, &params).is_err());
    }
}
