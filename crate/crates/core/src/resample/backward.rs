//! Analytic gradients of the SDC operator with respect to its parameters.

use rayon::prelude::*;

use crate::error::SdcError;
use crate::frame::Frame;
use crate::resample::sampler::bilinear_sample_with_grad;
use crate::resample::{TransformGradients, TransformParams};

/// Computes the exact partial derivatives of the scalar
/// `S = sum(output_grad ⊙ warp_sdc(frame, params))` with respect to every
/// parameter: per-pixel `u`, `v` and the `ku`/`kv` kernel weights.
///
/// `output_grad` is the upstream derivative `dL/d out`; passing the
/// gradient of any scalar loss with respect to the predicted frame yields
/// `dL/d params` by the chain rule.
///
/// Because output pixel `(x, y)` depends only on the parameters stored at
/// `(x, y)`, every gradient entry is local to its pixel: there is no
/// scatter across pixels, rows can be processed independently, and results
/// are bitwise-deterministic for any thread count.
///
/// Positional derivatives (`d_u`, `d_v`) use the sampler's piecewise
/// derivative: right-handed at integer coordinates, zero where the sample
/// coordinate is clamped to the border. Kernel-weight derivatives are exact
/// everywhere (the output is linear in the weights).
pub fn sdc_backward(
    frame: &Frame,
    params: &TransformParams,
    output_grad: &Frame,
) -> Result<TransformGradients, SdcError> {
    frame.check_same_shape(output_grad)?;
    if (frame.height(), frame.width()) != (params.height(), params.width()) {
        return Err(SdcError::shape(
            format!("frame {}x{}", frame.height(), frame.width()),
            format!("params {}x{}", params.height(), params.width()),
        ));
    }

    let (h, w, c) = frame.shape();
    let n = params.n();
    let r = (n / 2) as f64;
    let motion = &params.motion;
    let kernels = &params.kernels;

    let mut grads = TransformGradients::zeros(h, w, n)?;
    let TransformGradients {
        d_u, d_v, d_ku, d_kv, ..
    } = &mut grads;

    d_u.par_chunks_exact_mut(w)
        .zip(d_v.par_chunks_exact_mut(w))
        .zip(d_ku.par_chunks_exact_mut(w * n))
        .zip(d_kv.par_chunks_exact_mut(w * n))
        .enumerate()
        .for_each(|(y, (((du_row, dv_row), dku_row), dkv_row))| {
            for x in 0..w {
                let (u, v) = motion.get(x, y);
                let ku = kernels.ku_at(x, y);
                let kv = kernels.kv_at(x, y);
                let cx = x as f64 + u - r;
                let cy = y as f64 + v - r;

                let mut du = 0.0;
                let mut dv = 0.0;
                let dku = &mut dku_row[x * n..(x + 1) * n];
                let dkv = &mut dkv_row[x * n..(x + 1) * n];

                for ch in 0..c {
                    let g = output_grad.get(x, y, ch);
                    if g == 0.0 {
                        continue;
                    }
                    for (i, &kvi) in kv.iter().enumerate() {
                        let sy = cy + i as f64;
                        for (j, &kuj) in ku.iter().enumerate() {
                            let (b, bx, by) =
                                bilinear_sample_with_grad(frame, cx + j as f64, sy, ch);
                            let wij = kvi * kuj;
                            du += g * wij * bx;
                            dv += g * wij * by;
                            dku[j] += g * kvi * b;
                            dkv[i] += g * kuj * b;
                        }
                    }
                }
                du_row[x] = du;
                dv_row[x] = dv;
            }
        });

    Ok(grads)
}
