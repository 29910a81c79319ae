//! Image quality metrics: PSNR and SSIM.

use rayon::prelude::*;

use crate::error::SdcError;
use crate::frame::Frame;

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window.
pub const SSIM_SIGMA: f64 = 1.5;
/// SSIM stabilization constants relative to the dynamic range.
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of frame values.
pub const DYNAMIC_RANGE: f64 = 1.0;

/// Peak signal-to-noise ratio in decibels for a known mean squared error,
/// with peak value 1.0: `10 * log10(1 / mse)`. Zero error maps to the
/// `+infinity` sentinel.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// PSNR between two frames (peak 1.0). Identical frames report
/// `+infinity`.
pub fn metric_psnr(pred: &Frame, target: &Frame) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let mse = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

/// Normalized 1-D Gaussian window of length [`SSIM_WINDOW`].
fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - mid).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity between two frames.
///
/// Local SSIM is evaluated with an 11x11 Gaussian window (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1.0) at every position where the
/// window fits entirely inside the image, then averaged over positions;
/// multi-channel frames average the per-channel scores. The result lies in
/// `[-1, 1]` and equals exactly 1.0 for identical frames.
///
/// Errors if the frames are smaller than the window.
pub fn metric_ssim(pred: &Frame, target: &Frame) -> Result<f64, SdcError> {
    pred.check_same_shape(target)?;
    let (h, w, channels) = pred.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(SdcError::ImageTooSmall(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }

    let g = gaussian_window();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE) * (SSIM_K1 * DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE) * (SSIM_K2 * DYNAMIC_RANGE);
    let map_h = h - SSIM_WINDOW + 1;
    let map_w = w - SSIM_WINDOW + 1;

    let mut channel_mean = 0.0;
    for ch in 0..channels {
        // Local scores land in a dense map first; the final mean then sums
        // the map in a fixed order, keeping the result thread-schedule
        // independent.
        let mut map = vec![0.0; map_h * map_w];
        map.par_chunks_exact_mut(map_w)
            .enumerate()
            .for_each(|(wy, map_row)| {
                for wx in 0..map_w {
                    let mut sx = 0.0;
                    let mut sy = 0.0;
                    let mut sxx = 0.0;
                    let mut syy = 0.0;
                    let mut sxy = 0.0;
                    for i in 0..SSIM_WINDOW {
                        for j in 0..SSIM_WINDOW {
                            let wt = g[i] * g[j];
                            let a = pred.get(wx + j, wy + i, ch);
                            let b = target.get(wx + j, wy + i, ch);
                            sx += wt * a;
                            sy += wt * b;
                            // The explicit (a * b) grouping makes each
                            // second moment a function of the unordered
                            // value pair, so swapping the inputs swaps
                            // sxx/syy and leaves sxy bit-identical, and
                            // identical inputs make all three moments
                            // bit-identical.
                            sxx += wt * (a * a);
                            syy += wt * (b * b);
                            sxy += wt * (a * b);
                        }
                    }
                    let var_x = sxx - sx * sx;
                    let var_y = syy - sy * sy;
                    let cov = sxy - sx * sy;
                    let num = (2.0 * sx * sy + c1) * (2.0 * cov + c2);
                    let den = (sx * sx + sy * sy + c1) * (var_x + var_y + c2);
                    map_row[wx] = num / den;
                }
            });
        channel_mean += map.iter().sum::<f64>() / map.len() as f64;
    }
    Ok(channel_mean / channels as f64)
}
