//! Single-step prediction, multi-step recirculation, and method comparison.

use crate::error::SdcError;
use crate::frame::Frame;
use crate::loss::{loss_l1, loss_l2};
use crate::metrics::{metric_psnr, metric_ssim, SSIM_WINDOW};
use crate::optimize::{
    default_init, default_schedule, fit_transform, FitOptions, FitPhase, FitReport, FitSchedule,
    ParamSubset, PhaseLoss, ScheduleMode,
};
use crate::pipeline::flow_estimate::estimate_flow;
use crate::pipeline::{Method, ParamsSource, PredictionRun, SequenceInput};
use crate::resample::{warp_sdc, warp_vector, SeparableKernelField, TransformParams};

/// Default kernel size of the displaced-convolution method.
pub const DEFAULT_SDC_N: usize = 11;
/// Default kernel size of the kernel-only method.
pub const DEFAULT_KERNEL_N: usize = 51;
/// Default number of observed frames a prediction conditions on.
pub const DEFAULT_CONDITION_FRAMES: usize = 5;

/// Settings shared by the prediction entry points.
#[derive(Debug, Clone)]
pub struct PredictConfig {
    /// Kernel size used by [`Method::Sdc`].
    pub sdc_n: usize,
    /// Kernel size used by [`Method::Kernel`].
    pub kernel_n: usize,
    /// Base fitting schedule. Per-method adjustments are applied on top:
    /// the vector method trains motion only, the kernel method trains
    /// kernels only, and both drop the kernel-anchoring phase.
    pub schedule: FitSchedule,
    pub fit: FitOptions,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            sdc_n: DEFAULT_SDC_N,
            kernel_n: DEFAULT_KERNEL_N,
            schedule: default_schedule(ScheduleMode::Quick),
            fit: FitOptions::default(),
        }
    }
}

/// A predicted frame together with the transform that produced it.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub frame: Frame,
    pub params: TransformParams,
}

/// Quality of one predicted step against its ground truth. `ssim` is `NaN`
/// when the frames are smaller than the SSIM window.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    /// 1-based step number.
    pub step: usize,
    pub l1: f64,
    pub l2: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// One row of a method comparison.
#[derive(Debug, Clone)]
pub struct MethodScores {
    pub name: String,
    pub l1: f64,
    pub l2: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Scores of every resampling method plus the copy-last baseline on one
/// prediction task.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<MethodScores>,
}

impl ComparisonReport {
    /// Renders the report as CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,l1,l2,psnr,ssim\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name, r.l1, r.l2, r.psnr, r.ssim
            ));
        }
        out
    }
}

/// The kernel size a method uses under `cfg`.
fn method_n(method: Method, cfg: &PredictConfig) -> usize {
    match method {
        Method::Vector => 1,
        Method::Kernel => cfg.kernel_n,
        Method::Sdc => cfg.sdc_n,
    }
}

/// Restricts the base schedule to the parameters a method actually has:
/// the vector method trains motion only and the kernel method trains
/// kernels only, so each drops the kernel-anchoring phase and retargets
/// the remaining phases to its own parameter group.
fn method_schedule(base: &FitSchedule, method: Method) -> Result<FitSchedule, SdcError> {
    let phases: Vec<FitPhase> = match method {
        Method::Sdc => base.phases.clone(),
        Method::Vector => base
            .phases
            .iter()
            .filter(|p| p.loss != PhaseLoss::KernelInit)
            .map(|p| FitPhase {
                subset: ParamSubset::MotionOnly,
                ..*p
            })
            .collect(),
        Method::Kernel => base
            .phases
            .iter()
            .filter(|p| p.loss != PhaseLoss::KernelInit)
            .map(|p| FitPhase {
                subset: ParamSubset::KernelsOnly,
                ..*p
            })
            .collect(),
    };
    let schedule = FitSchedule { phases };
    schedule.validate()?;
    Ok(schedule)
}

/// Per-pixel one-hot kernels displaced by the rounded flow, clamped to the
/// kernel's reach. This is the kernel-space analogue of seeding the motion
/// field with an estimated flow: a kernel-only transform can only express
/// motion through off-center weights, and per-pixel fitting from a
/// centered start has no reason to discover them (any scalar residual can
/// be patched by reweighting the samples already under the kernel).
fn shifted_one_hot(
    flow: &crate::resample::MotionField,
    n: usize,
) -> Result<SeparableKernelField, SdcError> {
    let (h, w) = flow.shape();
    let mut kernels = SeparableKernelField::zeros(h, w, n)?;
    let mid = (n / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let du = (u.round() as isize).clamp(-mid, mid);
            let dv = (v.round() as isize).clamp(-mid, mid);
            kernels.ku_at_mut(x, y)[(mid + du) as usize] = 1.0;
            kernels.kv_at_mut(x, y)[(mid + dv) as usize] = 1.0;
        }
    }
    Ok(kernels)
}

/// Fits the transform for one prediction step on the most recent observed
/// pair and returns the full fitting trace. The pair's backward flow
/// (given or estimated) seeds the fit: as the motion initialization for
/// the vector and displaced-convolution methods, and as a displaced
/// one-hot kernel initialization for the kernel method, whose motion
/// stays pinned at zero.
pub fn fit_window(
    input: &SequenceInput,
    method: Method,
    cfg: &PredictConfig,
) -> Result<FitReport, SdcError> {
    let prev = input.previous();
    let newest = input.newest();
    let (h, w, _) = newest.shape();
    let n = method_n(method, cfg);

    let flow = match input.newest_flow() {
        Some(f) => f.clone(),
        None => estimate_flow(prev, newest)?,
    };
    let mut init = default_init(h, w, n, cfg.fit.seed)?;
    match method {
        Method::Kernel => init.kernels = shifted_one_hot(&flow, n)?,
        Method::Vector | Method::Sdc => init.motion = flow,
    }
    if method == Method::Vector {
        // The vector method has no kernel parameters; keep the stored
        // single-tap kernels at their exact pass-through value.
        init.kernels = SeparableKernelField::middle_one_hot(h, w, 1)?;
    }

    let schedule = method_schedule(&cfg.schedule, method)?;
    fit_transform(prev, newest, n, &schedule, Some(init), &cfg.fit)
}

fn fit_params(
    input: &SequenceInput,
    method: Method,
    cfg: &PredictConfig,
) -> Result<TransformParams, SdcError> {
    fit_window(input, method, cfg).map(|report| report.params)
}

/// Applies a fitted or loaded transform to a frame.
fn apply(method: Method, frame: &Frame, params: &TransformParams) -> Result<Frame, SdcError> {
    match method {
        Method::Vector => warp_vector(frame, &params.motion),
        Method::Kernel | Method::Sdc => warp_sdc(frame, params),
    }
}

/// Carries a fitted backward-flow field one frame forward at constant
/// velocity.
///
/// The field was fitted on the grid of the newest observed frame, but the
/// prediction needs displacements at each pixel's *future* position: a
/// moving region's leading edge lies just outside the fitted support, so
/// applying the raw field leaves that edge behind. Each pixel's
/// displacement is therefore splatted to the nearest pixel it is moving
/// toward (`x - u`, `y - v`); pixels nothing maps onto keep their fitted
/// value. Splats land in raster order, so the result is deterministic.
fn advect_motion(motion: &crate::resample::MotionField) -> crate::resample::MotionField {
    let (h, w) = motion.shape();
    let mut out = motion.clone();
    for y in 0..h {
        for x in 0..w {
            let (u, v) = motion.get(x, y);
            let tx = (x as f64 - u).round();
            let ty = (y as f64 - v).round();
            // A displacement that stays on its own pixel is already
            // covered by the copied field; splatting it would overwrite
            // arrivals from genuinely moving neighbors.
            if (tx, ty) == (x as f64, y as f64) {
                continue;
            }
            if tx >= 0.0 && tx < w as f64 && ty >= 0.0 && ty < h as f64 {
                out.set(tx as usize, ty as usize, u, v);
            }
        }
    }
    out
}

/// Predicts the frame following the window by resampling its newest frame.
///
/// With [`ParamsSource::Fitted`] the transform is fitted on the most
/// recent observed pair, its motion is carried one frame forward at
/// constant velocity (see [`advect_motion`]), and the result is applied to
/// the newest frame; the unknown future frame is never consulted. With
/// [`ParamsSource::File`] the given parameters are applied as-is. Either
/// way the output is a resampling of the newest frame alone — earlier
/// frames only influence the parameters. The returned parameters are the
/// ones actually applied.
pub fn predict_next(
    input: &SequenceInput,
    method: Method,
    source: ParamsSource<'_>,
    cfg: &PredictConfig,
) -> Result<Prediction, SdcError> {
    let newest = input.newest();
    let (h, w, _) = newest.shape();
    let params = match source {
        ParamsSource::File(p) => {
            if (p.height(), p.width()) != (h, w) {
                return Err(SdcError::shape(
                    format!("{h}x{w} parameter grid"),
                    format!("{}x{} parameter grid", p.height(), p.width()),
                ));
            }
            p.clone()
        }
        ParamsSource::Fitted => {
            let mut fitted = fit_params(input, method, cfg)?;
            fitted.motion = advect_motion(&fitted.motion);
            fitted
        }
    };
    let frame = apply(method, newest, &params)?;
    Ok(Prediction { frame, params })
}

/// Predicts `steps` frames by recirculation: each prediction becomes the
/// newest frame of the window and the oldest frame is dropped, keeping the
/// window length constant. Parameters are refitted every step; flows for
/// recirculated pairs are re-estimated (provided flows only inform the
/// first step).
pub fn predict_multi(
    input: &SequenceInput,
    method: Method,
    steps: usize,
    cfg: &PredictConfig,
) -> Result<PredictionRun, SdcError> {
    if steps < 1 {
        return Err(SdcError::BadConfig(
            "prediction needs at least one step".into(),
        ));
    }
    let mut window: Vec<Frame> = input.frames().to_vec();
    let mut flows = input.flows().map(<[_]>::to_vec);
    let mut frames = Vec::with_capacity(steps);
    for _ in 0..steps {
        let win = SequenceInput::new(window.clone(), flows.take())?;
        let pred = predict_next(&win, method, ParamsSource::Fitted, cfg)?;
        window.remove(0);
        window.push(pred.frame.clone());
        frames.push(pred.frame);
    }
    Ok(PredictionRun { method, frames })
}

fn frame_scores(name: &str, pred: &Frame, truth: &Frame) -> Result<MethodScores, SdcError> {
    let (h, w, _) = truth.shape();
    let ssim = if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        metric_ssim(pred, truth)?
    } else {
        f64::NAN
    };
    Ok(MethodScores {
        name: name.to_owned(),
        l1: loss_l1(pred, truth)?,
        l2: loss_l2(pred, truth)?,
        psnr: metric_psnr(pred, truth)?,
        ssim,
    })
}

impl PredictionRun {
    /// Scores each predicted step against the matching ground-truth frame.
    /// `truths[k]` is compared with step `k + 1`; the slice length must
    /// equal the number of steps.
    pub fn metrics_against(&self, truths: &[Frame]) -> Result<Vec<StepMetrics>, SdcError> {
        if truths.len() != self.frames.len() {
            return Err(SdcError::shape(
                format!("{} ground-truth frames", self.frames.len()),
                format!("{} frames", truths.len()),
            ));
        }
        self.frames
            .iter()
            .zip(truths)
            .enumerate()
            .map(|(k, (pred, truth))| {
                let s = frame_scores("", pred, truth)?;
                Ok(StepMetrics {
                    step: k + 1,
                    l1: s.l1,
                    l2: s.l2,
                    psnr: s.psnr,
                    ssim: s.ssim,
                })
            })
            .collect()
    }
}

/// Predicts the frame after the window with every method plus the
/// copy-last baseline and scores each against the same ground truth.
pub fn compare_methods(
    input: &SequenceInput,
    truth: &Frame,
    cfg: &PredictConfig,
) -> Result<ComparisonReport, SdcError> {
    input.newest().check_same_shape(truth)?;
    let mut rows = Vec::with_capacity(4);
    for method in [Method::Vector, Method::Kernel, Method::Sdc] {
        let pred = predict_next(input, method, ParamsSource::Fitted, cfg)?;
        rows.push(frame_scores(method.as_str(), &pred.frame, truth)?);
    }
    rows.push(frame_scores("copy_last", input.newest(), truth)?);
    Ok(ComparisonReport { rows })
}
