//! Phase schedules for direct parameter fitting.

use crate::error::SdcError;

/// Which slice of the transform parameters a phase trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSubset {
    MotionOnly,
    KernelsOnly,
    All,
}

/// The objective a phase descends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseLoss {
    /// Mean absolute pixel error against the target frame.
    L1,
    /// Squared distance of every kernel to the middle-one-hot kernel
    /// (ignores the target frame; used to anchor kernels before joint
    /// training).
    KernelInit,
    /// Weighted pixel + style + perceptual mix.
    Finetune,
}

/// One fitting phase: a trainable subset, a loss, a learning rate, and an
/// iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPhase {
    pub subset: ParamSubset,
    pub loss: PhaseLoss,
    pub lr: f64,
    pub iters: usize,
}

/// An ordered list of fitting phases.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSchedule {
    pub phases: Vec<FitPhase>,
}

impl FitSchedule {
    /// Errors unless there is at least one phase and every phase has a
    /// positive iteration count and a finite positive learning rate.
    pub fn validate(&self) -> Result<(), SdcError> {
        if self.phases.is_empty() {
            return Err(SdcError::BadConfig(
                "schedule needs at least one phase".into(),
            ));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.iters == 0 {
                return Err(SdcError::BadConfig(format!(
                    "phase {} has zero iterations",
                    i + 1
                )));
            }
            if !(p.lr.is_finite() && p.lr > 0.0) {
                return Err(SdcError::BadConfig(format!(
                    "phase {} learning rate must be finite and > 0, got {}",
                    i + 1,
                    p.lr
                )));
            }
        }
        Ok(())
    }

    /// Total iterations across all phases.
    pub fn total_iters(&self) -> usize {
        self.phases.iter().map(|p| p.iters).sum()
    }
}

/// Built-in schedule variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Phases 1-3 only, with reduced iteration counts; no fine-tune phase.
    Quick,
    /// The full four-phase sequence.
    Full,
}

/// Default per-phase iteration counts for the full schedule.
pub const DEFAULT_PHASE_ITERS: [usize; 4] = [1500, 500, 1000, 500];
/// Default per-phase learning rates for the full schedule.
///
/// Direct per-pixel fitting moves each parameter by roughly one learning
/// rate per Adam step, so rates are sized to the pixel displacements being
/// fitted rather than to the much smaller values used when training
/// shared-weight networks. Override via [`FitSchedule`] or the config file.
pub const DEFAULT_PHASE_LRS: [f64; 4] = [1e-2, 1e-2, 1e-3, 1e-3];
/// Iteration counts for [`ScheduleMode::Quick`] (phases 1-3).
pub const QUICK_PHASE_ITERS: [usize; 3] = [400, 150, 300];

/// The established fitting sequence:
///
/// 1. motion only, L1 loss;
/// 2. kernels only, kernel-anchoring loss (drives kernels to
///    middle-one-hot so the SDC operator starts out agreeing with the
///    pure vector warp);
/// 3. everything, L1 loss;
/// 4. everything, fine-tune loss (full variant only).
pub fn default_schedule(mode: ScheduleMode) -> FitSchedule {
    let full = [
        (ParamSubset::MotionOnly, PhaseLoss::L1),
        (ParamSubset::KernelsOnly, PhaseLoss::KernelInit),
        (ParamSubset::All, PhaseLoss::L1),
        (ParamSubset::All, PhaseLoss::Finetune),
    ];
    let phases = match mode {
        ScheduleMode::Full => full
            .iter()
            .zip(DEFAULT_PHASE_ITERS)
            .zip(DEFAULT_PHASE_LRS)
            .map(|((&(subset, loss), iters), lr)| FitPhase {
                subset,
                loss,
                lr,
                iters,
            })
            .collect(),
        ScheduleMode::Quick => full
            .iter()
            .take(3)
            .zip(QUICK_PHASE_ITERS)
            .zip(DEFAULT_PHASE_LRS)
            .map(|((&(subset, loss), iters), lr)| FitPhase {
                subset,
                loss,
                lr,
                iters,
            })
            .collect(),
    };
    FitSchedule { phases }
}
