//! Adam optimizer and the phased direct-fitting driver.
//!
//! Fitting treats the per-pixel [`TransformParams`](crate::TransformParams)
//! of the SDC operator as free variables and descends on a frame loss with
//! Adam, in ordered phases that each train a parameter subset (motion only,
//! kernels only, or everything) against one loss. [`default_schedule`]
//! builds the established phase sequence; [`fit_transform`] runs it.

mod adam;
mod fit;
mod schedule;

pub use adam::{adam_step, AdamState};
pub use fit::{default_init, fit_transform, FitOptions, FitRecord, FitReport};
pub use schedule::{
    default_schedule, FitPhase, FitSchedule, ParamSubset, PhaseLoss, ScheduleMode,
    DEFAULT_PHASE_ITERS, DEFAULT_PHASE_LRS, QUICK_PHASE_ITERS,
};
