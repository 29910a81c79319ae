//! End-to-end prediction pipeline: flow estimation, single- and multi-step
//! next-frame prediction by recirculation, method comparison, and memory
//! estimates.
//!
//! Prediction conditions on an ordered window of observed frames (and
//! optionally their backward flows). The transform parameters are either
//! loaded from a file or fitted on the most recent observed pair and then
//! applied to the newest frame — the future frame is never consulted.

mod config;
mod flow_estimate;
mod memory;
mod predict;

pub use config::{load_config, parse_config, PipelineConfig};
pub use flow_estimate::{estimate_flow, FLOW_BLOCK, FLOW_PYRAMID_LEVELS, FLOW_SEARCH_RADIUS};
pub use memory::{memory_breakdown, memory_estimate, MemoryBreakdown};
pub use predict::{
    compare_methods, fit_window, predict_multi, predict_next, ComparisonReport, MethodScores,
    Prediction, PredictConfig, StepMetrics, DEFAULT_CONDITION_FRAMES, DEFAULT_KERNEL_N,
    DEFAULT_SDC_N,
};

use crate::error::SdcError;
use crate::flow::FlowField;
use crate::frame::Frame;
use crate::resample::TransformParams;

/// The resampling operator a prediction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Bilinear sampling at one displaced location per pixel.
    Vector,
    /// Per-pixel separable kernel applied at the output location, no
    /// displacement.
    Kernel,
    /// Per-pixel separable kernel applied at a displaced location.
    Sdc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vector => "vector",
            Method::Kernel => "kernel",
            Method::Sdc => "sdc",
        }
    }

    pub fn parse(s: &str) -> Result<Method, SdcError> {
        match s {
            "vector" => Ok(Method::Vector),
            "kernel" => Ok(Method::Kernel),
            "sdc" => Ok(Method::Sdc),
            other => Err(SdcError::BadConfig(format!(
                "unknown method '{other}' (expected vector|kernel|sdc)"
            ))),
        }
    }
}

/// Where a prediction's transform parameters come from.
#[derive(Debug, Clone, Copy)]
pub enum ParamsSource<'a> {
    /// Fit on the most recent observed pair, initialized from flow.
    Fitted,
    /// Use these parameters as-is.
    File(&'a TransformParams),
}

/// An ordered window of observed frames with optional backward flows.
///
/// Flow `k` (when present) maps frame `k+1` back onto frame `k`, so a
/// window of `t` frames carries `t - 1` flows.
#[derive(Debug, Clone)]
pub struct SequenceInput {
    frames: Vec<Frame>,
    flows: Option<Vec<FlowField>>,
}

impl SequenceInput {
    pub fn new(frames: Vec<Frame>, flows: Option<Vec<FlowField>>) -> Result<Self, SdcError> {
        if frames.len() < 2 {
            return Err(SdcError::InvalidDimensions(format!(
                "prediction needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let first = &frames[0];
        for (i, f) in frames.iter().enumerate().skip(1) {
            if !first.same_shape(f) {
                return Err(SdcError::shape(
                    format!("frame 0 shape {:?}", first.shape()),
                    format!("frame {i} shape {:?}", f.shape()),
                ));
            }
        }
        if let Some(fl) = &flows {
            if fl.len() != frames.len() - 1 {
                return Err(SdcError::shape(
                    format!("{} flows for {} frames", frames.len() - 1, frames.len()),
                    format!("{} flows", fl.len()),
                ));
            }
            for (i, f) in fl.iter().enumerate() {
                if f.shape() != (first.height(), first.width()) {
                    return Err(SdcError::shape(
                        format!("flow shape {:?}", (first.height(), first.width())),
                        format!("flow {i} shape {:?}", f.shape()),
                    ));
                }
            }
        }
        Ok(SequenceInput { frames, flows })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn flows(&self) -> Option<&[FlowField]> {
        self.flows.as_deref()
    }

    /// The newest observed frame — the one every prediction resamples.
    pub fn newest(&self) -> &Frame {
        self.frames.last().expect("validated at construction")
    }

    /// The frame just before the newest one.
    pub fn previous(&self) -> &Frame {
        &self.frames[self.frames.len() - 2]
    }

    /// The backward flow for the most recent pair, when flows were given.
    pub fn newest_flow(&self) -> Option<&FlowField> {
        self.flows.as_ref().map(|f| f.last().expect("non-empty"))
    }
}

/// The outcome of multi-step prediction by recirculation.
#[derive(Debug, Clone)]
pub struct PredictionRun {
    pub method: Method,
    /// One predicted frame per step, in step order.
    pub frames: Vec<Frame>,
}
