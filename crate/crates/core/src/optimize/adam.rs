//! Bias-corrected Adam over a flat parameter vector.

use crate::error::SdcError;

/// Adam accumulator state for one flat parameter vector.
///
/// Defaults follow the optimizer's conventional settings: `beta1 = 0.9`,
/// `beta2 = 0.999`, `epsilon = 1e-8`, no weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
}

impl AdamState {
    /// Fresh state (zero moments) for `len` parameters with the default
    /// hyperparameters.
    pub fn new(len: usize, lr: f64) -> Result<AdamState, SdcError> {
        AdamState::with_hyper(len, lr, 0.9, 0.999, 1e-8)
    }

    /// Fresh state with explicit hyperparameters.
    pub fn with_hyper(
        len: usize,
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<AdamState, SdcError> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(SdcError::BadConfig(format!(
                "learning rate must be finite and > 0, got {lr}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(SdcError::BadConfig(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SdcError::BadConfig(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1,
            beta2,
            epsilon,
            lr,
        })
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One in-place Adam update.
///
/// Moments are updated as `m = b1*m + (1-b1)*g`, `v = b2*v + (1-b2)*g^2`,
/// bias-corrected by `1 - b^t`, and applied as
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`. A zero gradient leaves its
/// parameter bitwise unchanged (zero moments divide to an exact zero step).
///
/// Errors if lengths disagree or any gradient entry is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
) -> Result<(), SdcError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(SdcError::shape(
            format!("{} parameters", state.m.len()),
            format!("{} parameters / {} gradients", params.len(), grads.len()),
        ));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(SdcError::Numerics(format!(
            "non-finite gradient {} at flat index {i}",
            grads[i]
        )));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g);
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
