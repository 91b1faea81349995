use crate::error::{Error, Result};
use crate::model::{GradientSet, MignModel, ParamSet};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Option<ParamSet>,
    v: Option<ParamSet>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave both the model
/// and the state untouched.
pub fn adam_step(
    model: &mut MignModel,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let params = model.params_mut();
    if !params.same_layout(grads) {
        return Err(Error::Validation(
            "gradient layout differs from the model".into(),
        ));
    }
    if let Some((name, offset)) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!(
            "gradient {name}[{offset}]; step refused"
        )));
    }
    let m = state.m.get_or_insert_with(|| params.zeros_like());
    let v = state.v.get_or_insert_with(|| params.zeros_like());
    if !m.same_layout(params) {
        return Err(Error::Validation(
            "optimizer state layout differs from the model".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let tensors = params.tensors_mut().iter_mut();
    let moments = m.tensors_mut().iter_mut().zip(v.tensors_mut().iter_mut());
    for ((p, (m, v)), g) in tensors.zip(moments).zip(grads.tensors()) {
        let p = p.data_mut();
        let (m, v) = (m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
