use super::{ConvNetParams, TrainError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment accumulators for one [`ConvNetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: ConvNetParams,
    pub second_moment: ConvNetParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ConvNetParams) -> Self {
        Self {
            first_moment: ConvNetParams::zeros_like(params),
            second_moment: ConvNetParams::zeros_like(params),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut ConvNetParams,
    grads: &ConvNetParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) || !params.same_shape(&state.second_moment) {
        return Err(TrainError::ShapeMismatch("adam: parameter, gradient and moment shapes differ".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let grads = grads.tensors();
    let mut m = state.first_moment.tensors_mut();
    let mut v = state.second_moment.tensors_mut();
    for (k, p) in params.tensors_mut().into_iter().enumerate() {
        for (i, w) in p.iter_mut().enumerate() {
            let g = grads[k][i];
            let mi = b1 * m[k][i] + (1.0 - b1) * g;
            let vi = b2 * v[k][i] + (1.0 - b2) * g * g;
            m[k][i] = mi;
            v[k][i] = vi;
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
