use crate::error::{Error, Result};
use crate::nn::mlp::{Gradient, Mlp};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const STABILIZER: f64 = 1e-8;

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub stabilizer: f64,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            m: vec![0.0; net.len()],
            v: vec![0.0; net.len()],
            t: 0,
            lr,
            beta1: BETA1,
            beta2: BETA2,
            stabilizer: STABILIZER,
        }
    }
}

/// One Adam descent step on `params` using `grads`.
pub fn adam_step(params: &mut Mlp, grads: &Gradient, state: &mut AdamState) -> Result<()> {
    if !(state.lr > 0.0 && state.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", state.lr)));
    }
    let n = params.len();
    let grad_len: usize = grads.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
    if grad_len != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam step over {n} parameters with {grad_len} gradients and {} moments",
            state.m.len()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, g), m), v) in params.values_mut().zip(grads.values()).zip(&mut state.m).zip(&mut state.v) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.stabilizer);
    }
    Ok(())
}

/// Moves `target` toward `online`: `target <- (1 - rate) * target + rate * online`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("polyak rate must be in [0, 1], got {rate}")));
    }
    if !target.same_shape(online) {
        return Err(Error::Shape("polyak update between networks of different shapes".into()));
    }
    for (t, o) in target.values_mut().zip(online.values()) {
        *t = (1.0 - rate) * *t + rate * o;
    }
    Ok(())
}
