use super::param::{Gradients, ParamStore};
use super::NnError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<(), NnError> {
    let bufs = grads.buffers();
    if bufs.len() != store.len() || state.m.len() != store.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} tensors, {} gradients, {} moment buffers",
            store.len(),
            bufs.len(),
            state.m.len()
        )));
    }
    for (i, g) in bufs.iter().enumerate() {
        let t = &store.tensors()[i];
        if g.len() != t.len() || state.m[i].len() != t.len() {
            return Err(NnError::ShapeMismatch(format!("tensor {}", t.name)));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for (i, g) in bufs.iter().enumerate() {
        let values = &mut store.tensor_mut(super::ParamId(i)).values;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..g.len() {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            values[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
