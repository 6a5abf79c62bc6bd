use serde::{Deserialize, Serialize};

use super::{GradientSet, Mlp, Rng};
use crate::error::{Error, Result};

/// Adam moment buffers for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m: GradientSet::zeros_like(net),
            v: GradientSet::zeros_like(net),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.m.matches(net) && self.v.matches(net)
    }

    /// One bias-corrected Adam step on `net`.
    ///
    /// Non-finite gradients are rejected before anything is touched so the
    /// caller can treat them as divergence.
    pub fn step(&mut self, net: &mut Mlp, grads: &GradientSet, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !grads.matches(net) || !self.matches(net) {
            return Err(Error::shape("adam state, gradients and network disagree"));
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps_hat);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for l in 0..net.n_layers() {
            let (w, b) = net.layer_params_mut(l);
            update_block(w, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l], [b1, b2, eps, c1, c2, lr]);
            update_block(b, &grads.biases[l], &mut self.m.biases[l], &mut self.v.biases[l], [b1, b2, eps, c1, c2, lr]);
        }
        Ok(())
    }
}

#[inline]
fn update_block(params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], k: [f64; 6]) {
    let [b1, b2, eps, c1, c2, lr] = k;
    for (((p, &g), m), v) in params.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Re-initializes the last `depth` layers of `net` and clears their Adam
/// moments.
///
/// Layers are redrawn in order with the same scheme as [`Mlp::new`], so
/// `depth == n_layers` reproduces a fresh network from the same stream. Only
/// a full reset also rewinds the step counter.
pub fn reset_layers(net: &mut Mlp, state: &mut AdamState, depth: usize, rng: &mut Rng) -> Result<()> {
    let n = net.n_layers();
    if depth > n {
        return Err(Error::invalid(format!(
            "reset depth {depth} exceeds the network's {n} layers"
        )));
    }
    if !state.matches(net) {
        return Err(Error::shape("adam state does not match network"));
    }
    for l in n - depth..n {
        net.reinit_layer(l, rng);
        for buf in [&mut state.m, &mut state.v] {
            buf.weights[l].iter_mut().for_each(|x| *x = 0.0);
            buf.biases[l].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    if depth == n {
        state.step_count = 0;
    }
    Ok(())
}
