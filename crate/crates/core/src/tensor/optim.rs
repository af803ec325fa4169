use super::{Matrix, Param};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `value` in place.
pub fn adam_step(
    value: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if value.shape() != grad.shape() || value.shape() != state.m.shape() {
        return Err(shape_err!(
            "adam value {:?}, grad {:?}, state {:?}",
            value.shape(),
            grad.shape(),
            state.m.shape()
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let g = grad.as_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (i, x) in value.as_mut_slice().iter_mut().enumerate() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        *x -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over a fixed, ordered parameter list.
///
/// Parameters without a gradient (frozen, or unreachable from the loss) are
/// skipped and their moment state does not advance.
#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    params: Vec<Param>,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: Vec<Param>) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: Vec<Param>, cfg: AdamConfig) -> Self {
        let states = params
            .iter()
            .map(|p| {
                let (r, c) = p.shape();
                AdamState::new(r, c)
            })
            .collect();
        Self {
            cfg,
            params,
            states,
        }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    /// Applies one update with the current gradients, then clears them.
    pub fn step(&mut self, lr: f64) -> Result<()> {
        for (p, state) in self.params.iter().zip(&mut self.states) {
            let Some(grad) = p.take_grad() else { continue };
            if p.is_frozen() {
                continue;
            }
            adam_step(&mut p.value_mut(), &grad, state, lr, &self.cfg)?;
        }
        Ok(())
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }
}
