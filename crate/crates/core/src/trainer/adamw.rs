use crate::error::{Error, Result};
use crate::vit::{GradientSet, TinyViT, ViTParams};

use super::TrainConfig;

/// AdamW moments and step counter for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: ViTParams,
    pub second_moment: ViTParams,
    pub current_lr: f64,
}

impl OptimizerState {
    pub fn new(model: &TinyViT, lr: f64) -> Self {
        let zeros = ViTParams::zeros(model.config());
        Self {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            current_lr: lr,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(
    model: &mut TinyViT,
    grads: &GradientSet,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Numerical(format!(
            "non-finite gradient at optimizer step {}",
            state.step_count + 1
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let lr = state.current_lr;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;

    let g = grads.named();
    let params = model.params.slices_mut();
    let ms = state.first_moment.slices_mut();
    let vs = state.second_moment.slices_mut();
    for (((theta, (_, g)), m), v) in params.into_iter().zip(g).zip(ms).zip(vs) {
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] = theta[i] * decay - lr * (m_hat / (v_hat.sqrt() + cfg.epsilon));
        }
    }
    Ok(())
}
