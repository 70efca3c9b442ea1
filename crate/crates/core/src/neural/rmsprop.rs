use super::model::{Gradients, SiameseModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    pub mean_square: Gradients,
}

impl RmsPropState {
    pub fn new(model: &SiameseModel, config: RmsPropConfig) -> Self {
        RmsPropState {
            config,
            mean_square: model.zeros_like(),
        }
    }
}

/// `ms = rho * ms + (1 - rho) * g^2; theta -= lr * g / (sqrt(ms) + eps)`
pub fn rmsprop_update(theta: &mut [f64], grad: &[f64], mean_square: &mut [f64], cfg: &RmsPropConfig) {
    for ((t, &g), ms) in theta.iter_mut().zip(grad).zip(mean_square.iter_mut()) {
        *ms = cfg.rho * *ms + (1.0 - cfg.rho) * g * g;
        *t -= cfg.learning_rate * g / (ms.sqrt() + cfg.epsilon);
    }
}

pub fn rmsprop_step(model: &mut SiameseModel, grads: &Gradients, state: &mut RmsPropState) {
    let cfg = state.config;
    for ((theta, g), ms) in model
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.mean_square.tensors_mut())
    {
        rmsprop_update(theta.data_mut(), g.data(), ms.data_mut(), &cfg);
    }
}
