use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// RMSprop hyper-parameters. Defaults follow the usual library defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

/// One elementwise RMSprop update:
/// `accum <- rho*accum + (1-rho)*grad^2`, `param <- param - lr*grad/(sqrt(accum)+eps)`.
pub fn rmsprop_step(param: &mut [f64], grad: &[f64], accum: &mut [f64], cfg: &RmsPropConfig) {
    assert_eq!(param.len(), grad.len(), "rmsprop: param/grad length");
    assert_eq!(param.len(), accum.len(), "rmsprop: param/accum length");
    for ((p, &g), a) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *a = cfg.rho * *a + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (a.sqrt() + cfg.epsilon);
    }
}

/// Optimizer state: one accumulator per parameter of a store.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    accum: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, config: RmsPropConfig) -> Self {
        let accum = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self { config, accum }
    }

    pub fn accumulator(&self, id: ParamId) -> &[f64] {
        &self.accum[id.index()]
    }

    /// Applies one update. Parameters without a gradient still have their
    /// accumulator decayed, as for a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], frozen: &[ParamId]) {
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            if frozen.contains(&id) {
                continue;
            }
            let accum = &mut self.accum[id.index()];
            let param = store.get_mut(id).data_mut();
            match grads.get(id.index()).and_then(Option::as_ref) {
                Some(g) => rmsprop_step(param, g.data(), accum, &self.config),
                None => accum.iter_mut().for_each(|a| *a *= self.config.rho),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = vec![1.5, -2.0];
        let mut acc = vec![0.4, 1.0];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut acc, &RmsPropConfig::default());
        assert_eq!(p, vec![1.5, -2.0]);
        assert!((acc[0] - 0.36).abs() < 1e-15);
        assert!((acc[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn first_step_from_rest() {
        let mut p = vec![0.0];
        let mut acc = vec![0.0];
        rmsprop_step(&mut p, &[1.0], &mut acc, &RmsPropConfig::default());
        assert!((acc[0] - 0.1).abs() < 1e-15);
        // -0.001 / (sqrt(0.1) + 1e-7)
        assert!((p[0] + 0.0031623).abs() < 1e-7, "{}", p[0]);
    }

    #[test]
    fn deterministic_steps() {
        let run = || {
            let mut p = vec![0.2, 0.7];
            let mut acc = vec![0.0, 0.0];
            for _ in 0..2 {
                rmsprop_step(&mut p, &[0.3, -0.1], &mut acc, &RmsPropConfig::default());
            }
            (p, acc)
        };
        assert_eq!(run(), run());
    }
}
