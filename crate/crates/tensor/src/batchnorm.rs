use crate::error::{Result, TensorError};
use crate::params::ParamId;
use crate::tape::{BatchStats, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics and hyper-parameters of one batch-normalization layer.
/// The learned scale and shift live in the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(gamma: ParamId, beta: ParamId, features: usize) -> Self {
        Self {
            gamma,
            beta,
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.99,
            epsilon: 1e-3,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes `x` (`batch x features`). In train mode the batch
    /// statistics are returned for [`BatchNormState::update`].
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        let t = tape.value(x);
        if t.last_dim() != self.features() {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                lhs: t.shape().to_vec(),
                rhs: vec![self.features()],
            });
        }
        let (g, b) = (tape.param(self.gamma), tape.param(self.beta));
        match mode {
            Mode::Train => tape.batch_norm(x, g, b, self.epsilon, None),
            Mode::Infer => tape.batch_norm(x, g, b, self.epsilon, Some((&self.running_mean, &self.running_var))),
        }
    }

    /// `running <- momentum*running + (1-momentum)*batch`
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}
