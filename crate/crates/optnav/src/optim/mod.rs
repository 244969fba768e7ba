//! Practical optimizer steppers and a desk-scale training harness: SGD,
//! Adam, the heuristic ballistic rule, a small manually-differentiated MLP,
//! synthetic datasets, and IDX ingestion.

pub mod data;
pub mod mlp;
pub mod proxy;
pub mod train;

use crate::error::{Error, Result};

/// Which stepper to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Ballistic,
}

/// Stepper configuration. β₁ and bias correction apply to Adam only; β₂ and
/// ε to Adam and the ballistic rule.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 1e-8,
            bias_correction: false,
            seed: 0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correction: true,
            seed: 0,
        }
    }

    pub fn ballistic(learning_rate: f64, beta2: f64) -> Self {
        Self {
            kind: OptimizerKind::Ballistic,
            learning_rate,
            beta1: 0.0,
            beta2,
            epsilon: 1e-8,
            bias_correction: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = "OptimizerConfig";
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid(ctx, "learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(ctx, "beta1, beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(ctx, "epsilon must be > 0"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Stepper> {
        self.validate()?;
        Ok(Stepper::new(*self))
    }
}

/// A stateful optimizer over flat parameter slices.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: OptimizerConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl Stepper {
    fn new(cfg: OptimizerConfig) -> Self {
        Self { cfg, first_moment: Vec::new(), second_moment: Vec::new(), steps: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.cfg.kind
    }

    /// Running second-moment estimates (empty before the first step or for SGD).
    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    fn ensure_state(&mut self, n: usize) {
        if self.second_moment.len() != n {
            self.second_moment = vec![0.0; n];
        }
        if self.cfg.kind == OptimizerKind::Adam && self.first_moment.len() != n {
            self.first_moment = vec![0.0; n];
        }
    }

    /// Apply one update in place. Panics only on shape mismatch between
    /// params and grads (a programming error, not data-dependent).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        self.ensure_state(params.len());
        self.steps += 1;
        let c = &self.cfg;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= c.learning_rate * g;
                }
            }
            OptimizerKind::Ballistic => {
                // v ← β₂ v + (1-β₂) g²;  Δθ = -η g / (√v + ε)
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second_moment) {
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *p -= c.learning_rate * g / (v.sqrt() + c.epsilon);
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let (bc1, bc2) = if c.bias_correction {
                    (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t))
                } else {
                    (1.0, 1.0)
                };
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
                {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
        }
    }
}

/// One SGD update: `Δθ = -η g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
}

/// One ballistic update; `state` holds the running gradient-square average.
pub fn ballistic_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut [f64],
    learning_rate: f64,
    beta2: f64,
    epsilon: f64,
) {
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= learning_rate * g / (v.sqrt() + epsilon);
    }
}
