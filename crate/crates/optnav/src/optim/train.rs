//! Deterministic mini-batch training loop for the small MLP.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::data::Dataset;
use crate::optim::mlp::{accuracy, mlp_forward_backward, MlpParams, MlpSpec};
use crate::optim::OptimizerConfig;

/// Loop controls; evaluation happens every `eval_every` steps and at the end.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, batch_size: 64, eval_every: 50, seed: 0 }
    }
}

/// One evaluation point of the training curves.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub final_params: MlpParams,
    pub steps: usize,
}

/// Train an MLP on `train` with held-out `test`, deterministically in
/// `cfg.seed` (shuffle order and init are seeded; curves are bit-stable
/// across runs).
pub fn train(
    spec: &MlpSpec,
    train: &Dataset,
    test: &Dataset,
    opt: &OptimizerConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let ctx = "optim::train";
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid(ctx, "train and test sets must be nonempty"));
    }
    if train.feature_dim() != spec.input_dim() || test.feature_dim() != spec.input_dim() {
        return Err(Error::invalid(ctx, "dataset width does not match the model"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid(ctx, "batch_size and epochs must be >= 1"));
    }
    let mut params = MlpSpec { seed: cfg.seed, ..spec.clone() }.init_params();
    let mut stepper = opt.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut flat = params.flatten();
    let mut curve = Vec::new();
    let mut step = 0usize;

    let mut evaluate = |params: &MlpParams, step: usize, loss: f64, curve: &mut Vec<CurvePoint>| -> Result<()> {
        let acc = accuracy(spec, params, &test.inputs, &test.labels)?;
        curve.push(CurvePoint { step, train_loss: loss, test_accuracy: acc });
        Ok(())
    };

    for _epoch in 0..cfg.epochs {
        // Seeded Fisher-Yates shuffle per epoch.
        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = DMatrix::from_fn(chunk.len(), train.feature_dim(), |r, c| {
                train.inputs[(chunk[r], c)]
            });
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let fb = mlp_forward_backward(spec, &params, &inputs, &labels)?;
            if !fb.loss.is_finite() {
                return Err(Error::DivergedTraining { step, loss: fb.loss });
            }
            let grads = fb.grads.flatten();
            stepper.step(&mut flat, &grads);
            params.unflatten_into(&flat);
            step += 1;
            if step % cfg.eval_every == 0 {
                evaluate(&params, step, fb.loss, &mut curve)?;
            }
        }
    }
    // Final point if the loop did not land on an eval boundary.
    if curve.last().map(|p| p.step) != Some(step) {
        let fb = mlp_forward_backward(
            spec,
            &params,
            &train.inputs,
            &train.labels,
        )?;
        evaluate(&params, step, fb.loss, &mut curve)?;
    }
    Ok(TrainReport { curve, final_params: params, steps: step })
}
