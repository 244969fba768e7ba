//! A small multilayer perceptron with hand-written backpropagation:
//! fully-connected layers, relu/tanh hidden activations, softmax
//! cross-entropy loss.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture: layer widths from input to output, hidden activation,
/// weight init scale, init seed.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub init_scale: f64,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, init_scale: f64, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("MlpSpec::new", "need >= 2 nonzero layer widths"));
        }
        if !(init_scale > 0.0) {
            return Err(Error::invalid("MlpSpec::new", "init_scale must be > 0"));
        }
        Ok(Self { widths, activation, init_scale, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Fan-in-scaled Gaussian init, deterministic in the seed.
    pub fn init_params(&self) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let layers = self
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = self.init_scale / (fan_in as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| -> f64 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                });
                (weights, DVector::zeros(fan_out))
            })
            .collect();
        MlpParams { layers }
    }
}

/// Weights and biases, one pair per layer.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl MlpParams {
    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len())))
                .collect(),
        }
    }

    /// All-zero parameters with the spec's shapes.
    pub fn zeros(spec: &MlpSpec) -> MlpParams {
        MlpParams {
            layers: spec
                .widths
                .windows(2)
                .map(|w| (DMatrix::zeros(w[1], w[0]), DVector::zeros(w[1])))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let mut i = 0;
        for (w, b) in &mut self.layers {
            for x in w.iter_mut() {
                *x = flat[i];
                i += 1;
            }
            for x in b.iter_mut() {
                *x = flat[i];
                i += 1;
            }
        }
        debug_assert_eq!(i, flat.len());
    }
}

fn activate(x: f64, act: Activation) -> f64 {
    match act {
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
    }
}

fn activate_grad(pre: f64, act: Activation) -> f64 {
    match act {
        Activation::Relu => {
            if pre > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => {
            let t = pre.tanh();
            1.0 - t * t
        }
    }
}

/// Mean softmax cross-entropy over a batch plus exact parameter gradients.
pub struct ForwardBackward {
    pub loss: f64,
    pub grads: MlpParams,
    /// Arg-max predictions per example.
    pub predictions: Vec<usize>,
}

/// Forward and backward pass on a batch. `inputs` holds one example per row;
/// `labels` are class indices.
pub fn mlp_forward_backward(
    spec: &MlpSpec,
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    labels: &[usize],
) -> Result<ForwardBackward> {
    let ctx = "optim::mlp_forward_backward";
    if inputs.ncols() != spec.input_dim() {
        return Err(Error::invalid(
            ctx,
            format!("input width {} != spec input dim {}", inputs.ncols(), spec.input_dim()),
        ));
    }
    if inputs.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::invalid(ctx, "batch rows must match labels and be nonempty"));
    }
    let classes = spec.output_dim();
    if labels.iter().any(|&l| l >= classes) {
        return Err(Error::invalid(ctx, "label out of range"));
    }

    let batch = inputs.nrows();
    let n_layers = params.layers.len();

    // Forward, keeping pre-activations and activations per layer
    // (column-major batches: one example per column).
    let mut activations: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers + 1);
    activations.push(inputs.transpose());
    let mut pre_activations: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers);
    for (li, (w, b)) in params.layers.iter().enumerate() {
        let mut z = w * activations.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += b;
        }
        let a = if li + 1 < n_layers {
            z.map(|x| activate(x, spec.activation))
        } else {
            z.clone() // linear output layer; softmax applied below
        };
        pre_activations.push(z);
        activations.push(a);
    }

    // Softmax cross-entropy with the max-shift trick.
    let logits = activations.last().unwrap();
    let mut loss = 0.0;
    let mut delta = DMatrix::zeros(classes, batch); // dL/dlogits
    let mut predictions = Vec::with_capacity(batch);
    for (col, &label) in labels.iter().enumerate() {
        let column = logits.column(col);
        let max = column.max();
        let mut denom = 0.0;
        for i in 0..classes {
            denom += (column[i] - max).exp();
        }
        loss += -(column[label] - max - denom.ln());
        let mut best = 0;
        for i in 0..classes {
            let p = (column[i] - max).exp() / denom;
            delta[(i, col)] = p / batch as f64;
            if column[i] > column[best] {
                best = i;
            }
        }
        delta[(label, col)] -= 1.0 / batch as f64;
        predictions.push(best);
    }
    loss /= batch as f64;

    // Backward.
    let mut grads = params.zeros_like();
    let mut upstream = delta;
    for li in (0..n_layers).rev() {
        let (gw, gb) = &mut grads.layers[li];
        *gw = &upstream * activations[li].transpose();
        *gb = DVector::from_fn(gw.nrows(), |r, _| upstream.row(r).sum());
        if li > 0 {
            let mut down = params.layers[li].0.transpose() * upstream;
            down.zip_apply(&pre_activations[li - 1], |d, z| {
                *d *= activate_grad(z, spec.activation)
            });
            upstream = down;
        }
    }

    Ok(ForwardBackward { loss, grads, predictions })
}

/// Fraction of correctly argmax-classified examples.
pub fn accuracy(spec: &MlpSpec, params: &MlpParams, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let fb = mlp_forward_backward(spec, params, inputs, labels)?;
    let correct = fb
        .predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
