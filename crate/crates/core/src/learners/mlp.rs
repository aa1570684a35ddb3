//! Feed-forward network with a sigmoid output unit, trained on L2-penalized
//! log-loss by minibatch SGD (momentum) or Adam.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dense_row, check_matrix, sigmoid, softplus};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
const BATCH_SIZE: usize = 200;
const TOL: f64 = 1e-4;
const PATIENCE: usize = 10;
const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activated value.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Halve the SGD step after two consecutive non-improving epochs.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Sgd,
    Adam,
}

fn default_max_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// L2 penalty.
    pub alpha: f64,
    pub activation: Activation,
    pub lr_schedule: LrSchedule,
    pub solver: Solver,
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate_init: f64,
}

impl MlpParams {
    pub fn new(
        alpha: f64,
        activation: Activation,
        lr_schedule: LrSchedule,
        solver: Solver,
        hidden_sizes: Vec<usize>,
    ) -> Self {
        MlpParams {
            alpha,
            activation,
            lr_schedule,
            solver,
            hidden_sizes,
            max_epochs: DEFAULT_MAX_EPOCHS,
            learning_rate_init: DEFAULT_LEARNING_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input width, hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Per layer: weights (out × in, row-major) followed by biases.
    pub params: Vec<f64>,
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(sizes.len());
    let mut o = 0;
    offs.push(0);
    for w in sizes.windows(2) {
        o += w[0] * w[1] + w[1];
        offs.push(o);
    }
    offs
}

impl MlpModel {
    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Activations per layer; the last entry holds the output logit.
    fn forward(&self, params: &[f64], x: &[f64], offs: &[usize]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (nin, nout) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &params[offs[l]..offs[l] + nin * nout];
            let b = &params[offs[l] + nin * nout..offs[l + 1]];
            let input = &acts[l];
            let last = l + 1 == self.n_layers();
            let out: Vec<f64> = (0..nout)
                .map(|o| {
                    let z = b[o]
                        + w[o * nin..(o + 1) * nin]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logit(&self, x: &FeatureVector) -> Result<f64> {
        check_dense_row(x, self.layer_sizes[0])?;
        let offs = layer_offsets(&self.layer_sizes);
        Ok(self
            .forward(&self.params, &x.values, &offs)
            .last()
            .expect("output layer")[0])
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    fn layer<'p>(&self, params: &'p [f64], offs: &[usize], l: usize) -> (ArrayView2<'p, f64>, ArrayView1<'p, f64>) {
        let (nin, nout) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let split = offs[l] + nin * nout;
        let w = ArrayView2::from_shape((nout, nin), &params[offs[l]..split]).expect("layer shape");
        (w, ArrayView1::from(&params[split..offs[l + 1]]))
    }

    /// Penalized mean log-loss over the rows of `x` at `params`, and its
    /// gradient.
    fn batch_loss(&self, params: &[f64], x: ArrayView2<f64>, y: &[bool], alpha: f64, grad: &mut [f64]) -> f64 {
        let offs = layer_offsets(&self.layer_sizes);
        let nl = self.n_layers();
        let m = x.nrows() as f64;
        // post-activation outputs of every layer; the last holds the logits
        let mut outs: Vec<Array2<f64>> = Vec::with_capacity(nl);
        for l in 0..nl {
            let (w, b) = self.layer(params, &offs, l);
            let input = if l == 0 { x } else { outs[l - 1].view() };
            let mut z = input.dot(&w.t());
            z += &b;
            if l + 1 < nl {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            outs.push(z);
        }

        let mut loss = 0.0;
        let mut delta = Array2::zeros((x.nrows(), 1));
        for (r, &label) in y.iter().enumerate() {
            let z = outs[nl - 1][[r, 0]];
            loss += if label { softplus(-z) } else { softplus(z) };
            delta[[r, 0]] = sigmoid(z) - if label { 1.0 } else { 0.0 };
        }
        for l in (0..nl).rev() {
            let input = if l == 0 { x } else { outs[l - 1].view() };
            let gw = delta.t().dot(&input);
            let gb = delta.sum_axis(Axis(0));
            let nw = gw.len();
            for (g, v) in grad[offs[l]..offs[l] + nw].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            for (g, v) in grad[offs[l] + nw..offs[l + 1]].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            if l > 0 {
                let (w, _) = self.layer(params, &offs, l);
                let mut back = delta.dot(&w);
                back.zip_mut_with(&input, |d, &a| *d *= self.activation.derivative(a));
                delta = back;
            }
        }

        let mut penalty = 0.0;
        for (l, &off) in offs.iter().enumerate().take(nl) {
            let nw = self.layer_sizes[l] * self.layer_sizes[l + 1];
            for (g, &p) in grad[off..off + nw].iter_mut().zip(&params[off..off + nw]) {
                penalty += p * p;
                *g += alpha * p;
            }
        }
        grad.iter_mut().for_each(|g| *g /= m);
        (loss + 0.5 * alpha * penalty) / m
    }
}

fn design_matrix(rows: &[FeatureVector], idx: impl ExactSizeIterator<Item = usize>, d: usize) -> Array2<f64> {
    let n = idx.len();
    let mut data = Vec::with_capacity(n * d);
    for i in idx {
        data.extend_from_slice(&rows[i].values);
    }
    Array2::from_shape_vec((n, d), data).expect("dense rows of equal width")
}

/// Full-batch objective and gradient at the model's current parameters.
pub fn loss_and_gradient(model: &MlpModel, rows: &[FeatureVector], y: &[bool], alpha: f64) -> (f64, Vec<f64>) {
    let x = design_matrix(rows, 0..rows.len(), model.layer_sizes[0]);
    let mut grad = vec![0.0; model.params.len()];
    let loss = model.batch_loss(&model.params, x.view(), y, alpha, &mut grad);
    (loss, grad)
}

/// Glorot-uniform initialization of a network with the given widths.
pub fn init_model(layer_sizes: Vec<usize>, activation: Activation, rng: &mut impl Rng) -> MlpModel {
    let offs = layer_offsets(&layer_sizes);
    let mut params = vec![0.0; *offs.last().expect("non-empty")];
    for l in 0..layer_sizes.len() - 1 {
        let (nin, nout) = (layer_sizes[l], layer_sizes[l + 1]);
        let bound = (6.0 / (nin + nout) as f64).sqrt();
        for p in &mut params[offs[l]..offs[l + 1]] {
            *p = rng.random_range(-bound..bound);
        }
    }
    MlpModel {
        layer_sizes,
        activation,
        params,
    }
}

pub fn train_mlp(rows: &[FeatureVector], y: &[bool], hp: &MlpParams, seed: u64) -> Result<MlpModel> {
    if hp.hidden_sizes.is_empty() || hp.hidden_sizes.contains(&0) {
        return Err(Error::InvalidHyperParams(format!(
            "hidden layer sizes {:?}",
            hp.hidden_sizes
        )));
    }
    if !(hp.alpha >= 0.0 && hp.alpha.is_finite()) || hp.learning_rate_init.is_nan() || hp.learning_rate_init <= 0.0 {
        return Err(Error::InvalidHyperParams(format!(
            "alpha = {}, learning rate = {}",
            hp.alpha, hp.learning_rate_init
        )));
    }
    let d = check_matrix(rows, y, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![d];
    sizes.extend(&hp.hidden_sizes);
    sizes.push(1);
    let mut model = init_model(sizes, hp.activation, &mut rng);

    let n = rows.len();
    let batch = BATCH_SIZE.min(n);
    let np = model.params.len();
    let mut grad = vec![0.0; np];
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let mut t = 0i32;
    let mut lr = hp.learning_rate_init;
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut ys: Vec<bool> = Vec::with_capacity(batch);

    for _ in 0..hp.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            ys.clear();
            ys.extend(chunk.iter().map(|&i| y[i]));
            let xs = design_matrix(rows, chunk.iter().copied(), d);
            let params = std::mem::take(&mut model.params);
            epoch_loss += model.batch_loss(&params, xs.view(), &ys, hp.alpha, &mut grad) * chunk.len() as f64;
            model.params = params;
            match hp.solver {
                Solver::Sgd => {
                    for k in 0..np {
                        m1[k] = MOMENTUM * m1[k] - lr * grad[k];
                        model.params[k] += m1[k];
                    }
                }
                Solver::Adam => {
                    t += 1;
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    let step = lr * c2.sqrt() / c1;
                    for k in 0..np {
                        m1[k] = BETA1 * m1[k] + (1.0 - BETA1) * grad[k];
                        m2[k] = BETA2 * m2[k] + (1.0 - BETA2) * grad[k] * grad[k];
                        model.params[k] -= step * m1[k] / (m2[k].sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        epoch_loss /= n as f64;
        if epoch_loss < best - TOL {
            stale = 0;
        } else {
            stale += 1;
            if hp.solver == Solver::Sgd && hp.lr_schedule == LrSchedule::Adaptive && stale % 2 == 0 {
                lr /= 2.0;
            }
        }
        best = best.min(epoch_loss);
        if stale >= PATIENCE {
            break;
        }
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonConvergent);
    }
    Ok(model)
}
