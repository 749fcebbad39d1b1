//! The target model of the inner loop: softmax regression or a one-hidden-layer
//! tanh MLP, with exact per-example cross-entropy gradients and minibatch SGD
//! with Nesterov momentum, weight decay and a step-decay learning rate.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sampler::alias::AliasTable;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    SoftmaxRegression,
    Mlp1 { hidden: usize },
}

/// Flat parameter layout.
///
/// * softmax regression: `W (K x d)`, `b (K)`
/// * mlp1: `W1 (h x d)`, `b1 (h)`, `W2 (K x h)`, `b2 (K)`
///
/// All matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    arch: Architecture,
    input_dim: usize,
    num_classes: usize,
    params: Vec<f64>,
    momentum: Vec<f64>,
}

/// On-disk form of a model. Momentum buffers are not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: Vec<f64>,
}

fn param_count(arch: Architecture, d: usize, k: usize) -> usize {
    match arch {
        Architecture::SoftmaxRegression => k * d + k,
        Architecture::Mlp1 { hidden: h } => h * d + h + k * h + k,
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn matvec(m: &[f64], rows: usize, x: &[f64], bias: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] = bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl ModelWeights {
    /// Uniform init in `±1/sqrt(fan_in)` for weight matrices, zero biases,
    /// zero momentum.
    pub fn init(
        arch: Architecture,
        input_dim: usize,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::invalid("need input_dim >= 1 and num_classes >= 2"));
        }
        if let Architecture::Mlp1 { hidden: 0 } = arch {
            return Err(Error::invalid("mlp1 needs at least one hidden unit"));
        }
        let mut rng = rng_from_seed(seed);
        let mut uniform = |fan_in: usize, len: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let (d, k) = (input_dim, num_classes);
        let params = match arch {
            Architecture::SoftmaxRegression => {
                let mut p = uniform(d, k * d);
                p.extend(std::iter::repeat_n(0.0, k));
                p
            }
            Architecture::Mlp1 { hidden: h } => {
                let mut p = uniform(d, h * d);
                p.extend(std::iter::repeat_n(0.0, h));
                p.extend(uniform(h, k * h));
                p.extend(std::iter::repeat_n(0.0, k));
                p
            }
        };
        let momentum = vec![0.0; params.len()];
        Ok(ModelWeights {
            arch,
            input_dim,
            num_classes,
            params,
            momentum,
        })
    }

    /// A model whose parameters are all zero (uniform predictions).
    pub fn zeros(arch: Architecture, input_dim: usize, num_classes: usize) -> Result<Self> {
        let mut w = Self::init(arch, input_dim, num_classes, 0)?;
        w.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(w)
    }

    pub fn from_params(
        arch: Architecture,
        input_dim: usize,
        num_classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::invalid("need input_dim >= 1 and num_classes >= 2"));
        }
        let expected = param_count(arch, input_dim, num_classes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(ModelWeights {
            arch,
            input_dim,
            num_classes,
            momentum: vec![0.0; params.len()],
            params,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    pub fn reset_momentum(&mut self) {
        self.momentum.iter_mut().for_each(|m| *m = 0.0);
    }

    /// Shapes of the parameter blocks as `(rows, cols)`; biases have `cols == 1`.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let (d, k) = (self.input_dim, self.num_classes);
        match self.arch {
            Architecture::SoftmaxRegression => vec![(k, d), (k, 1)],
            Architecture::Mlp1 { hidden: h } => vec![(h, d), (h, 1), (k, h), (k, 1)],
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            architecture: self.arch,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        Self::from_params(ck.architecture, ck.input_dim, ck.num_classes, ck.params)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::invalid(format!(
                "label {y} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Logits plus (for mlp1) the hidden activations.
    fn logits(&self, x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
        let (d, k) = (self.input_dim, self.num_classes);
        let mut z = vec![0.0; k];
        match self.arch {
            Architecture::SoftmaxRegression => {
                let (w, b) = self.params.split_at(k * d);
                matvec(w, k, x, b, &mut z);
            }
            Architecture::Mlp1 { hidden: h } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                hidden.resize(h, 0.0);
                matvec(w1, h, x, b1, hidden);
                hidden.iter_mut().for_each(|a| *a = a.tanh());
                matvec(w2, k, hidden, b2, &mut z);
            }
        }
        z
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut z = self.logits(x, &mut Vec::new());
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Cross-entropy `-ln p[y]`.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        self.check_input(x)?;
        let z = self.logits(x, &mut Vec::new());
        // log-sum-exp form keeps saturated predictions finite
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok((lse - z[y]).max(0.0))
    }

    /// Adds `scale * dL/dparams` at `(x, y)` into `grad` and returns the
    /// predicted probabilities.
    fn accumulate_gradient(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64]) -> Vec<f64> {
        let (d, k) = (self.input_dim, self.num_classes);
        let mut hidden = Vec::new();
        let mut p = self.logits(x, &mut hidden);
        softmax_in_place(&mut p);
        let mut dz = p.clone();
        dz[y] -= 1.0;
        match self.arch {
            Architecture::SoftmaxRegression => {
                let (gw, gb) = grad.split_at_mut(k * d);
                for c in 0..k {
                    let s = scale * dz[c];
                    for (g, xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *g += s * xi;
                    }
                    gb[c] += s;
                }
            }
            Architecture::Mlp1 { hidden: h } => {
                let w2 = &self.params[h * d + h..h * d + h + k * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                let mut da = vec![0.0; h];
                for c in 0..k {
                    let s = scale * dz[c];
                    let w2_row = &w2[c * h..(c + 1) * h];
                    for j in 0..h {
                        gw2[c * h + j] += s * hidden[j];
                        da[j] += dz[c] * w2_row[j];
                    }
                    gb2[c] += s;
                }
                for j in 0..h {
                    let s = scale * da[j] * (1.0 - hidden[j] * hidden[j]);
                    for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += s * xi;
                    }
                    gb1[j] += s;
                }
            }
        }
        p
    }

    /// Full-parameter gradient of the cross-entropy loss at `(x, y)`.
    pub fn gradient(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_label(y)?;
        self.check_input(x)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_gradient(x, y, 1.0, &mut g);
        Ok(g)
    }

    /// Euclidean norm of the full-parameter gradient at `(x, y)`.
    pub fn grad_norm(&self, x: &[f64], y: usize) -> Result<f64> {
        Ok(self
            .gradient(x, y)?
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt())
    }

    /// Predicted class, ties broken toward the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let z = self.logits(x, &mut Vec::new());
        let mut best = 0;
        for c in 1..z.len() {
            if z[c] > z[best] {
                best = c;
            }
        }
        Ok(best)
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if !ds.is_empty() && ds.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: ds.dim(),
            });
        }
        if ds.num_classes() != self.num_classes {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes,
                found: ds.num_classes(),
            });
        }
        Ok(())
    }
}

/// Optimizer settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epoch indices (0-based) at which the learning rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-3,
            epochs: 30,
            lr_decay_epochs: vec![15, 25],
            lr_decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }

    /// Learning rate in effect during the final epoch.
    pub fn final_lr(&self) -> f64 {
        self.lr_at(self.epochs.saturating_sub(1))
    }

    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::invalid(format!(
                "batch_size {} must be in [1, {n_train}]",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// Train `w0` on `train`, drawing each minibatch with replacement from
/// `probs` (uniform when `None`). Returns the trained weights, including the
/// final momentum buffers.
pub fn train(
    w0: &ModelWeights,
    train: &Dataset,
    probs: Option<&[f64]>,
    hyper: &TrainHyper,
) -> Result<ModelWeights> {
    train_with_epoch_hook(w0, train, probs, hyper, |_, _| {})
}

/// Same as [`train`], calling `hook(epoch, &weights)` after every epoch.
pub fn train_with_epoch_hook<F>(
    w0: &ModelWeights,
    train: &Dataset,
    probs: Option<&[f64]>,
    hyper: &TrainHyper,
    mut hook: F,
) -> Result<ModelWeights>
where
    F: FnMut(usize, &ModelWeights),
{
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    w0.check_dataset(train)?;
    hyper.validate(train.len())?;
    let n = train.len();
    let alias = match probs {
        Some(p) => {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.len(),
                });
            }
            AliasTable::new(p)?
        }
        None => AliasTable::uniform(n)?,
    };

    let mut w = w0.clone();
    let mut rng = rng_from_seed(hyper.seed);
    let steps = n.div_ceil(hyper.batch_size);
    let mut grad = vec![0.0; w.params.len()];
    let mut batch = Vec::with_capacity(hyper.batch_size);
    let scale = 1.0 / hyper.batch_size as f64;
    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch);
        for _ in 0..steps {
            alias.sample_into(hyper.batch_size, &mut rng, &mut batch);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in &batch {
                w.accumulate_gradient(train.feature(i), train.labels()[i], scale, &mut grad);
            }
            // Nesterov momentum with L2 weight decay folded into the gradient.
            let mu = hyper.momentum;
            for ((p, buf), g) in w.params.iter_mut().zip(w.momentum.iter_mut()).zip(&grad) {
                let g = g + hyper.weight_decay * *p;
                *buf = mu * *buf + g;
                *p -= lr * (g + mu * *buf);
            }
        }
        hook(epoch, &w);
    }
    Ok(w)
}

/// Top-1 accuracy on `ds`.
pub fn evaluate(w: &ModelWeights, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    w.check_dataset(ds)?;
    let mut correct = 0usize;
    for (x, &y) in ds.features().iter().zip(ds.labels()) {
        if w.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Mean cross-entropy over `ds`.
pub fn mean_loss(w: &ModelWeights, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    w.check_dataset(ds)?;
    let mut total = 0.0;
    for (x, &y) in ds.features().iter().zip(ds.labels()) {
        total += w.loss(x, y)?;
    }
    Ok(total / ds.len() as f64)
}
