//! Softmax classifiers with hand-written gradients and the loss oracles the
//! federated methods optimize.
//!
//! A [`Model`] only knows how to map one example to logits and how to
//! back-propagate the cross-entropy of one example. Batching, validation and
//! numerical checks are layered on top by [`loss_value`], [`loss_gradient`]
//! and [`DatasetLoss`].

mod dnn;
mod mclr;
mod quadratic;

pub use dnn::{Dnn, LEAKY_RELU_SLOPE};
pub use mclr::Mclr;
pub use quadratic::QuadraticLoss;

use rand::seq::index;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::params::ParamVector;
use crate::rng::RngStream;

/// One block of a flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Per-layer offsets into a [`ParamVector`]. The blocks are contiguous and
/// cover the vector exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    layers: Vec<LayerShape>,
}

impl Layout {
    pub fn from_shapes(shapes: &[(&'static str, usize, usize)]) -> Self {
        let mut offset = 0;
        let layers = shapes
            .iter()
            .map(|&(name, rows, cols)| {
                let layer = LayerShape {
                    name,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn total_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.offset + l.len())
    }
}

pub trait Model: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn layout(&self) -> &Layout;
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;

    fn num_params(&self) -> usize {
        self.layout().total_len()
    }

    /// Per-layer uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    fn init_params(&self, rng: &mut RngStream) -> ParamVector;

    fn logits(&self, params: &[f64], x: &[f32]) -> Vec<f64>;

    /// Adds the cross-entropy gradient of a single example to `grad` and
    /// returns that example's loss.
    fn accumulate_example(&self, params: &[f64], x: &[f32], label: usize, grad: &mut [f64])
        -> f64;
}

pub const MODEL_NAMES: &[&str] = &["mclr", "dnn"];

/// Builds a model by name. `hidden` is only used by `dnn`.
pub fn model_by_name(
    name: &str,
    input_dim: usize,
    num_classes: usize,
    hidden: usize,
) -> Result<Box<dyn Model>> {
    match name {
        "mclr" => Ok(Box::new(Mclr::new(input_dim, num_classes))),
        "dnn" => Ok(Box::new(Dnn::new(input_dim, hidden, num_classes))),
        other => Err(Error::UnknownName {
            kind: "model",
            name: other.to_string(),
            known: MODEL_NAMES.join(", "),
        }),
    }
}

pub(crate) fn uniform_fill(rng: &mut RngStream, out: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..=bound);
    }
}

/// Numerically stable `log(sum(exp(z)))`.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of one example given its logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

fn check_params(model: &dyn Model, params: &ParamVector) -> Result<()> {
    check_dims(model.num_params(), params.len())
}

fn check_batch(model: &dyn Model, data: &Dataset, batch: &[usize]) -> Result<()> {
    check_dims(model.input_dim(), data.dims())?;
    if batch.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    Ok(())
}

/// Mean cross-entropy over `batch` (indices into `data`).
pub fn loss_value(
    model: &dyn Model,
    params: &ParamVector,
    data: &Dataset,
    batch: &[usize],
) -> Result<f64> {
    check_params(model, params)?;
    check_batch(model, data, batch)?;
    let total: f64 = batch
        .iter()
        .map(|&i| cross_entropy(&model.logits(params.as_slice(), data.features(i)), data.label(i)))
        .sum();
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical {
            step: 0,
            what: format!("{} forward pass produced loss {loss}", model.name()),
        });
    }
    Ok(loss)
}

/// Mean cross-entropy and its gradient over `batch`.
pub fn loss_and_gradient(
    model: &dyn Model,
    params: &ParamVector,
    data: &Dataset,
    batch: &[usize],
) -> Result<(f64, ParamVector)> {
    check_params(model, params)?;
    check_batch(model, data, batch)?;
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    for &i in batch {
        total += model.accumulate_example(params.as_slice(), data.features(i), data.label(i), &mut grad);
    }
    let inv = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    let loss = total * inv;
    let grad = ParamVector::new(grad);
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::Numerical {
            step: 0,
            what: format!("{} backward pass produced a non-finite value", model.name()),
        });
    }
    Ok((loss, grad))
}

pub fn loss_gradient(
    model: &dyn Model,
    params: &ParamVector,
    data: &Dataset,
    batch: &[usize],
) -> Result<ParamVector> {
    loss_and_gradient(model, params, data, batch).map(|(_, g)| g)
}

/// Class probabilities for one input.
pub fn predict(model: &dyn Model, params: &ParamVector, features: &[f32]) -> Result<Vec<f64>> {
    check_params(model, params)?;
    check_dims(model.input_dim(), features.len())?;
    Ok(softmax(&model.logits(params.as_slice(), features)))
}

/// A (possibly stochastic) differentiable objective over a finite set of
/// examples. Batches are positions in `0..num_examples()`.
pub trait LossOracle: Sync {
    fn num_examples(&self) -> usize;
    fn value(&self, params: &ParamVector, batch: &[usize]) -> Result<f64>;
    fn gradient(&self, params: &ParamVector, batch: &[usize]) -> Result<ParamVector>;
}

/// Draws a mini-batch of positions without replacement. Returns every
/// position when `batch_size >= n`.
pub fn sample_batch(n: usize, batch_size: usize, rng: &mut RngStream) -> Vec<usize> {
    if batch_size >= n {
        (0..n).collect()
    } else {
        index::sample(rng, n, batch_size).into_vec()
    }
}

pub fn full_batch(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Cross-entropy of a model over a view (a list of example indices) of a
/// dataset.
#[derive(Clone, Copy, Debug)]
pub struct DatasetLoss<'a> {
    pub model: &'a dyn Model,
    pub data: &'a Dataset,
    pub view: &'a [usize],
}

impl<'a> DatasetLoss<'a> {
    pub fn new(model: &'a dyn Model, data: &'a Dataset, view: &'a [usize]) -> Self {
        Self { model, data, view }
    }

    fn resolve(&self, batch: &[usize]) -> Vec<usize> {
        batch.iter().map(|&p| self.view[p]).collect()
    }
}

impl LossOracle for DatasetLoss<'_> {
    fn num_examples(&self) -> usize {
        self.view.len()
    }

    fn value(&self, params: &ParamVector, batch: &[usize]) -> Result<f64> {
        loss_value(self.model, params, self.data, &self.resolve(batch))
    }

    fn gradient(&self, params: &ParamVector, batch: &[usize]) -> Result<ParamVector> {
        loss_gradient(self.model, params, self.data, &self.resolve(batch))
    }
}
