//! Evaluation and analysis: global and data-weighted local tests, the
//! generalized coherence estimate of envelope gradients, per-class loss
//! deviations and Savitzky-Golay smoothing of metric series.

mod gce;
mod savgol;

pub use gce::gce;
pub use savgol::{savitzky_golay, savitzky_golay_with, EdgeMode};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Partition};
use crate::error::{check_dims, Error, Result};
use crate::model::{cross_entropy, Model};
use crate::params::ParamVector;

/// Metrics recorded after every global round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Global model on the union of all local test splits.
    pub global_acc_globaltest: f64,
    /// Personalized models on their own test splits, weighted by split size.
    pub personalized_acc_localtest: f64,
    /// Personalized models' cross-entropy on their own test splits, weighted
    /// by split size.
    pub mean_local_loss: f64,
    /// Coherence of the sampled clients' last envelope gradients; `None`
    /// for methods without envelope gradients or fewer than two of them.
    pub gce: Option<f64>,
    /// Per-class deviation of the first client's global-test loss.
    pub per_class_deviation_global: Vec<f64>,
    /// Per-class deviation of the first client's local-test loss.
    pub per_class_deviation_local: Vec<f64>,
}

/// Accuracy and per-class cross-entropy of one parameter vector on a set of
/// examples.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub count: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    /// Mean loss per class; zero for classes without examples.
    pub per_class_loss: Vec<f64>,
    pub per_class_count: Vec<usize>,
}

pub fn evaluate(model: &dyn Model, params: &ParamVector, data: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    check_dims(model.num_params(), params.len())?;
    check_dims(model.input_dim(), data.dims())?;
    if indices.is_empty() {
        return Err(Error::Degenerate("empty evaluation set".into()));
    }
    let c = data.num_classes();
    let mut loss_sum = vec![0.0; c];
    let mut count = vec![0usize; c];
    let mut correct = 0usize;
    for &i in indices {
        let logits = model.logits(params.as_slice(), data.features(i));
        let label = data.label(i);
        let predicted = (0..logits.len())
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        correct += usize::from(predicted == label);
        loss_sum[label] += cross_entropy(&logits, label);
        count[label] += 1;
    }
    let total: f64 = loss_sum.iter().sum();
    let mean_loss = total / indices.len() as f64;
    if !mean_loss.is_finite() {
        return Err(Error::Numerical {
            step: 0,
            what: "non-finite evaluation loss".into(),
        });
    }
    let per_class_loss = loss_sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    Ok(Evaluation {
        count: indices.len(),
        accuracy: correct as f64 / indices.len() as f64,
        mean_loss,
        per_class_loss,
        per_class_count: count,
    })
}

/// Accuracy and per-class loss on the global test set.
pub fn evaluate_global(
    model: &dyn Model,
    params: &ParamVector,
    data: &Dataset,
    global_test: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let e = evaluate(model, params, data, global_test)?;
    Ok((e.accuracy, e.per_class_loss))
}

/// Result of testing every client's model on its own test split.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalEvaluation {
    /// `Σ_i n_i acc_i / Σ_i n_i`
    pub weighted_accuracy: f64,
    pub weighted_loss: f64,
    /// Class-count-weighted mean over clients of the per-class loss.
    pub per_class_loss_means: Vec<f64>,
    pub per_client: Vec<Evaluation>,
}

/// Combines per-client evaluations (one per client, in client order).
pub fn combine_local(per_client: Vec<Evaluation>) -> Result<LocalEvaluation> {
    let total: usize = per_client.iter().map(|e| e.count).sum();
    if total == 0 {
        return Err(Error::Degenerate("no local test examples".into()));
    }
    let weighted = |f: fn(&Evaluation) -> f64| per_client.iter().map(|e| e.count as f64 * f(e)).sum::<f64>() / total as f64;
    let weighted_accuracy = weighted(|e| e.accuracy);
    let weighted_loss = weighted(|e| e.mean_loss);
    let losses: Vec<Vec<f64>> = per_client.iter().map(|e| e.per_class_loss.clone()).collect();
    let weights = class_count_weights(&per_client);
    let per_class_loss_means = weighted_class_means(&losses, &weights);
    Ok(LocalEvaluation {
        weighted_accuracy,
        weighted_loss,
        per_class_loss_means,
        per_client,
    })
}

pub(crate) fn class_count_weights(per_client: &[Evaluation]) -> Vec<Vec<f64>> {
    per_client
        .iter()
        .map(|e| e.per_class_count.iter().map(|&n| n as f64).collect())
        .collect()
}

/// Tests `per_client_params[i]` on client `i`'s test split.
pub fn evaluate_local_weighted(
    model: &dyn Model,
    per_client_params: &[ParamVector],
    data: &Dataset,
    partition: &Partition,
) -> Result<LocalEvaluation> {
    check_dims(partition.num_clients(), per_client_params.len())?;
    let mut per_client = Vec::with_capacity(per_client_params.len());
    for (i, (params, split)) in per_client_params.iter().zip(&partition.clients).enumerate() {
        if split.test.is_empty() {
            return Err(Error::config("partition", format!("client {i} has an empty local test split")));
        }
        per_client.push(evaluate(model, params, data, &split.test)?);
    }
    combine_local(per_client)
}

/// Per-class mean over clients, `Σ_i w_ic x_ic / Σ_i w_ic` (zero when all
/// weights of a class vanish).
fn weighted_class_means(values: &[Vec<f64>], weights: &[Vec<f64>]) -> Vec<f64> {
    let classes = values.first().map_or(0, Vec::len);
    (0..classes)
        .map(|c| {
            let wsum: f64 = weights.iter().map(|w| w[c]).sum();
            if wsum == 0.0 {
                0.0
            } else {
                values.iter().zip(weights).map(|(v, w)| w[c] * v[c]).sum::<f64>() / wsum
            }
        })
        .collect()
}

/// `Δ_{i,c} = x_{i,c} − x̄_c` where `x̄_c` is the `weights`-weighted mean over
/// clients. With equal weights this is the global-test deviation; with
/// per-client class counts it is the local-test deviation.
pub fn loss_deviation(per_class_losses: &[Vec<f64>], weights: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_dims(per_class_losses.len(), weights.len())?;
    let classes = per_class_losses.first().map_or(0, Vec::len);
    for (l, w) in per_class_losses.iter().zip(weights) {
        check_dims(classes, l.len())?;
        check_dims(classes, w.len())?;
    }
    let means = weighted_class_means(per_class_losses, weights);
    Ok(per_class_losses
        .iter()
        .map(|l| l.iter().zip(&means).map(|(x, m)| x - m).collect())
        .collect())
}

/// Equal weights for `clients` clients over `classes` classes.
pub fn uniform_weights(clients: usize, classes: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0; classes]; clients]
}

#[cfg(test)]
mod tests;
