use rand::seq::index;

use super::{PriorStrategy, RunConfig};
use crate::error::{check_dims, Error, Result};
use crate::mirror::{bregman_prox, envelope_gradient_first_order, MirrorMap};
use crate::model::{sample_batch, LossOracle};
use crate::params::ParamVector;
use crate::rng::{client_stream, stream, Purpose};

/// Any parameter larger than this in absolute value aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub id: usize,
    /// Personalized model; `None` until the client first participates.
    pub theta: Option<ParamVector>,
    /// The client's local model at the end of its latest round.
    pub memorized_local: ParamVector,
}

impl ClientState {
    pub fn new(id: usize, w0: &ParamVector) -> Self {
        Self {
            id,
            theta: None,
            memorized_local: w0.clone(),
        }
    }

    /// The personalized model, falling back to `w_global` before the first
    /// participation.
    pub fn personalized_or<'a>(&'a self, w_global: &'a ParamVector) -> &'a ParamVector {
        self.theta.as_ref().unwrap_or(w_global)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub w: ParamVector,
    /// Number of completed rounds.
    pub round: usize,
}

impl ServerState {
    pub fn new(w: ParamVector) -> Self {
        Self { w, round: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalRoundOutput {
    pub w: ParamVector,
    pub theta: ParamVector,
    /// `λ (μ − θ)` of every local step.
    pub env_grads: Vec<ParamVector>,
}

pub(crate) fn guard(v: &ParamVector, round: usize, client: Option<usize>, step: usize, what: &str) -> Result<()> {
    let bad = v
        .as_slice()
        .iter()
        .position(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT);
    match bad {
        None => Ok(()),
        Some(j) => Err(Error::Divergence {
            round,
            client,
            step,
            what: format!("{what} coordinate {j} is {}", v[j]),
        }),
    }
}

fn into_divergence(e: Error, round: usize, client: usize, step: usize) -> Error {
    match e {
        Error::Numerical { what, .. } => Error::Divergence {
            round,
            client: Some(client),
            step,
            what,
        },
        Error::Domain { map, index, value, .. } => Error::Divergence {
            round,
            client: Some(client),
            step,
            what: format!("`{map}` iterate left its domain at coordinate {index}: {value}"),
        },
        e => e,
    }
}

/// One client's R local steps of pFedBreD in round `round` (1-based).
///
/// Step `r`: `μ` from the strategy at `w_{r−1}`, `θ_r` as the Bregman prox
/// around `μ`, then `w_r = w_{r−1} − α_m λ (μ − θ_r)`. The client's
/// `memorized_local` is read as-is for every step and replaced by `w_R`
/// afterwards; `theta` is replaced by `θ_R`.
#[allow(clippy::too_many_arguments)]
pub fn local_round(
    client: &mut ClientState,
    w_global: &ParamVector,
    round: usize,
    cfg: &RunConfig,
    strategy: &dyn PriorStrategy,
    mirror: &dyn MirrorMap,
    oracle: &dyn LossOracle,
) -> Result<LocalRoundOutput> {
    check_dims(w_global.len(), client.memorized_local.len())?;
    guard(w_global, round, None, 0, "global model")?;
    let id = client.id;
    let mut meta_rng = client_stream(cfg.seed, Purpose::MetaGradient, id, round);
    let mut prox_rng = client_stream(cfg.seed, Purpose::Prox, id, round);
    let prox_cfg = cfg.prox_config();
    let n = oracle.num_examples();

    let mut w = w_global.clone();
    let mut theta = client.theta.clone().unwrap_or_else(|| w_global.clone());
    check_dims(w.len(), theta.len())?;
    let mut env_grads = Vec::with_capacity(cfg.local_epochs);

    for r in 1..=cfg.local_epochs {
        let (grad, lookahead_grad) = if strategy.needs_loss_gradient() {
            let batch = sample_batch(n, cfg.batch_size, &mut meta_rng);
            let grad = oracle.gradient(&w, &batch)?;
            guard(&grad, round, Some(id), r, "loss gradient")?;
            let lookahead_grad = match strategy.lookahead_point(&w, &grad)? {
                Some(point) => Some(oracle.gradient(&point, &batch)?),
                None => None,
            };
            (Some(grad), lookahead_grad)
        } else {
            (None, None)
        };
        let mu = strategy.compute_mu(&super::MuInputs {
            w_local: &w,
            grad_f_at_w: grad.as_ref(),
            lookahead_grad: lookahead_grad.as_ref(),
            memorized_local: &client.memorized_local,
            theta_prev: &theta,
        })?;
        guard(&mu, round, Some(id), r, "prior mean")?;
        theta = bregman_prox(mirror, cfg.lambda, oracle, &mu, &prox_cfg, &mut prox_rng)
            .map_err(|e| into_divergence(e, round, id, r))?;
        guard(&theta, round, Some(id), r, "personalized model")?;
        let env = envelope_gradient_first_order(cfg.lambda, &mu, &theta)?;
        w.sub_scaled_assign(cfg.alpha_m, &env)?;
        guard(&w, round, Some(id), r, "local model")?;
        env_grads.push(env);
    }

    client.memorized_local = w.clone();
    client.theta = Some(theta.clone());
    Ok(LocalRoundOutput { w, theta, env_grads })
}

/// `(1 − β) w_old + β mean(collected)`.
pub fn aggregate(w_old: &ParamVector, collected: &[ParamVector], beta: f64) -> Result<ParamVector> {
    if collected.is_empty() {
        return Err(Error::Degenerate("nothing to aggregate".into()));
    }
    let mut sum = ParamVector::zeros(w_old.len());
    for w in collected {
        sum.add_assign(w)?;
    }
    let inv = 1.0 / collected.len() as f64;
    Ok(ParamVector::new(
        w_old
            .as_slice()
            .iter()
            .zip(sum.as_slice())
            .map(|(&o, &s)| (1.0 - beta) * o + beta * (s * inv))
            .collect(),
    ))
}

/// The clients taking part in `round`, drawn uniformly without replacement
/// and sorted by id.
pub fn sample_clients(seed: u64, round: usize, num_clients: usize, per_round: usize) -> Vec<usize> {
    let mut rng = stream(seed, Purpose::Sampler, &[round as u64]);
    let mut picked = if per_round >= num_clients {
        (0..num_clients).collect()
    } else {
        index::sample(&mut rng, num_clients, per_round).into_vec()
    };
    picked.sort_unstable();
    picked
}
