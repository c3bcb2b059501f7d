use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::guard;
use super::{aggregate, method_by_name, sample_clients, ClientState, FederatedMethod, MethodContext, RunConfig, ServerState};
use crate::data::{Dataset, Partition};
use crate::error::{check_dims, Error, Result};
use crate::metrics::{
    class_count_weights, evaluate, evaluate_global, gce, loss_deviation, uniform_weights, LocalEvaluation, RoundMetrics,
};
use crate::model::{full_batch, DatasetLoss, LossOracle, Model};
use crate::params::ParamVector;
use crate::rng::{stream, Purpose};

/// One full-batch gradient step with step `step`.
pub fn finetune_trick(theta: &ParamVector, oracle: &dyn LossOracle, step: f64) -> Result<ParamVector> {
    if !(step >= 0.0 && step.is_finite()) {
        return Err(Error::config("step", "must be nonnegative and finite"));
    }
    if step == 0.0 {
        return Ok(theta.clone());
    }
    let g = oracle.gradient(theta, &full_batch(oracle.num_examples()))?;
    theta.sub_scaled(step, &g)
}

/// A model, a dataset and its split among clients.
#[derive(Clone, Copy, Debug)]
pub struct FlProblem<'a> {
    pub model: &'a dyn Model,
    pub data: &'a Dataset,
    pub partition: &'a Partition,
    /// Per-class global-test deviations need every client's personalized
    /// model on the whole global test set each round; off skips them.
    pub track_global_deviation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub method: String,
    pub strategy: Option<String>,
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
    pub final_global: ParamVector,
}

/// State visible to the per-round observer of [`run_rounds`].
pub struct RoundView<'a> {
    pub round: usize,
    pub server: &'a ServerState,
    pub clients: &'a [ClientState],
    pub sampled: &'a [usize],
    /// Last envelope gradient of every sampled client that produced one.
    pub last_env_grads: Vec<ParamVector>,
}

/// The bare round loop over arbitrary client losses: sample, broadcast,
/// update in parallel, aggregate, then call `observe`.
pub fn run_rounds(
    cfg: &RunConfig,
    method: &dyn FederatedMethod,
    oracles: &[&dyn LossOracle],
    w0: ParamVector,
    mut observe: impl FnMut(&RoundView<'_>) -> Result<()>,
) -> Result<(ServerState, Vec<ClientState>)> {
    cfg.validate()?;
    if oracles.len() != cfg.num_clients {
        return Err(Error::config("N", format!("{} clients configured but {} provided", cfg.num_clients, oracles.len())));
    }
    let mut server = ServerState::new(w0);
    let mut clients: Vec<ClientState> = (0..cfg.num_clients).map(|i| ClientState::new(i, &server.w)).collect();
    for round in 1..=cfg.rounds {
        let sampled = sample_clients(cfg.seed, round, cfg.num_clients, cfg.clients_per_round);
        let w_global = &server.w;
        let mut chosen: Vec<&mut ClientState> = clients.iter_mut().filter(|c| sampled.binary_search(&c.id).is_ok()).collect();
        let updates = chosen
            .par_iter_mut()
            .map(|client| {
                let ctx = MethodContext {
                    cfg,
                    oracle: oracles[client.id],
                    round,
                };
                method.local_update(&ctx, client, w_global)
            })
            .collect::<Result<Vec<_>>>()?;
        let collected: Vec<ParamVector> = updates.iter().map(|u| u.w.clone()).collect();
        server.w = aggregate(&server.w, &collected, cfg.beta)?;
        guard(&server.w, round, None, 0, "global model")?;
        server.round = round;
        let last_env_grads = updates.into_iter().filter_map(|u| u.env_grads.into_iter().last()).collect();
        observe(&RoundView {
            round,
            server: &server,
            clients: &clients,
            sampled: &sampled,
            last_env_grads,
        })?;
    }
    Ok((server, clients))
}

fn personalized_models(
    cfg: &RunConfig,
    method: &dyn FederatedMethod,
    oracles: &[&dyn LossOracle],
    view: &RoundView<'_>,
) -> Result<Vec<ParamVector>> {
    view.clients
        .par_iter()
        .map(|client| {
            let oracle = oracles[client.id];
            let ctx = MethodContext {
                cfg,
                oracle,
                round: view.round,
            };
            let p = method.personalized(&ctx, client, &view.server.w)?;
            if cfg.tricks.ft {
                finetune_trick(&p, oracle, cfg.alpha)
            } else {
                Ok(p)
            }
        })
        .collect()
}

fn round_metrics(
    problem: &FlProblem<'_>,
    global_test: &[usize],
    view: &RoundView<'_>,
    personalized: &[ParamVector],
) -> Result<RoundMetrics> {
    let model = problem.model;
    let data = problem.data;
    let (global_acc, _) = evaluate_global(model, &view.server.w, data, global_test)?;
    let per_client = personalized
        .par_iter()
        .zip(&problem.partition.clients)
        .enumerate()
        .map(|(i, (p, split))| {
            if split.test.is_empty() {
                return Err(Error::config("partition", format!("client {i} has an empty local test split")));
            }
            evaluate(model, p, data, &split.test)
        })
        .collect::<Result<Vec<_>>>()?;
    let local: LocalEvaluation = crate::metrics::combine_local(per_client)?;
    let local_losses: Vec<Vec<f64>> = local.per_client.iter().map(|e| e.per_class_loss.clone()).collect();
    let per_class_deviation_local = loss_deviation(&local_losses, &class_count_weights(&local.per_client))?.swap_remove(0);
    let per_class_deviation_global = if problem.track_global_deviation {
        let losses = personalized
            .par_iter()
            .map(|p| evaluate_global(model, p, data, global_test).map(|(_, l)| l))
            .collect::<Result<Vec<_>>>()?;
        loss_deviation(&losses, &uniform_weights(losses.len(), data.num_classes()))?.swap_remove(0)
    } else {
        Vec::new()
    };
    let gce = if view.last_env_grads.len() >= 2 {
        gce(&view.last_env_grads).ok()
    } else {
        None
    };
    Ok(RoundMetrics {
        round: view.round,
        global_acc_globaltest: global_acc,
        personalized_acc_localtest: local.weighted_accuracy,
        mean_local_loss: local.weighted_loss,
        gce,
        per_class_deviation_global,
        per_class_deviation_local,
    })
}

/// Runs `cfg.rounds` rounds of `method` on `problem`, recording metrics
/// after every round. The result depends only on `cfg` and `problem`, not on
/// the size of the rayon pool.
pub fn run(cfg: &RunConfig, method: &dyn FederatedMethod, problem: &FlProblem<'_>) -> Result<RunHistory> {
    cfg.validate()?;
    let model = problem.model;
    check_dims(model.input_dim(), problem.data.dims())?;
    check_dims(model.num_classes(), problem.data.num_classes())?;
    problem.partition.validate(problem.data)?;
    if problem.partition.num_clients() != cfg.num_clients {
        return Err(Error::config(
            "N",
            format!("partition has {} clients, configuration says {}", problem.partition.num_clients(), cfg.num_clients),
        ));
    }
    for (i, split) in problem.partition.clients.iter().enumerate() {
        if split.train.is_empty() {
            return Err(Error::config("partition", format!("client {i} has no training data")));
        }
    }
    let losses: Vec<DatasetLoss<'_>> = problem
        .partition
        .clients
        .iter()
        .map(|c| DatasetLoss::new(model, problem.data, &c.train))
        .collect();
    let oracles: Vec<&dyn LossOracle> = losses.iter().map(|l| l as &dyn LossOracle).collect();
    let global_test = problem.partition.global_test();
    if global_test.is_empty() {
        return Err(Error::config("partition", "no test data"));
    }
    let w0 = model.init_params(&mut stream(cfg.seed, Purpose::Init, &[]));
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let (server, _) = run_rounds(cfg, method, &oracles, w0, |view| {
        let personalized = personalized_models(cfg, method, &oracles, view)?;
        rounds.push(round_metrics(problem, &global_test, view, &personalized)?);
        Ok(())
    })?;
    Ok(RunHistory {
        method: method.name().to_string(),
        strategy: method.strategy_name().map(str::to_string),
        seed: cfg.seed,
        rounds,
        final_global: server.w,
    })
}

pub fn run_pfedbred(cfg: &RunConfig, problem: &FlProblem<'_>, mirror: &str) -> Result<RunHistory> {
    run(cfg, method_by_name("pfedbred", cfg, mirror)?.as_ref(), problem)
}

pub fn run_fedavg(cfg: &RunConfig, problem: &FlProblem<'_>) -> Result<RunHistory> {
    run(cfg, &super::FedAvg, problem)
}

pub fn run_perfedavg_fo(cfg: &RunConfig, problem: &FlProblem<'_>) -> Result<RunHistory> {
    run(cfg, &super::PerFedAvgFo, problem)
}
