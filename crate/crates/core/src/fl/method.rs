use super::client::guard;
use super::{local_round, ClientState, PriorStrategy, RunConfig};
use crate::error::{Error, Result};
use crate::mirror::{mirror_map_by_name, MirrorMap};
use crate::model::{sample_batch, LossOracle};
use crate::params::ParamVector;
use crate::rng::{client_stream, Purpose};

pub const METHOD_NAMES: [&str; 3] = ["pfedbred", "fedavg", "perfedavg_fo"];

/// Result of one client's local computation in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    pub w: ParamVector,
    /// Envelope gradients of the local steps; empty for methods without them.
    pub env_grads: Vec<ParamVector>,
}

/// What every method sees of one client in one round.
#[derive(Clone, Copy)]
pub struct MethodContext<'a> {
    pub cfg: &'a RunConfig,
    pub oracle: &'a dyn LossOracle,
    /// 1-based round index.
    pub round: usize,
}

pub trait FederatedMethod: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Strategy name for reporting, when the method has one.
    fn strategy_name(&self) -> Option<&'static str> {
        None
    }

    fn local_update(&self, ctx: &MethodContext<'_>, client: &mut ClientState, w_global: &ParamVector) -> Result<LocalUpdate>;

    /// The model a client tests locally, before the FT trick.
    fn personalized(&self, ctx: &MethodContext<'_>, client: &ClientState, w_global: &ParamVector) -> Result<ParamVector>;
}

#[derive(Debug)]
pub struct PFedBreD {
    pub strategy: Box<dyn PriorStrategy>,
    pub mirror: Box<dyn MirrorMap>,
}

impl FederatedMethod for PFedBreD {
    fn name(&self) -> &'static str {
        "pfedbred"
    }

    fn strategy_name(&self) -> Option<&'static str> {
        Some(self.strategy.name())
    }

    fn local_update(&self, ctx: &MethodContext<'_>, client: &mut ClientState, w_global: &ParamVector) -> Result<LocalUpdate> {
        let out = local_round(client, w_global, ctx.round, ctx.cfg, self.strategy.as_ref(), self.mirror.as_ref(), ctx.oracle)?;
        Ok(LocalUpdate {
            w: out.w,
            env_grads: out.env_grads,
        })
    }

    fn personalized(&self, _ctx: &MethodContext<'_>, client: &ClientState, w_global: &ParamVector) -> Result<ParamVector> {
        Ok(client.personalized_or(w_global).clone())
    }
}

/// Plain local SGD with step `α_m`.
#[derive(Debug, Default)]
pub struct FedAvg;

impl FederatedMethod for FedAvg {
    fn name(&self) -> &'static str {
        "fedavg"
    }

    fn local_update(&self, ctx: &MethodContext<'_>, client: &mut ClientState, w_global: &ParamVector) -> Result<LocalUpdate> {
        let cfg = ctx.cfg;
        let mut rng = client_stream(cfg.seed, Purpose::LocalSgd, client.id, ctx.round);
        let n = ctx.oracle.num_examples();
        let mut w = w_global.clone();
        for r in 1..=cfg.local_epochs {
            let batch = sample_batch(n, cfg.batch_size, &mut rng);
            let g = ctx.oracle.gradient(&w, &batch)?;
            w.sub_scaled_assign(cfg.alpha_m, &g)?;
            guard(&w, ctx.round, Some(client.id), r, "local model")?;
        }
        client.memorized_local = w.clone();
        Ok(LocalUpdate { w, env_grads: Vec::new() })
    }

    fn personalized(&self, _ctx: &MethodContext<'_>, _client: &ClientState, w_global: &ParamVector) -> Result<ParamVector> {
        Ok(w_global.clone())
    }
}

/// First-order Per-FedAvg: `w' = w − α ∇f(w; b₁)`, `w ← w − α_m ∇f(w'; b₂)`.
///
/// The outer batches come from the same stream FedAvg uses, so `α = 0`
/// reproduces FedAvg exactly.
#[derive(Debug, Default)]
pub struct PerFedAvgFo;

impl FederatedMethod for PerFedAvgFo {
    fn name(&self) -> &'static str {
        "perfedavg_fo"
    }

    fn local_update(&self, ctx: &MethodContext<'_>, client: &mut ClientState, w_global: &ParamVector) -> Result<LocalUpdate> {
        let cfg = ctx.cfg;
        let mut outer_rng = client_stream(cfg.seed, Purpose::LocalSgd, client.id, ctx.round);
        let mut inner_rng = client_stream(cfg.seed, Purpose::InnerSgd, client.id, ctx.round);
        let n = ctx.oracle.num_examples();
        let mut w = w_global.clone();
        for r in 1..=cfg.local_epochs {
            let inner = sample_batch(n, cfg.batch_size, &mut inner_rng);
            let outer = sample_batch(n, cfg.batch_size, &mut outer_rng);
            let adapted = w.sub_scaled(cfg.alpha, &ctx.oracle.gradient(&w, &inner)?)?;
            guard(&adapted, ctx.round, Some(client.id), r, "adapted model")?;
            let g = ctx.oracle.gradient(&adapted, &outer)?;
            w.sub_scaled_assign(cfg.alpha_m, &g)?;
            guard(&w, ctx.round, Some(client.id), r, "local model")?;
        }
        client.memorized_local = w.clone();
        Ok(LocalUpdate { w, env_grads: Vec::new() })
    }

    /// Two mini-batch steps from the global model, with step `α_m` then `α`.
    fn personalized(&self, ctx: &MethodContext<'_>, client: &ClientState, w_global: &ParamVector) -> Result<ParamVector> {
        let cfg = ctx.cfg;
        let mut rng = client_stream(cfg.seed, Purpose::Evaluation, client.id, ctx.round);
        let n = ctx.oracle.num_examples();
        let mut w = w_global.clone();
        for (step, lr) in [cfg.alpha_m, cfg.alpha].into_iter().enumerate() {
            let batch = sample_batch(n, cfg.batch_size, &mut rng);
            w.sub_scaled_assign(lr, &ctx.oracle.gradient(&w, &batch)?)?;
            guard(&w, ctx.round, Some(client.id), step + 1, "fine-tuned model")?;
        }
        Ok(w)
    }
}

/// Builds a method by name. `pfedbred` takes its strategy from `cfg` and
/// its mirror map from `mirror`.
pub fn method_by_name(name: &str, cfg: &RunConfig, mirror: &str) -> Result<Box<dyn FederatedMethod>> {
    match name {
        "pfedbred" => Ok(Box::new(PFedBreD {
            strategy: cfg.strategy.build(&cfg.strategy_params),
            mirror: mirror_map_by_name(mirror)?,
        })),
        "fedavg" => Ok(Box::new(FedAvg)),
        "perfedavg_fo" => Ok(Box::new(PerFedAvgFo)),
        _ => Err(Error::UnknownName {
            kind: "method",
            name: name.to_string(),
            known: METHOD_NAMES.join(", "),
        }),
    }
}
