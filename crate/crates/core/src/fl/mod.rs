//! The federated simulator: run configuration, client/server state, the
//! pFedBreD local round, baselines, and the round loop.
//!
//! Methods are trait objects ([`FederatedMethod`]) looked up by name, and
//! pFedBreD is further parameterized by a [`PriorStrategy`] and a
//! [`MirrorMap`](crate::mirror::MirrorMap), both also selected by name.

mod client;
mod method;
mod runner;
mod strategy;

pub use client::{aggregate, local_round, sample_clients, ClientState, LocalRoundOutput, ServerState, DIVERGENCE_LIMIT};
pub use method::{method_by_name, FedAvg, FederatedMethod, LocalUpdate, MethodContext, PFedBreD, PerFedAvgFo, METHOD_NAMES};
pub use runner::{finetune_trick, run, run_fedavg, run_perfedavg_fo, run_pfedbred, run_rounds, FlProblem, RoundView, RunHistory};
pub use strategy::{
    compute_mu, strategy_by_name, LossGradient, MemorizedEnvelope, MemorizedHybrid, MemorizedHybridVariant, MuInputs,
    PriorStrategy, StrategyKind, StrategyParams, Vanilla,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror::ProxConfig;

/// Evaluation and aggregation tricks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tricks {
    /// Fine-tune each personalized model one full-batch step before its
    /// local test.
    pub ft: bool,
    /// Aggregation momentum, `beta = 2`.
    pub am: bool,
}

/// All hyperparameters of one federated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Main (global-problem) step size.
    pub alpha_m: f64,
    /// Personalized step size; also the proximal solver's inner step.
    pub alpha: f64,
    /// Regularization intensity (prior precision).
    pub lambda: f64,
    pub strategy_params: StrategyParams,
    /// Aggregation momentum.
    pub beta: f64,
    /// Global rounds.
    pub rounds: usize,
    /// Local epochs per round.
    pub local_epochs: usize,
    /// Proximal iterations per local epoch.
    pub prox_steps: usize,
    /// Clients sampled per round.
    pub clients_per_round: usize,
    pub num_clients: usize,
    pub batch_size: usize,
    pub strategy: StrategyKind,
    pub tricks: Tricks,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha_m: 0.01,
            alpha: 0.01,
            lambda: 15.0,
            strategy_params: StrategyParams::default(),
            beta: 1.0,
            rounds: 100,
            local_epochs: 20,
            prox_steps: 5,
            clients_per_round: 4,
            num_clients: 20,
            batch_size: 20,
            strategy: StrategyKind::Mh,
            tricks: Tricks::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("alpha_m", self.alpha_m),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("eta_alpha", self.strategy_params.eta_alpha),
            ("eta", self.strategy_params.eta),
            ("beta", self.beta),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        for (key, v) in [("eta_tilde_alpha", self.strategy_params.eta_tilde_alpha), ("eta_tilde", self.strategy_params.eta_tilde)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if self.alpha_m < 0.0 {
            return Err(Error::config("alpha_m", "must be nonnegative"));
        }
        if self.alpha < 0.0 {
            return Err(Error::config("alpha", "must be nonnegative"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::config("lambda", "must be positive"));
        }
        if self.beta <= 0.0 {
            return Err(Error::config("beta", "must be positive"));
        }
        if self.tricks.am && self.beta != 2.0 {
            return Err(Error::config("beta", "aggregation momentum requires beta = 2"));
        }
        for (key, v) in [("T", self.rounds), ("R", self.local_epochs), ("K", self.prox_steps), ("batch", self.batch_size)] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.num_clients == 0 {
            return Err(Error::config("N", "must be at least 1"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(Error::config("S", format!("must lie in 1..={}", self.num_clients)));
        }
        Ok(())
    }

    pub fn prox_config(&self) -> ProxConfig {
        ProxConfig {
            inner_steps: self.prox_steps,
            inner_step_size: self.alpha,
            batch_size: self.batch_size,
        }
    }
}
